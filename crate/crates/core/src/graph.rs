//! Communication graphs and the spectral objects the algorithms and their
//! certificates are built from.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Eigenvalues at or below `DEFAULT_ZERO_TOL * rho(L)` are treated as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-9;
/// Number of redraws `Graph::random_geometric` attempts before giving up.
pub const DEFAULT_CONNECT_RETRIES: usize = 1000;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("graph needs at least one node")]
    Empty,
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    NodeOutOfRange(usize, usize, usize),
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("edge ({0}, {1}) has non-positive or non-finite weight {2}")]
    BadWeight(usize, usize, f64),
    #[error("edge ({0}, {1}) listed twice")]
    DuplicateEdge(usize, usize),
    #[error("graph is disconnected ({0} zero eigenvalues)")]
    Disconnected(usize),
    #[error("no connected geometric graph with n={n}, radius={radius} after {retries} draws")]
    ConnectivityBudget { n: usize, radius: f64, retries: usize },
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("edge list parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Undirected graph with positive symmetric weights and no self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    weights: DMatrix<f64>,
}

impl Graph {
    /// Builds a graph from an undirected edge list. Each pair may appear once,
    /// in either orientation.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Graph, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut weights = DMatrix::zeros(n, n);
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(GraphError::NodeOutOfRange(i, j, n));
            }
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(GraphError::BadWeight(i, j, w));
            }
            if weights[(i, j)] != 0.0 {
                return Err(GraphError::DuplicateEdge(i, j));
            }
            weights[(i, j)] = w;
            weights[(j, i)] = w;
        }
        Ok(Graph { n, weights })
    }

    pub fn path(n: usize) -> Result<Graph, GraphError> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i, 1.0)).collect();
        Graph::from_edges(n, &edges)
    }

    /// Cycle on `n >= 3` nodes.
    pub fn ring(n: usize) -> Result<Graph, GraphError> {
        if n < 3 {
            return Err(GraphError::Invalid(format!("ring needs n >= 3, got {n}")));
        }
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        Graph::from_edges(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Graph, GraphError> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j, 1.0));
            }
        }
        Graph::from_edges(n, &edges)
    }

    /// Unit-weight random geometric graph on the unit square: nodes closer
    /// than `radius` are joined. Disconnected draws are discarded and redrawn
    /// from the same seeded stream, so the result is a function of the seed.
    pub fn random_geometric(n: usize, radius: f64, seed: u64) -> Result<Graph, GraphError> {
        Graph::random_geometric_with_budget(n, radius, seed, DEFAULT_CONNECT_RETRIES)
    }

    pub fn random_geometric_with_budget(n: usize, radius: f64, seed: u64, retries: usize) -> Result<Graph, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(GraphError::Invalid(format!("radius must be positive, got {radius}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..retries.max(1) {
            let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
                    if (dx * dx + dy * dy).sqrt() < radius {
                        edges.push((i, j, 1.0));
                    }
                }
            }
            let g = Graph::from_edges(n, &edges)?;
            if g.is_connected() {
                return Ok(g);
            }
        }
        Err(GraphError::ConnectivityBudget { n, radius, retries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.weights[(i, j)] > 0.0).collect()
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.weights.row(i).sum()
    }

    /// Edges with `i < j`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.weights[(i, j)] > 0.0 {
                    out.push((i, j, self.weights[(i, j)]));
                }
            }
        }
        out
    }

    /// Weighted Laplacian `Deg - A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = -self.weights.clone();
        for i in 0..self.n {
            l[(i, i)] = self.degree(i);
        }
        l
    }

    /// Breadth-first reachability from node 0.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for (j, s) in seen.iter_mut().enumerate() {
                if !*s && self.weights[(i, j)] > 0.0 {
                    *s = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.n
    }

    /// Text form: a header line `n <count>` followed by one `i j weight`
    /// line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("n {}\n", self.n);
        for (i, j, w) in self.edges() {
            writeln!(s, "{i} {j} {w}").unwrap();
        }
        s
    }

    /// Parses the format written by `to_edge_list`. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn parse_edge_list(text: &str) -> Result<Graph, GraphError> {
        let mut n = None;
        let mut edges = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| GraphError::Parse {
                line: idx + 1,
                msg: msg.to_string(),
            };
            let toks: Vec<&str> = line.split_whitespace().collect();
            match n {
                None => {
                    if toks.len() != 2 || toks[0] != "n" {
                        return Err(err("expected header `n <count>`"));
                    }
                    n = Some(toks[1].parse::<usize>().map_err(|_| err("bad node count"))?);
                }
                Some(_) => {
                    if toks.len() != 3 {
                        return Err(err("expected `i j weight`"));
                    }
                    let i = toks[0].parse::<usize>().map_err(|_| err("bad node index"))?;
                    let j = toks[1].parse::<usize>().map_err(|_| err("bad node index"))?;
                    let w = toks[2].parse::<f64>().map_err(|_| err("bad weight"))?;
                    edges.push((i, j, w));
                }
            }
        }
        let n = n.ok_or(GraphError::Parse {
            line: 0,
            msg: "missing header".into(),
        })?;
        Graph::from_edges(n, &edges)
    }

    pub fn read_edge_list(path: &Path) -> Result<Graph, GraphError> {
        Graph::parse_edge_list(&std::fs::read_to_string(path)?)
    }

    pub fn write_edge_list(&self, path: &Path) -> Result<(), GraphError> {
        std::fs::write(path, self.to_edge_list())?;
        Ok(())
    }
}

/// Laplacian spectrum and the derived operators.
///
/// `pinv` is the Moore-Penrose pseudoinverse of the Laplacian and
/// `projector` is `I - 11^T/n`. For a single node everything is zero.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub laplacian: DMatrix<f64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Columns match `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    pub rho: f64,
    /// Smallest positive eigenvalue; 0 when `n == 1`.
    pub rho2: f64,
    pub projector: DMatrix<f64>,
    pub pinv: DMatrix<f64>,
    pub zero_tol: f64,
}

impl SpectralData {
    pub fn new(graph: &Graph) -> Result<SpectralData, GraphError> {
        SpectralData::with_tolerance(graph, DEFAULT_ZERO_TOL)
    }

    pub fn with_tolerance(graph: &Graph, zero_tol: f64) -> Result<SpectralData, GraphError> {
        let n = graph.n();
        let laplacian = graph.laplacian();
        let eig = SymmetricEigen::new(laplacian.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);

        let rho = eigenvalues[n - 1].max(0.0);
        let threshold = zero_tol * rho;
        let zeros = eigenvalues.iter().filter(|&&l| l <= threshold).count();
        if n > 1 && (zeros != 1 || rho == 0.0) {
            return Err(GraphError::Disconnected(zeros.max(2)));
        }
        let rho2 = if n > 1 { eigenvalues[1] } else { 0.0 };

        let mut pinv = DMatrix::zeros(n, n);
        for (c, &lam) in eigenvalues.iter().enumerate() {
            if lam > threshold && lam > 0.0 {
                let u = eigenvectors.column(c);
                pinv += (u * u.transpose()) / lam;
            }
        }
        let projector = consensus_projector(n);
        Ok(SpectralData {
            laplacian,
            eigenvalues,
            eigenvectors,
            rho,
            rho2,
            projector,
            pinv,
            zero_tol,
        })
    }

    pub fn n(&self) -> usize {
        self.laplacian.nrows()
    }

    /// Frobenius residuals of `KL = L`, `LK = L`, `QL = K`, `LQ = K`.
    pub fn identity_residuals(&self) -> [f64; 4] {
        let (l, k, q) = (&self.laplacian, &self.projector, &self.pinv);
        [
            (k * l - l).norm(),
            (l * k - l).norm(),
            (q * l - k).norm(),
            (l * q - k).norm(),
        ]
    }
}

/// `I - 11^T / n`.
pub fn consensus_projector(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path3_spectrum() {
        let g = Graph::path(3).unwrap();
        let sd = SpectralData::new(&g).unwrap();
        let want = [0.0, 1.0, 3.0];
        for (a, b) in sd.eigenvalues.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert!((sd.rho - 3.0).abs() < 1e-12);
        assert!((sd.rho2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn complete4_spectrum() {
        let sd = SpectralData::new(&Graph::complete(4).unwrap()).unwrap();
        assert!(sd.eigenvalues[0].abs() < 1e-12);
        for &l in &sd.eigenvalues[1..] {
            assert!((l - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_node_path() {
        let sd = SpectralData::new(&Graph::path(2).unwrap()).unwrap();
        assert!((sd.rho - 2.0).abs() < 1e-12);
        assert!((sd.rho2 - 2.0).abs() < 1e-12);
        assert!((sd.pinv[(0, 0)] - 0.25).abs() < 1e-12);
        assert!((sd.pinv[(0, 1)] + 0.25).abs() < 1e-12);
    }

    #[test]
    fn disconnected_rejected() {
        let g = Graph::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert!(!g.is_connected());
        assert!(matches!(SpectralData::new(&g), Err(GraphError::Disconnected(_))));
        let g = Graph::from_edges(3, &[]).unwrap();
        assert!(matches!(SpectralData::new(&g), Err(GraphError::Disconnected(_))));
    }

    #[test]
    fn single_node() {
        let g = Graph::from_edges(1, &[]).unwrap();
        assert!(g.is_connected());
        let sd = SpectralData::new(&g).unwrap();
        assert_eq!(sd.rho, 0.0);
        assert_eq!(sd.projector[(0, 0)], 0.0);
    }

    #[test]
    fn bad_edges() {
        assert!(matches!(
            Graph::from_edges(3, &[(0, 0, 1.0)]),
            Err(GraphError::SelfLoop(0))
        ));
        assert!(matches!(
            Graph::from_edges(3, &[(0, 1, -1.0)]),
            Err(GraphError::BadWeight(..))
        ));
        assert!(matches!(
            Graph::from_edges(3, &[(0, 5, 1.0)]),
            Err(GraphError::NodeOutOfRange(..))
        ));
        assert!(matches!(
            Graph::from_edges(3, &[(0, 1, 1.0), (1, 0, 2.0)]),
            Err(GraphError::DuplicateEdge(..))
        ));
        assert!(matches!(Graph::from_edges(0, &[]), Err(GraphError::Empty)));
    }

    #[test]
    fn edge_list_round_trip() {
        let g = Graph::from_edges(4, &[(0, 1, 0.5), (1, 2, 1.25), (2, 3, 3.0), (0, 3, 1e-3)]).unwrap();
        let back = Graph::parse_edge_list(&g.to_edge_list()).unwrap();
        assert_eq!(g, back);
        assert!(Graph::parse_edge_list("3\n0 1 1").is_err());
        assert!(Graph::parse_edge_list("n 3\n0 1").is_err());
    }

    #[test]
    fn rgg_is_seeded_and_connected() {
        let a = Graph::random_geometric(20, 0.5, 7).unwrap();
        let b = Graph::random_geometric(20, 0.5, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.is_connected());
        let err = Graph::random_geometric_with_budget(30, 0.01, 1, 5).unwrap_err();
        assert!(matches!(err, GraphError::ConnectivityBudget { .. }));
    }
}
