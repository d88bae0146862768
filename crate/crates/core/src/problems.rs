//! Local cost oracles and the benchmark problem families.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ProblemError {
    #[error("invalid problem parameter: {0}")]
    Invalid(String),
    #[error("could not draw a problem instance with the requested rank after {0} attempts")]
    Degenerate(usize),
    #[error("P-L constant {nu} failed validation at {failures} of {samples} sample points")]
    PlValidation { nu: f64, failures: usize, samples: usize },
}

/// A single agent's local cost.
///
/// `smoothness` is a Lipschitz constant of the gradient. Oracles without an
/// analytic gradient return `None` from `gradient` and can only be used by
/// the zeroth-order algorithm.
pub trait CostOracle: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }
    fn smoothness(&self) -> f64;
}

/// `(a/2)||x - c||^2`, or `1/2 (x-c)^T H (x-c)` when a Hessian is given.
#[derive(Debug, Clone)]
pub struct QuadraticCost {
    pub center: Vec<f64>,
    pub curvature: f64,
    pub hessian: Option<DMatrix<f64>>,
}

impl QuadraticCost {
    pub fn isotropic(center: Vec<f64>, curvature: f64) -> Self {
        QuadraticCost {
            center,
            curvature,
            hessian: None,
        }
    }

    /// `hessian` must be symmetric positive semidefinite.
    pub fn with_hessian(center: Vec<f64>, hessian: DMatrix<f64>) -> Self {
        let lmax = SymmetricEigen::new(hessian.clone()).eigenvalues.max();
        QuadraticCost {
            center,
            curvature: lmax,
            hessian: Some(hessian),
        }
    }
}

impl CostOracle for QuadraticCost {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        match &self.hessian {
            None => 0.5 * self.curvature * d.iter().map(|t| t * t).sum::<f64>(),
            Some(h) => {
                let dv = DVector::from_vec(d);
                0.5 * dv.dot(&(h * &dv))
            }
        }
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let d: Vec<f64> = x.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        Some(match &self.hessian {
            None => d.iter().map(|t| self.curvature * t).collect(),
            Some(h) => (h * DVector::from_vec(d)).iter().copied().collect(),
        })
    }

    fn smoothness(&self) -> f64 {
        self.curvature
    }
}

/// `x^2 + 3 sin^2(x) + shift * x` on the real line.
#[derive(Debug, Clone)]
pub struct SineCost {
    pub shift: f64,
}

impl CostOracle for SineCost {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, x: &[f64]) -> f64 {
        let s = x[0].sin();
        x[0] * x[0] + 3.0 * s * s + self.shift * x[0]
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![2.0 * x[0] + 3.0 * (2.0 * x[0]).sin() + self.shift])
    }

    fn smoothness(&self) -> f64 {
        8.0
    }
}

/// `||A x - b||^2`.
#[derive(Debug, Clone)]
pub struct LeastSquaresCost {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    lipschitz: f64,
}

impl LeastSquaresCost {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Self {
        let ata = a.transpose() * &a;
        let lipschitz = 2.0 * SymmetricEigen::new(ata).eigenvalues.max().max(0.0);
        LeastSquaresCost { a, b, lipschitz }
    }
}

impl CostOracle for LeastSquaresCost {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let r = &self.a * DVector::from_column_slice(x) - &self.b;
        r.norm_squared()
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let r = &self.a * DVector::from_column_slice(x) - &self.b;
        Some((self.a.tr_mul(&r) * 2.0).iter().copied().collect())
    }

    fn smoothness(&self) -> f64 {
        self.lipschitz
    }
}

/// Binary logistic loss with the nonconvex regularizer
/// `sum_l lambda * mu * x_l^2 / (1 + mu * x_l^2)`. Rows of `features` are
/// samples; labels are +-1.
#[derive(Debug, Clone)]
pub struct LogisticCost {
    pub features: DMatrix<f64>,
    pub labels: Vec<f64>,
    pub lambda: f64,
    pub mu: f64,
    lipschitz: f64,
}

impl LogisticCost {
    pub fn new(features: DMatrix<f64>, labels: Vec<f64>, lambda: f64, mu: f64) -> Self {
        let m = features.nrows() as f64;
        let ztz = features.transpose() * &features;
        let lmax = SymmetricEigen::new(ztz).eigenvalues.max().max(0.0);
        let lipschitz = lmax / (4.0 * m) + 2.0 * lambda * mu;
        LogisticCost {
            features,
            labels,
            lambda,
            mu,
            lipschitz,
        }
    }
}

fn log1p_exp_neg(t: f64) -> f64 {
    // log(1 + exp(-t)) without overflow
    if t > 0.0 {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl CostOracle for LogisticCost {
    fn dim(&self) -> usize {
        self.features.ncols()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let m = self.features.nrows();
        let margins = &self.features * DVector::from_column_slice(x);
        let loss: f64 = (0..m).map(|s| log1p_exp_neg(self.labels[s] * margins[s])).sum::<f64>() / m as f64;
        let reg: f64 = x
            .iter()
            .map(|&t| self.lambda * self.mu * t * t / (1.0 + self.mu * t * t))
            .sum();
        loss + reg
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let m = self.features.nrows();
        let margins = &self.features * DVector::from_column_slice(x);
        let weights = DVector::from_fn(m, |s, _| {
            -self.labels[s] * sigmoid(-self.labels[s] * margins[s]) / m as f64
        });
        let mut g = self.features.tr_mul(&weights);
        for (l, &t) in x.iter().enumerate() {
            let q = 1.0 + self.mu * t * t;
            g[l] += 2.0 * self.lambda * self.mu * t / (q * q);
        }
        Some(g.iter().copied().collect())
    }

    fn smoothness(&self) -> f64 {
        self.lipschitz
    }
}

/// `c^T x`. Its gradient is constant, so any nonnegative number is a valid
/// smoothness constant; `declared_smoothness` is what gets reported.
#[derive(Debug, Clone)]
pub struct LinearCost {
    pub coeffs: Vec<f64>,
    pub declared_smoothness: f64,
}

impl CostOracle for LinearCost {
    fn dim(&self) -> usize {
        self.coeffs.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.coeffs).map(|(a, c)| a * c).sum()
    }

    fn gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        Some(self.coeffs.clone())
    }

    fn smoothness(&self) -> f64 {
        self.declared_smoothness
    }
}

/// Hides the analytic gradient of the wrapped oracle.
#[derive(Debug)]
pub struct ValueOnly(pub Arc<dyn CostOracle>);

impl CostOracle for ValueOnly {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.0.value(x)
    }
    fn smoothness(&self) -> f64 {
        self.0.smoothness()
    }
}

/// Counts value and gradient calls on the wrapped oracle.
#[derive(Debug)]
pub struct CallCounter {
    inner: Arc<dyn CostOracle>,
    values: AtomicUsize,
    gradients: AtomicUsize,
}

impl CallCounter {
    pub fn new(inner: Arc<dyn CostOracle>) -> Self {
        CallCounter {
            inner,
            values: AtomicUsize::new(0),
            gradients: AtomicUsize::new(0),
        }
    }
    pub fn value_calls(&self) -> usize {
        self.values.load(Ordering::SeqCst)
    }
    pub fn gradient_calls(&self) -> usize {
        self.gradients.load(Ordering::SeqCst)
    }
    pub fn reset(&self) {
        self.values.store(0, Ordering::SeqCst);
        self.gradients.store(0, Ordering::SeqCst);
    }
}

impl CostOracle for CallCounter {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.values.fetch_add(1, Ordering::SeqCst);
        self.inner.value(x)
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.gradients.fetch_add(1, Ordering::SeqCst);
        self.inner.gradient(x)
    }
    fn smoothness(&self) -> f64 {
        self.inner.smoothness()
    }
}

/// Central difference of `f` along each coordinate.
pub fn finite_diff_gradient(oracle: &dyn CostOracle, x: &[f64], h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|l| {
            y[l] = x[l] + h;
            let fp = oracle.value(&y);
            y[l] = x[l] - h;
            let fm = oracle.value(&y);
            y[l] = x[l];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// `x -> offset + map * x`, used for projections onto affine minimizer sets.
#[derive(Debug, Clone)]
pub struct AffineMap {
    pub offset: DVector<f64>,
    pub map: DMatrix<f64>,
}

impl AffineMap {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (&self.offset + &self.map * DVector::from_column_slice(x))
            .iter()
            .copied()
            .collect()
    }
}

/// Serializable description of a benchmark instance. The text form is a
/// flat table with a `kind` tag; see `to_toml` / `from_toml_str`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Quadratic {
        n: usize,
        p: usize,
        seed: u64,
        #[serde(default = "one")]
        scale: f64,
    },
    SinePl {
        n: usize,
        #[serde(default)]
        shifts: Option<Vec<f64>>,
        #[serde(default)]
        shift_scale: f64,
        #[serde(default)]
        seed: u64,
    },
    RankDeficientLs {
        n: usize,
        p: usize,
        rank: usize,
        rows: usize,
        seed: u64,
        #[serde(default)]
        consistent: bool,
    },
    Logistic {
        n: usize,
        p: usize,
        m: usize,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "one")]
        mu: f64,
        #[serde(default = "default_flip")]
        flip_prob: f64,
        seed: u64,
    },
}

fn one() -> f64 {
    1.0
}
fn default_lambda() -> f64 {
    1e-3
}
fn default_flip() -> f64 {
    0.1
}

impl ProblemSpec {
    pub fn n(&self) -> usize {
        match self {
            ProblemSpec::Quadratic { n, .. }
            | ProblemSpec::SinePl { n, .. }
            | ProblemSpec::RankDeficientLs { n, .. }
            | ProblemSpec::Logistic { n, .. } => *n,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&crate::tagged::to_flat(self, "kind").expect("spec serializes")).expect("table serializes")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ProblemError> {
        let table: toml::Table = toml::from_str(text).map_err(|e| ProblemError::Invalid(e.to_string()))?;
        crate::tagged::from_flat(table, "kind").map_err(ProblemError::Invalid)
    }

    pub fn build(&self) -> Result<ProblemInstance, ProblemError> {
        let mut inst = match self {
            ProblemSpec::Quadratic { n, p, seed, scale } => quadratic_problem(*n, *p, *seed, *scale)?,
            ProblemSpec::SinePl {
                n,
                shifts,
                shift_scale,
                seed,
            } => match shifts {
                Some(s) => {
                    if s.len() != *n {
                        return Err(ProblemError::Invalid(format!("{} shifts for n={n}", s.len())));
                    }
                    sine_pl_problem(s.clone())?
                }
                None => sine_pl_problem(random_zero_sum(*n, *shift_scale, *seed))?,
            },
            ProblemSpec::RankDeficientLs {
                n,
                p,
                rank,
                rows,
                seed,
                consistent,
            } => rank_deficient_ls_problem(*n, *p, *rank, *rows, *seed, *consistent)?,
            ProblemSpec::Logistic {
                n,
                p,
                m,
                lambda,
                mu,
                flip_prob,
                seed,
            } => logistic_problem(*n, *p, *m, *lambda, *mu, *flip_prob, *seed)?,
        };
        inst.spec = Some(self.clone());
        Ok(inst)
    }
}

/// A problem on `n` agents sharing a decision variable in `R^p`. The global
/// cost is the average of the local costs.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub oracles: Vec<Arc<dyn CostOracle>>,
    pub spec: Option<ProblemSpec>,
    pub label: String,
    /// Common smoothness constant (max over agents unless overridden).
    pub smoothness: f64,
    pub f_star: Option<f64>,
    pub pl_nu: Option<f64>,
    pub minimizer: Option<Vec<f64>>,
    pub projection: Option<AffineMap>,
}

impl ProblemInstance {
    pub fn from_oracles(label: &str, oracles: Vec<Arc<dyn CostOracle>>) -> Result<Self, ProblemError> {
        if oracles.is_empty() {
            return Err(ProblemError::Invalid("no agents".into()));
        }
        let p = oracles[0].dim();
        if p == 0 || oracles.iter().any(|o| o.dim() != p) {
            return Err(ProblemError::Invalid(
                "agents disagree on dimension or dimension is 0".into(),
            ));
        }
        let smoothness = oracles.iter().map(|o| o.smoothness()).fold(0.0, f64::max);
        Ok(ProblemInstance {
            oracles,
            spec: None,
            label: label.to_string(),
            smoothness,
            f_star: None,
            pl_nu: None,
            minimizer: None,
            projection: None,
        })
    }

    pub fn n(&self) -> usize {
        self.oracles.len()
    }

    pub fn dim(&self) -> usize {
        self.oracles[0].dim()
    }

    pub fn has_gradients(&self) -> bool {
        let zero = vec![0.0; self.dim()];
        self.oracles.iter().all(|o| o.gradient(&zero).is_some())
    }

    pub fn global_value(&self, x: &[f64]) -> f64 {
        self.oracles.iter().map(|o| o.value(x)).sum::<f64>() / self.n() as f64
    }

    pub fn global_gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut acc = vec![0.0; self.dim()];
        for o in &self.oracles {
            for (a, g) in acc.iter_mut().zip(o.gradient(x)?) {
                *a += g;
            }
        }
        let n = self.n() as f64;
        Some(acc.into_iter().map(|a| a / n).collect())
    }

    pub fn project(&self, x: &[f64]) -> Option<Vec<f64>> {
        if let Some(pm) = &self.projection {
            return Some(pm.apply(x));
        }
        self.minimizer.clone()
    }

    /// The global cost as a single oracle.
    pub fn global_oracle(&self) -> GlobalCost<'_> {
        GlobalCost(self)
    }
}

#[derive(Debug)]
pub struct GlobalCost<'a>(pub &'a ProblemInstance);

impl CostOracle for GlobalCost<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.0.global_value(x)
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.0.global_gradient(x)
    }
    fn smoothness(&self) -> f64 {
        self.0.smoothness
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

/// `len` Gaussian draws shifted to sum to zero.
pub fn random_zero_sum(len: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = normal_vec(&mut rng, len, scale);
    let mean = v.iter().sum::<f64>() / len.max(1) as f64;
    v.iter_mut().for_each(|t| *t -= mean);
    v
}

/// `f_i = 1/2 ||x - c_i||^2` with the given centers.
pub fn quadratic_from_centers(centers: Vec<Vec<f64>>) -> Result<ProblemInstance, ProblemError> {
    let n = centers.len();
    if n == 0 {
        return Err(ProblemError::Invalid("no centers".into()));
    }
    let p = centers[0].len();
    let mut mean = vec![0.0; p];
    for c in &centers {
        for (m, t) in mean.iter_mut().zip(c) {
            *m += t / n as f64;
        }
    }
    let f_star = centers
        .iter()
        .map(|c| 0.5 * c.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum::<f64>()
        / n as f64;
    let oracles: Vec<Arc<dyn CostOracle>> = centers
        .into_iter()
        .map(|c| Arc::new(QuadraticCost::isotropic(c, 1.0)) as Arc<dyn CostOracle>)
        .collect();
    let mut inst = ProblemInstance::from_oracles("quadratic", oracles)?;
    inst.f_star = Some(f_star);
    inst.pl_nu = Some(1.0);
    inst.projection = Some(AffineMap {
        offset: DVector::from_vec(mean.clone()),
        map: DMatrix::zeros(p, p),
    });
    inst.minimizer = Some(mean);
    Ok(inst)
}

/// Random centers drawn from `N(0, scale^2)`.
pub fn quadratic_problem(n: usize, p: usize, seed: u64, scale: f64) -> Result<ProblemInstance, ProblemError> {
    if n == 0 || p == 0 {
        return Err(ProblemError::Invalid("quadratic needs n >= 1 and p >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = (0..n).map(|_| normal_vec(&mut rng, p, scale)).collect();
    quadratic_from_centers(centers)
}

/// `f_i = x^2 + 3 sin^2 x + b_i x` with `sum b_i = 0`, so the global cost is
/// `x^2 + 3 sin^2 x` with `f* = 0` and P-L constant `1/32`.
pub fn sine_pl_problem(shifts: Vec<f64>) -> Result<ProblemInstance, ProblemError> {
    if shifts.is_empty() {
        return Err(ProblemError::Invalid("no agents".into()));
    }
    let total: f64 = shifts.iter().sum();
    let scale = shifts.iter().map(|s| s.abs()).fold(1.0, f64::max);
    if total.abs() > 1e-12 * scale * shifts.len() as f64 {
        return Err(ProblemError::Invalid(format!("shifts must sum to zero, got {total}")));
    }
    let oracles: Vec<Arc<dyn CostOracle>> = shifts
        .into_iter()
        .map(|b| Arc::new(SineCost { shift: b }) as Arc<dyn CostOracle>)
        .collect();
    let mut inst = ProblemInstance::from_oracles("sine_pl", oracles)?;
    inst.f_star = Some(0.0);
    inst.pl_nu = Some(1.0 / 32.0);
    inst.minimizer = Some(vec![0.0]);
    inst.projection = Some(AffineMap {
        offset: DVector::zeros(1),
        map: DMatrix::zeros(1, 1),
    });
    Ok(inst)
}

const RANK_RETRIES: usize = 100;

/// Least squares `f_i = ||A_i x - b_i||^2` where the stacked `A` has rank
/// `rank < p`, so the minimizer set is an affine subspace.
pub fn rank_deficient_ls_problem(
    n: usize,
    p: usize,
    rank: usize,
    rows: usize,
    seed: u64,
    consistent: bool,
) -> Result<ProblemInstance, ProblemError> {
    if n == 0 || p == 0 || rows == 0 {
        return Err(ProblemError::Invalid("least squares needs n, p, rows >= 1".into()));
    }
    if rank == 0 || rank >= p || rank > n * rows {
        return Err(ProblemError::Invalid(format!(
            "rank must satisfy 0 < rank < p and rank <= n*rows (rank={rank}, p={p})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RANK_RETRIES {
        let basis = DMatrix::from_vec(rank, p, normal_vec(&mut rng, rank * p, 1.0 / (p as f64).sqrt()));
        let x_true = DVector::from_vec(normal_vec(&mut rng, p, 1.0));
        let mut blocks = Vec::with_capacity(n);
        for _ in 0..n {
            let g = DMatrix::from_vec(
                rows,
                rank,
                normal_vec(&mut rng, rows * rank, 1.0 / (rows as f64).sqrt()),
            );
            let a = g * &basis;
            let mut b = &a * &x_true;
            if !consistent {
                b += DVector::from_vec(normal_vec(&mut rng, rows, 0.5));
            }
            blocks.push((a, b));
        }
        let mut ata = DMatrix::zeros(p, p);
        let mut atb = DVector::zeros(p);
        for (a, b) in &blocks {
            ata += a.transpose() * a;
            atb += a.tr_mul(b);
        }
        let eig = SymmetricEigen::new(ata.clone());
        let lmax = eig.eigenvalues.max();
        let tol = 1e-9 * lmax.max(f64::MIN_POSITIVE);
        let positive: Vec<usize> = (0..p).filter(|&i| eig.eigenvalues[i] > tol).collect();
        if positive.len() != rank {
            continue;
        }
        let lmin_pos = positive
            .iter()
            .map(|&i| eig.eigenvalues[i])
            .fold(f64::INFINITY, f64::min);
        let mut row_proj = DMatrix::zeros(p, p);
        let mut x_p = DVector::zeros(p);
        for &i in &positive {
            let u = eig.eigenvectors.column(i);
            row_proj += u * u.transpose();
            x_p += u * (u.dot(&atb) / eig.eigenvalues[i]);
        }
        let oracles: Vec<Arc<dyn CostOracle>> = blocks
            .into_iter()
            .map(|(a, b)| Arc::new(LeastSquaresCost::new(a, b)) as Arc<dyn CostOracle>)
            .collect();
        let mut inst = ProblemInstance::from_oracles("rank_deficient_ls", oracles)?;
        let xp: Vec<f64> = x_p.iter().copied().collect();
        inst.f_star = Some(inst.global_value(&xp));
        let nu = 2.0 * lmin_pos / n as f64;
        inst.pl_nu = Some(nu);
        inst.projection = Some(AffineMap {
            offset: x_p,
            map: DMatrix::identity(p, p) - row_proj,
        });
        inst.minimizer = Some(xp);
        validate_pl(&inst, nu, seed ^ 0x5eed, 200)?;
        return Ok(inst);
    }
    Err(ProblemError::Degenerate(RANK_RETRIES))
}

/// Samples `1/2 ||grad f||^2 >= nu (f - f*)` at Gaussian points around the
/// minimizer and fails if any point violates it beyond rounding.
fn validate_pl(inst: &ProblemInstance, nu: f64, seed: u64, samples: usize) -> Result<(), ProblemError> {
    let f_star = inst.f_star.unwrap_or(0.0);
    let center = inst.minimizer.clone().unwrap_or_else(|| vec![0.0; inst.dim()]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    for _ in 0..samples {
        let x: Vec<f64> = center
            .iter()
            .zip(normal_vec(&mut rng, inst.dim(), 2.0))
            .map(|(c, d)| c + d)
            .collect();
        let g = inst.global_gradient(&x).expect("least squares has gradients");
        let lhs = 0.5 * g.iter().map(|t| t * t).sum::<f64>();
        let gap = inst.global_value(&x) - f_star;
        if lhs < nu * gap - 1e-9 * (1.0 + gap.abs()) {
            failures += 1;
        }
    }
    if failures > 0 {
        return Err(ProblemError::PlValidation { nu, failures, samples });
    }
    Ok(())
}

/// Logistic regression with a nonconvex regularizer. Each agent holds `m`
/// samples with standard normal features; labels are the sign of a hidden
/// linear model, each flipped with probability `flip_prob`.
pub fn logistic_problem(
    n: usize,
    p: usize,
    m: usize,
    lambda: f64,
    mu: f64,
    flip_prob: f64,
    seed: u64,
) -> Result<ProblemInstance, ProblemError> {
    if n == 0 || p == 0 || m == 0 {
        return Err(ProblemError::Invalid("logistic needs n, p, m >= 1".into()));
    }
    if !(0.0..=1.0).contains(&flip_prob) || lambda < 0.0 || mu < 0.0 {
        return Err(ProblemError::Invalid(
            "need flip_prob in [0,1], lambda >= 0, mu >= 0".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w_star = DVector::from_vec(normal_vec(&mut rng, p, 1.0));
    let flip = Bernoulli::new(flip_prob).unwrap();
    let mut oracles: Vec<Arc<dyn CostOracle>> = Vec::with_capacity(n);
    for _ in 0..n {
        let z = DMatrix::from_row_slice(m, p, &normal_vec(&mut rng, m * p, 1.0));
        let scores = &z * &w_star;
        let labels: Vec<f64> = scores
            .iter()
            .map(|&s| {
                let y = if s >= 0.0 { 1.0 } else { -1.0 };
                if flip.sample(&mut rng) {
                    -y
                } else {
                    y
                }
            })
            .collect();
        oracles.push(Arc::new(LogisticCost::new(z, labels, lambda, mu)));
    }
    ProblemInstance::from_oracles("logistic", oracles)
}

/// Linear costs `c_i^T x`. Used to exercise exact-estimator corner cases.
pub fn linear_problem(coeffs: Vec<Vec<f64>>, declared_smoothness: f64) -> Result<ProblemInstance, ProblemError> {
    let oracles: Vec<Arc<dyn CostOracle>> = coeffs
        .into_iter()
        .map(|c| {
            Arc::new(LinearCost {
                coeffs: c,
                declared_smoothness,
            }) as Arc<dyn CostOracle>
        })
        .collect();
    ProblemInstance::from_oracles("linear", oracles)
}
