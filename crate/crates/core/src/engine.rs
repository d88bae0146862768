//! Synchronous simulation of the primal-dual iterations on a network.
//!
//! Stacked agent variables are `n x p` matrices whose row `i` belongs to
//! agent `i`. Laplacian products are formed agent by agent from neighbor
//! differences, so each row of the next state depends only on the current
//! snapshot of that agent and its neighbors.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::SpectralData;
use crate::params::StepParams;
use crate::problems::ProblemInstance;
use crate::zeroth::{estimate_gradient, ZerothError};

/// Entries larger than this in magnitude count as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("agent {0} has no analytic gradient")]
    MissingGradient(usize),
    #[error("arbitrary dual initialization is only allowed for the variant algorithm")]
    ArbitraryDualInit,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("state diverged at iteration {k}: {reason}")]
    Diverged { k: usize, reason: String },
    #[error(transparent)]
    Zeroth(#[from] ZerothError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    FirstOrder,
    FirstOrderVariant,
    ZerothOrder,
}

impl Algorithm {
    /// Whether the dual variables must sum to zero.
    pub fn conserves_dual_sum(self) -> bool {
        !matches!(self, Algorithm::FirstOrderVariant)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::FirstOrder => "first_order",
            Algorithm::FirstOrderVariant => "first_order_variant",
            Algorithm::ZerothOrder => "zeroth_order",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum X0Init {
    Zeros,
    /// Independent `N(0, scale^2)` entries.
    Random {
        seed: u64,
        scale: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum V0Init {
    Zeros,
    /// `v_0 = L x_0`.
    LaplacianOfX0,
    /// Independent `N(0, scale^2)` entries; variant algorithm only.
    Arbitrary {
        seed: u64,
        scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub x: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub k: usize,
}

fn gaussian_matrix(n: usize, p: usize, seed: u64, scale: f64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, p, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        scale * z
    })
}

pub fn initial_x(n: usize, p: usize, init: X0Init) -> DMatrix<f64> {
    match init {
        X0Init::Zeros => DMatrix::zeros(n, p),
        X0Init::Random { seed, scale } => gaussian_matrix(n, p, seed, scale),
    }
}

pub fn init_state(
    x0: DMatrix<f64>,
    v0: V0Init,
    algorithm: Algorithm,
    spectral: &SpectralData,
) -> Result<NetworkState, EngineError> {
    let (n, p) = x0.shape();
    if n != spectral.n() {
        return Err(EngineError::Dimension(format!(
            "x0 has {n} rows, graph has {} nodes",
            spectral.n()
        )));
    }
    let v = match v0 {
        V0Init::Zeros => DMatrix::zeros(n, p),
        V0Init::LaplacianOfX0 => laplacian_apply(&spectral.laplacian, &x0),
        V0Init::Arbitrary { seed, scale } => {
            if algorithm.conserves_dual_sum() {
                return Err(EngineError::ArbitraryDualInit);
            }
            gaussian_matrix(n, p, seed, scale)
        }
    };
    Ok(NetworkState { x: x0, v, k: 0 })
}

/// Row `i` of `L y`, computed as `sum_j w_ij (y_i - y_j)` over neighbors.
pub fn laplacian_row(laplacian: &DMatrix<f64>, y: &DMatrix<f64>, i: usize) -> Vec<f64> {
    let (n, p) = y.shape();
    let mut out = vec![0.0; p];
    for j in 0..n {
        let w = -laplacian[(i, j)];
        if j != i && w != 0.0 {
            for l in 0..p {
                out[l] += w * (y[(i, l)] - y[(j, l)]);
            }
        }
    }
    out
}

pub fn laplacian_apply(laplacian: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = y.shape();
    let mut out = DMatrix::zeros(n, p);
    for i in 0..n {
        for (l, t) in laplacian_row(laplacian, y, i).into_iter().enumerate() {
            out[(i, l)] = t;
        }
    }
    out
}

/// Analytic local gradients, one row per agent.
pub fn local_gradients(problem: &ProblemInstance, x: &DMatrix<f64>) -> Result<DMatrix<f64>, EngineError> {
    let rows: Vec<Result<Vec<f64>, EngineError>> = (0..problem.n())
        .into_par_iter()
        .map(|i| {
            let xi: Vec<f64> = x.row(i).iter().copied().collect();
            problem.oracles[i].gradient(&xi).ok_or(EngineError::MissingGradient(i))
        })
        .collect();
    stack_rows(rows, x.ncols())
}

/// Local gradient estimates with a common smoothing parameter.
pub fn local_estimates(problem: &ProblemInstance, x: &DMatrix<f64>, delta: f64) -> Result<DMatrix<f64>, EngineError> {
    let rows: Vec<Result<Vec<f64>, EngineError>> = (0..problem.n())
        .into_par_iter()
        .map(|i| {
            let xi: Vec<f64> = x.row(i).iter().copied().collect();
            Ok(estimate_gradient(problem.oracles[i].as_ref(), &xi, delta)?)
        })
        .collect();
    stack_rows(rows, x.ncols())
}

fn stack_rows(rows: Vec<Result<Vec<f64>, EngineError>>, p: usize) -> Result<DMatrix<f64>, EngineError> {
    let n = rows.len();
    let mut out = DMatrix::zeros(n, p);
    for (i, r) in rows.into_iter().enumerate() {
        for (l, t) in r?.into_iter().enumerate() {
            out[(i, l)] = t;
        }
    }
    Ok(out)
}

/// Next `(x_i, v_i)` of agent `i` given the iteration-`k` snapshot and the
/// local descent directions (gradients or their estimates).
pub fn agent_update(
    i: usize,
    state: &NetworkState,
    laplacian: &DMatrix<f64>,
    step: &StepParams,
    algorithm: Algorithm,
    directions: &DMatrix<f64>,
) -> (Vec<f64>, Vec<f64>) {
    let StepParams { alpha, beta, eta } = *step;
    let p = state.x.ncols();
    let lx = laplacian_row(laplacian, &state.x, i);
    let coupling: Vec<f64> = match algorithm {
        Algorithm::FirstOrder | Algorithm::ZerothOrder => {
            (0..p).map(|l| alpha * lx[l] + beta * state.v[(i, l)]).collect()
        }
        Algorithm::FirstOrderVariant => {
            let lv = laplacian_row(laplacian, &state.v, i);
            (0..p).map(|l| alpha * lx[l] + beta * lv[l]).collect()
        }
    };
    let x_next = (0..p)
        .map(|l| state.x[(i, l)] - eta * (coupling[l] + directions[(i, l)]))
        .collect();
    let v_next = (0..p).map(|l| state.v[(i, l)] + eta * beta * lx[l]).collect();
    (x_next, v_next)
}

/// One synchronous round with precomputed directions.
pub fn step_with_directions(
    state: &NetworkState,
    spectral: &SpectralData,
    step: &StepParams,
    algorithm: Algorithm,
    directions: &DMatrix<f64>,
) -> Result<NetworkState, EngineError> {
    let (n, p) = state.x.shape();
    if directions.shape() != (n, p) || state.v.shape() != (n, p) || spectral.n() != n {
        return Err(EngineError::Dimension("state, directions and graph disagree".into()));
    }
    let mut x = DMatrix::zeros(n, p);
    let mut v = DMatrix::zeros(n, p);
    for i in 0..n {
        let (xi, vi) = agent_update(i, state, &spectral.laplacian, step, algorithm, directions);
        for l in 0..p {
            x[(i, l)] = xi[l];
            v[(i, l)] = vi[l];
        }
    }
    let next = NetworkState { x, v, k: state.k + 1 };
    check_finite(&next)?;
    Ok(next)
}

fn check_finite(state: &NetworkState) -> Result<(), EngineError> {
    for (name, m) in [("x", &state.x), ("v", &state.v)] {
        if let Some(bad) = m.iter().find(|t| !t.is_finite() || t.abs() > DIVERGENCE_LIMIT) {
            return Err(EngineError::Diverged {
                k: state.k,
                reason: format!("{name} entry {bad}"),
            });
        }
    }
    Ok(())
}

pub fn step_first_order(
    state: &NetworkState,
    spectral: &SpectralData,
    step: &StepParams,
    problem: &ProblemInstance,
) -> Result<NetworkState, EngineError> {
    let g = local_gradients(problem, &state.x)?;
    step_with_directions(state, spectral, step, Algorithm::FirstOrder, &g)
}

pub fn step_first_order_variant(
    state: &NetworkState,
    spectral: &SpectralData,
    step: &StepParams,
    problem: &ProblemInstance,
) -> Result<NetworkState, EngineError> {
    let g = local_gradients(problem, &state.x)?;
    step_with_directions(state, spectral, step, Algorithm::FirstOrderVariant, &g)
}

pub fn step_zeroth_order(
    state: &NetworkState,
    spectral: &SpectralData,
    step: &StepParams,
    problem: &ProblemInstance,
    delta: f64,
) -> Result<NetworkState, EngineError> {
    let h = local_estimates(problem, &state.x, delta)?;
    step_with_directions(state, spectral, step, Algorithm::ZerothOrder, &h)
}

/// Two-term recursion in `x` alone that the first-order method reduces to
/// after eliminating `v`:
/// `x+ = (2I - eta alpha L) x - (I - eta alpha L + eta^2 beta^2 L) x_prev - eta (g - g_prev)`.
pub fn extra_reference_step(
    x_prev: &DMatrix<f64>,
    x_curr: &DMatrix<f64>,
    g_prev: &DMatrix<f64>,
    g_curr: &DMatrix<f64>,
    laplacian: &DMatrix<f64>,
    step: &StepParams,
) -> DMatrix<f64> {
    let StepParams { alpha, beta, eta } = *step;
    let lc = laplacian * x_curr;
    let lp = laplacian * x_prev;
    x_curr * 2.0
        - lc * (eta * alpha)
        - (x_prev - lp * (eta * alpha) + laplacian * x_prev * (eta * eta * beta * beta))
        - (g_curr - g_prev) * eta
}

/// Iterates `extra_reference_step` from a pair of consecutive iterates.
pub struct ExtraReference<'a> {
    problem: &'a ProblemInstance,
    laplacian: &'a DMatrix<f64>,
    step: StepParams,
    x_prev: DMatrix<f64>,
    x_curr: DMatrix<f64>,
    g_prev: DMatrix<f64>,
}

impl<'a> ExtraReference<'a> {
    pub fn new(
        problem: &'a ProblemInstance,
        spectral: &'a SpectralData,
        step: StepParams,
        x0: DMatrix<f64>,
        x1: DMatrix<f64>,
    ) -> Result<Self, EngineError> {
        let g_prev = local_gradients(problem, &x0)?;
        Ok(ExtraReference {
            problem,
            laplacian: &spectral.laplacian,
            step,
            x_prev: x0,
            x_curr: x1,
            g_prev,
        })
    }

    pub fn current(&self) -> &DMatrix<f64> {
        &self.x_curr
    }

    pub fn advance(&mut self) -> Result<&DMatrix<f64>, EngineError> {
        let g = local_gradients(self.problem, &self.x_curr)?;
        let next = extra_reference_step(&self.x_prev, &self.x_curr, &self.g_prev, &g, self.laplacian, &self.step);
        self.x_prev = std::mem::replace(&mut self.x_curr, next);
        self.g_prev = g;
        Ok(&self.x_curr)
    }
}

/// Column means as a length-`p` vector.
pub fn row_mean(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows() as f64;
    (0..m.ncols()).map(|l| m.column(l).iter().sum::<f64>() / n).collect()
}
