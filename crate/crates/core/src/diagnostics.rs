//! Monitoring quantities, descent-inequality residuals, certificate
//! envelopes and empirical rate fits.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{local_estimates, local_gradients, row_mean, EngineError, NetworkState};
use crate::graph::SpectralData;
use crate::params::{FirstOrderConstants, ParamsError, StepParams, ZerothOrderConstants};
use crate::problems::{CostOracle, ProblemInstance};

#[derive(Debug, thiserror::Error)]
pub enum DiagnosticsError {
    #[error("beta must be nonzero")]
    ZeroBeta,
    #[error("{0} requires a known optimal value")]
    NeedsFStar(&'static str),
    #[error("{0} requires a projection onto the minimizer set")]
    NeedsProjection(&'static str),
    #[error("{0} requires a square-summable smoothing schedule")]
    NeedsSummableSchedule(&'static str),
    #[error("{0} does not apply to this algorithm")]
    WrongAlgorithm(&'static str),
    #[error("window must be at least 2, got {0}")]
    BadWindow(usize),
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// How the optimal value enters absolute quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum FStarMode {
    Known(f64),
    /// Unknown optimum; this reference value stands in for it, so absolute
    /// quantities are only defined up to an additive constant.
    Offset(f64),
}

impl FStarMode {
    pub fn value(&self) -> f64 {
        match *self {
            FStarMode::Known(v) | FStarMode::Offset(v) => v,
        }
    }

    pub fn is_known(&self) -> bool {
        matches!(self, FStarMode::Known(_))
    }
}

/// `||y||_K^2` for a stacked `n x p` matrix.
pub fn k_norm_sq(y: &DMatrix<f64>) -> f64 {
    centered(y).norm_squared()
}

/// `K y`: each column minus its mean.
pub fn centered(y: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = row_mean(y);
    DMatrix::from_fn(y.nrows(), y.ncols(), |i, l| y[(i, l)] - mean[l])
}

/// `n * ||mean row||^2`, the squared norm of the replicated mean.
pub fn mean_stack_sq(y: &DMatrix<f64>) -> f64 {
    y.nrows() as f64 * row_mean(y).iter().map(|t| t * t).sum::<f64>()
}

fn trace_form(m: &DMatrix<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    // tr(a^T m b)
    (m * b).component_mul(a).sum()
}

/// Everything the monitors need at one iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapshot {
    pub consensus_sq: f64,
    pub mean_grad_sq: f64,
    pub grad_at_mean_sq: f64,
    pub f_bar: f64,
    pub dual_term: f64,
    pub lyapunov: f64,
    pub v_hat: f64,
}

/// `V` (or `U` when `dual_dirs` holds estimates at the mean) and its
/// companions.
///
/// `directions` are the local directions used at this iterate, `dual_dirs`
/// the stacked gradients (or estimates) at the network mean, `true_at_mean`
/// the stacked analytic gradients at the mean.
#[allow(clippy::too_many_arguments)]
pub fn snapshot(
    state: &NetworkState,
    directions: &DMatrix<f64>,
    dual_dirs: &DMatrix<f64>,
    true_at_mean: &DMatrix<f64>,
    f_bar: f64,
    spectral: &SpectralData,
    step: &StepParams,
    f_ref: f64,
) -> Result<Snapshot, DiagnosticsError> {
    let StepParams { alpha, beta, .. } = *step;
    if beta == 0.0 {
        return Err(DiagnosticsError::ZeroBeta);
    }
    let n = state.x.nrows() as f64;
    let kx = centered(&state.x);
    let consensus_sq = kx.norm_squared();
    let w = &state.v + dual_dirs / beta;
    let kw = centered(&w);
    let dual_term = kw.norm_squared();
    let q_form = trace_form(&spectral.pinv, &w, &w);
    let cross = kx.component_mul(&w).sum();
    let gap = n * (f_bar - f_ref);
    let lyapunov = 0.5 * consensus_sq + 0.5 * (q_form + alpha / beta * dual_term) + cross + gap;
    Ok(Snapshot {
        consensus_sq,
        mean_grad_sq: mean_stack_sq(directions),
        grad_at_mean_sq: mean_stack_sq(true_at_mean),
        f_bar,
        dual_term,
        lyapunov,
        v_hat: consensus_sq + dual_term + gap,
    })
}

fn replicate(row: &[f64], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, row.len(), |_, l| row[l])
}

/// Lyapunov function of the first-order method at `state`.
pub fn lyapunov_v(
    state: &NetworkState,
    spectral: &SpectralData,
    step: &StepParams,
    problem: &ProblemInstance,
    f_star: FStarMode,
) -> Result<f64, DiagnosticsError> {
    let n = state.x.nrows();
    let xbar = replicate(&row_mean(&state.x), n);
    let g0 = local_gradients(problem, &xbar)?;
    let g = local_gradients(problem, &state.x)?;
    let f_bar = problem.global_value(&row_mean(&state.x));
    Ok(snapshot(state, &g, &g0, &g0, f_bar, spectral, step, f_star.value())?.lyapunov)
}

/// Lyapunov function of the zeroth-order method at `state` with smoothing
/// parameter `delta` for the estimates at the mean.
pub fn lyapunov_u(
    state: &NetworkState,
    spectral: &SpectralData,
    step: &StepParams,
    problem: &ProblemInstance,
    delta: f64,
    f_star: FStarMode,
) -> Result<f64, DiagnosticsError> {
    let n = state.x.nrows();
    let xbar = replicate(&row_mean(&state.x), n);
    let h0 = local_estimates(problem, &xbar, delta)?;
    let h = local_estimates(problem, &state.x, delta)?;
    let f_bar = problem.global_value(&row_mean(&state.x));
    Ok(snapshot(state, &h, &h0, &h0, f_bar, spectral, step, f_star.value())?.lyapunov)
}

/// One row of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub k: usize,
    pub consensus_sq: f64,
    pub mean_grad_sq: f64,
    pub grad_at_mean_sq: f64,
    pub f_bar: f64,
    #[serde(rename = "V")]
    pub lyapunov: f64,
    #[serde(rename = "V_hat")]
    pub v_hat: f64,
    #[serde(rename = "W")]
    pub w: f64,
    pub dual_term: f64,
    /// Descent residual of the step that produced this iterate.
    pub residual: Option<f64>,
    pub envelope: Option<f64>,
    pub delta: Option<f64>,
    /// Running minimum of `p_value` over `1..=k` (the value itself at k = 0).
    #[serde(rename = "P")]
    pub p_metric: f64,
    /// Squared distance of the stacked state to the replicated projection
    /// of the mean, when a projection is available.
    pub proj_dist_sq: Option<f64>,
}

impl IterRecord {
    pub fn from_snapshot(k: usize, s: &Snapshot, delta: Option<f64>, n: usize) -> Self {
        IterRecord {
            k,
            consensus_sq: s.consensus_sq,
            mean_grad_sq: s.mean_grad_sq,
            grad_at_mean_sq: s.grad_at_mean_sq,
            f_bar: s.f_bar,
            lyapunov: s.lyapunov,
            v_hat: s.v_hat,
            w: s.consensus_sq + s.dual_term + s.mean_grad_sq + s.grad_at_mean_sq,
            dual_term: s.dual_term,
            residual: None,
            envelope: None,
            delta,
            p_metric: p_value(s.grad_at_mean_sq, s.consensus_sq, n),
            proj_dist_sq: None,
        }
    }

    /// `||x - xbar||^2 + n (f(xbar) - f*)`.
    pub fn optimality_measure(&self, n: usize, f_star: f64) -> f64 {
        self.consensus_sq + n as f64 * (self.f_bar - f_star)
    }
}

/// `||grad f(xbar)||^2 + (1/n) sum_i ||x_i - xbar||^2` from the stacked
/// quantities `n ||grad f(xbar)||^2` and `||x - xbar||^2`.
pub fn p_value(grad_at_mean_sq: f64, consensus_sq: f64, n: usize) -> f64 {
    (grad_at_mean_sq + consensus_sq) / n as f64
}

/// Allowed round-off in a descent inequality.
pub fn descent_slack(v_k: f64) -> f64 {
    1e-9 * (1.0 + v_k.abs())
}

/// Residual of the first-order descent inequality between consecutive
/// records; nonpositive (up to `descent_slack`) when it holds.
pub fn descent_check_first_order(rec_k: &IterRecord, rec_k1: &IterRecord, c: &FirstOrderConstants) -> f64 {
    let eta = c.step.eta;
    rec_k1.lyapunov - rec_k.lyapunov
        + eta * (c.eps1 - eta * c.eps2) * rec_k.consensus_sq
        + eta * (c.eps3 - eta * c.eps4) * rec_k.dual_term
        + eta * (c.eps5 - eta * c.eps6) * rec_k.mean_grad_sq
        + eta / 4.0 * rec_k.grad_at_mean_sq
}

/// Residual of the zeroth-order descent inequality, including the
/// smoothing allowance `eps11 delta_k^2 + eps12 delta_{k+1}^2`.
pub fn descent_check_zeroth_order(
    rec_k: &IterRecord,
    rec_k1: &IterRecord,
    c: &ZerothOrderConstants,
    delta_k: f64,
    delta_k1: f64,
) -> f64 {
    let eta = c.step.eta;
    rec_k1.lyapunov - rec_k.lyapunov
        + eta * (c.eps1 - eta * c.eps2) * rec_k.consensus_sq
        + eta * (c.eps3 - eta * c.eps4) * rec_k.dual_term
        + eta * (c.eps5 - eta * c.eps6) * rec_k.mean_grad_sq
        + eta / 8.0 * rec_k.grad_at_mean_sq
        - c.eps11 * delta_k * delta_k
        - c.eps12 * delta_k1 * delta_k1
}

/// `P(T)`: minimum of the per-iterate value over `k = 1..=T`; `P(0)` is the
/// initial value.
pub fn metric_p(records: &[IterRecord], t: usize, n: usize) -> f64 {
    let value = |r: &IterRecord| p_value(r.grad_at_mean_sq, r.consensus_sq, n);
    if t == 0 {
        return value(&records[0]);
    }
    records[1..=t].iter().map(value).fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    /// Cumulative `sum_k W_k <= eps8 V_hat_0 / eps7`.
    Thm1SumW,
    /// `f(xbar_{T+1}) - f* <= eps8 V_hat_0 / n`.
    Thm1Gap,
    /// `||x_k - xbar_k||^2 + n (f(xbar_k) - f*) <= (1 - eps)^k c`.
    Thm2Linear,
    /// `||x_k - 1 (x) P(xbar_k)||^2 <= (1 - eps)^k c max(1, 2/nu)`.
    Thm2Proj,
    /// Cumulative consensus plus mean-gradient terms `<= c_tilde / eps7_t`.
    Thm3Sum,
    /// `f(xbar_{T+1}) - f* <= c_tilde / n`.
    Thm3Gap,
    /// Zeroth-order linear envelope with the `phi` tail.
    Thm4Linear,
}

impl EnvelopeKind {
    pub const ALL: [EnvelopeKind; 7] = [
        EnvelopeKind::Thm1SumW,
        EnvelopeKind::Thm1Gap,
        EnvelopeKind::Thm2Linear,
        EnvelopeKind::Thm2Proj,
        EnvelopeKind::Thm3Sum,
        EnvelopeKind::Thm3Gap,
        EnvelopeKind::Thm4Linear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnvelopeKind::Thm1SumW => "thm1_sum_w",
            EnvelopeKind::Thm1Gap => "thm1_gap",
            EnvelopeKind::Thm2Linear => "thm2_linear",
            EnvelopeKind::Thm2Proj => "thm2_proj",
            EnvelopeKind::Thm3Sum => "thm3_sum",
            EnvelopeKind::Thm3Gap => "thm3_gap",
            EnvelopeKind::Thm4Linear => "thm4_linear",
        }
    }

    pub fn first_order(self) -> bool {
        matches!(
            self,
            EnvelopeKind::Thm1SumW | EnvelopeKind::Thm1Gap | EnvelopeKind::Thm2Linear | EnvelopeKind::Thm2Proj
        )
    }
}

/// Certificate constants of whichever method produced a trace.
#[derive(Debug, Clone, PartialEq)]
pub enum TheoremConstants {
    First(FirstOrderConstants),
    Zeroth(ZerothOrderConstants),
}

/// Inputs to the envelope checks beyond the records themselves.
#[derive(Debug, Clone)]
pub struct EnvelopeInputs {
    pub constants: TheoremConstants,
    pub n: usize,
    pub f_star: Option<f64>,
    /// `sum_i sum_k delta_{i,k}^2` (zeroth order only).
    pub delta_sq_total: Option<f64>,
    pub eps_hat: Option<f64>,
    pub eps_breve: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeViolation {
    pub k: usize,
    pub measured: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub kind: EnvelopeKind,
    pub checked: usize,
    /// Smallest `bound - measured` over the checked indices.
    pub min_margin: f64,
    /// Smallest `(bound - measured) / bound`.
    pub min_rel_margin: f64,
    pub violations: Vec<EnvelopeViolation>,
}

impl EnvelopeReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first_violation(&self) -> Option<usize> {
        self.violations.first().map(|v| v.k)
    }
}

fn envelope_slack(bound: f64) -> f64 {
    1e-9 * (1.0 + bound.abs())
}

fn report(kind: EnvelopeKind, pairs: impl Iterator<Item = (usize, f64, f64)>) -> EnvelopeReport {
    let mut r = EnvelopeReport {
        kind,
        checked: 0,
        min_margin: f64::INFINITY,
        min_rel_margin: f64::INFINITY,
        violations: Vec::new(),
    };
    for (k, measured, bound) in pairs {
        r.checked += 1;
        let margin = bound - measured;
        r.min_margin = r.min_margin.min(margin);
        r.min_rel_margin = r.min_rel_margin.min(margin / bound.abs().max(f64::MIN_POSITIVE));
        // NaN counts as a violation
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(measured <= bound + envelope_slack(bound)) {
            r.violations.push(EnvelopeViolation { k, measured, bound });
        }
    }
    r
}

/// Per-index envelope value, for the kinds that have one.
pub fn envelope_value(
    kind: EnvelopeKind,
    inputs: &EnvelopeInputs,
    records: &[IterRecord],
    k: usize,
) -> Result<f64, DiagnosticsError> {
    let name = kind.name();
    let n = inputs.n as f64;
    let v_hat0 = records[0].v_hat;
    if inputs.f_star.is_none() {
        return Err(DiagnosticsError::NeedsFStar(name));
    }
    match (&inputs.constants, kind) {
        (TheoremConstants::First(c), EnvelopeKind::Thm1SumW) => Ok(c.eps8 * v_hat0 / c.eps7),
        (TheoremConstants::First(c), EnvelopeKind::Thm1Gap) => Ok(c.eps8 * v_hat0 / n),
        (TheoremConstants::First(c), EnvelopeKind::Thm2Linear) => {
            let eps = c.rate.ok_or(ParamsError::MissingNu)?;
            Ok((1.0 - eps).powf(k as f64) * c.envelope_scale(v_hat0))
        }
        (TheoremConstants::First(c), EnvelopeKind::Thm2Proj) => {
            let eps = c.rate.ok_or(ParamsError::MissingNu)?;
            let nu = c.problem.nu.ok_or(ParamsError::MissingNu)?;
            Ok((1.0 - eps).powf(k as f64) * c.envelope_scale(v_hat0) * projection_factor(nu))
        }
        (TheoremConstants::Zeroth(c), EnvelopeKind::Thm3Sum) => {
            let total = inputs
                .delta_sq_total
                .ok_or(DiagnosticsError::NeedsSummableSchedule(name))?;
            Ok(c.c_tilde(v_hat0, total) / c.eps7)
        }
        (TheoremConstants::Zeroth(c), EnvelopeKind::Thm3Gap) => {
            let total = inputs
                .delta_sq_total
                .ok_or(DiagnosticsError::NeedsSummableSchedule(name))?;
            Ok(c.c_tilde(v_hat0, total) / n)
        }
        (TheoremConstants::Zeroth(c), EnvelopeKind::Thm4Linear) => {
            let eps = c.rate.ok_or(ParamsError::MissingNu)?;
            let eps_hat = inputs.eps_hat.ok_or(DiagnosticsError::NeedsSummableSchedule(name))?;
            let eps_breve = inputs.eps_breve.unwrap_or((eps_hat + 1.0) / 2.0);
            let phi = c.phi(eps_hat, eps_breve, k)?;
            Ok(((1.0 - eps).powf(k as f64 + 1.0) * c.eps8 * v_hat0 + phi) / c.eps9)
        }
        _ => Err(DiagnosticsError::WrongAlgorithm(name)),
    }
}

/// Checks one certificate against a trace and lists every index where the
/// measured quantity exceeds its bound.
pub fn envelope_check(
    records: &[IterRecord],
    inputs: &EnvelopeInputs,
    kind: EnvelopeKind,
) -> Result<EnvelopeReport, DiagnosticsError> {
    let name = kind.name();
    let f_star = inputs.f_star.ok_or(DiagnosticsError::NeedsFStar(name))?;
    let n = inputs.n;
    // validates prerequisites even for empty traces
    let scalar = envelope_value(kind, inputs, records, 0)?;
    Ok(match kind {
        EnvelopeKind::Thm1SumW => {
            let mut acc = 0.0;
            report(
                kind,
                records.iter().map(|r| {
                    acc += r.w;
                    (r.k, acc, scalar)
                }),
            )
        }
        EnvelopeKind::Thm3Sum => {
            let mut acc = 0.0;
            report(
                kind,
                records.iter().map(|r| {
                    acc += r.consensus_sq + r.grad_at_mean_sq;
                    (r.k, acc, scalar)
                }),
            )
        }
        EnvelopeKind::Thm1Gap | EnvelopeKind::Thm3Gap => {
            report(kind, records.iter().skip(1).map(|r| (r.k, r.f_bar - f_star, scalar)))
        }
        EnvelopeKind::Thm2Linear | EnvelopeKind::Thm4Linear => {
            let mut pairs = Vec::with_capacity(records.len());
            for r in records {
                pairs.push((
                    r.k,
                    r.optimality_measure(n, f_star),
                    envelope_value(kind, inputs, records, r.k)?,
                ));
            }
            report(kind, pairs.into_iter())
        }
        EnvelopeKind::Thm2Proj => {
            if records.iter().any(|r| r.proj_dist_sq.is_none()) {
                return Err(DiagnosticsError::NeedsProjection(name));
            }
            let mut pairs = Vec::with_capacity(records.len());
            for r in records {
                pairs.push((
                    r.k,
                    r.proj_dist_sq.unwrap(),
                    envelope_value(kind, inputs, records, r.k)?,
                ));
            }
            report(kind, pairs.into_iter())
        }
    })
}

/// Least-squares fit of `log values` against the index, reported as a
/// per-step ratio `exp(slope)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub ratio: f64,
    pub used: usize,
    pub skipped_nonpositive: usize,
}

/// Fits the last `window` entries of `series`; nonpositive entries are
/// skipped and counted.
pub fn fit_rate(series: &[f64], window: usize) -> Result<RateFit, DiagnosticsError> {
    if window < 2 {
        return Err(DiagnosticsError::BadWindow(window));
    }
    let start = series.len().saturating_sub(window);
    let mut pts = Vec::new();
    let mut skipped = 0;
    for (k, &v) in series.iter().enumerate().skip(start) {
        if v > 0.0 && v.is_finite() {
            pts.push((k as f64, v.ln()));
        } else {
            skipped += 1;
        }
    }
    if pts.len() < 2 {
        return Ok(RateFit {
            ratio: f64::NAN,
            used: pts.len(),
            skipped_nonpositive: skipped,
        });
    }
    let m = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - xm) * (p.0 - xm)).sum();
    Ok(RateFit {
        ratio: (sxy / sxx).exp(),
        used: pts.len(),
        skipped_nonpositive: skipped,
    })
}

/// Fit over the tail half of the series.
pub fn fit_rate_tail(series: &[f64]) -> Result<RateFit, DiagnosticsError> {
    fit_rate(series, (series.len() / 2).max(2))
}

/// Where to probe pointwise inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SampleSpec {
    /// Evenly spaced points on `[lo, hi]` (one-dimensional problems).
    Grid { lo: f64, hi: f64, count: usize },
    /// Gaussian points `center + radius * z`.
    Random { radius: f64, count: usize, seed: u64 },
}

impl SampleSpec {
    pub fn points(&self, dim: usize, center: &[f64]) -> Vec<Vec<f64>> {
        match *self {
            SampleSpec::Grid { lo, hi, count } => (0..count)
                .map(|i| {
                    let t = if count > 1 {
                        lo + (hi - lo) * i as f64 / (count - 1) as f64
                    } else {
                        lo
                    };
                    vec![t; dim]
                })
                .collect(),
            SampleSpec::Random { radius, count, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..count)
                    .map(|_| {
                        (0..dim)
                            .map(|l| {
                                let z: f64 = rng.sample(rand_distr::StandardNormal);
                                center.get(l).copied().unwrap_or(0.0) + radius * z
                            })
                            .collect()
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointViolation {
    pub x: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

fn pointwise_slack(v: f64) -> f64 {
    1e-9 * (1.0 + v.abs())
}

/// Evaluates `1/2 ||grad f(x)||^2 >= nu (f(x) - f*)` at the sample points.
pub fn pl_check(
    global: &dyn CostOracle,
    nu: f64,
    f_star: f64,
    samples: &SampleSpec,
    center: &[f64],
) -> Vec<PointViolation> {
    samples
        .points(global.dim(), center)
        .into_iter()
        .filter_map(|x| {
            let g = global.gradient(&x)?;
            let lhs = 0.5 * g.iter().map(|t| t * t).sum::<f64>();
            let rhs = nu * (global.value(&x) - f_star);
            (lhs < rhs - pointwise_slack(rhs)).then_some(PointViolation { x, lhs, rhs })
        })
        .collect()
}

/// Evaluates `f(x) - f* >= factor * ||P(x) - x||^2`, the quadratic growth
/// away from the minimizer set.
pub fn quadratic_growth_check(
    problem: &ProblemInstance,
    factor: f64,
    samples: &SampleSpec,
) -> Result<Vec<PointViolation>, DiagnosticsError> {
    let f_star = problem.f_star.ok_or(DiagnosticsError::NeedsFStar("quadratic growth"))?;
    if problem.project(&vec![0.0; problem.dim()]).is_none() {
        return Err(DiagnosticsError::NeedsProjection("quadratic growth"));
    }
    let center = problem.minimizer.clone().unwrap_or_else(|| vec![0.0; problem.dim()]);
    Ok(samples
        .points(problem.dim(), &center)
        .into_iter()
        .filter_map(|x| {
            let px = problem.project(&x).unwrap();
            let dist: f64 = x.iter().zip(&px).map(|(a, b)| (a - b) * (a - b)).sum();
            let lhs = problem.global_value(&x) - f_star;
            let rhs = factor * dist;
            (lhs < rhs - pointwise_slack(rhs)).then_some(PointViolation { x, lhs, rhs })
        })
        .collect())
}

/// Converts the linear-envelope quantity into a bound on the distance to
/// the replicated projection: quadratic growth gives
/// `dist^2 <= (2/nu) (f - f*)`, and the consensus part passes through.
pub fn projection_factor(nu: f64) -> f64 {
    (2.0 / nu).max(1.0)
}

/// `||x - 1 (x) P(xbar)||^2`.
pub fn projection_distance_sq(problem: &ProblemInstance, x: &DMatrix<f64>) -> Option<f64> {
    let px = problem.project(&row_mean(x))?;
    Some(
        (0..x.nrows())
            .map(|i| (0..x.ncols()).map(|l| (x[(i, l)] - px[l]).powi(2)).sum::<f64>())
            .sum(),
    )
}
