//! Run driver: steps an algorithm, records diagnostics each iteration,
//! checks invariants and certificates, and writes traces.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    descent_check_first_order, descent_check_zeroth_order, descent_slack, envelope_check, envelope_value,
    fit_rate_tail, projection_distance_sq, snapshot, DiagnosticsError, EnvelopeInputs, EnvelopeKind, EnvelopeReport,
    FStarMode, IterRecord, TheoremConstants,
};
use crate::engine::{
    init_state, initial_x, local_estimates, local_gradients, row_mean, step_with_directions, Algorithm, EngineError,
    ExtraReference, NetworkState, V0Init, X0Init,
};
use crate::graph::SpectralData;
use crate::params::{FirstOrderConstants, ProblemConstants, StepParams, ZerothOrderConstants};
use crate::problems::ProblemInstance;
use crate::zeroth::{DeltaSchedule, ScheduleKind, ZerothError};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("the zeroth-order method needs a smoothing schedule")]
    MissingSchedule,
    #[error("problem has {0} agents but graph has {1} nodes")]
    SizeMismatch(usize, usize),
    #[error("compare: {0}")]
    Compare(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Zeroth(#[from] ZerothError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Parameters are meant to satisfy the certificate windows; monitors run.
    Theorem,
    /// User-chosen parameters; certificate monitors are off.
    Practical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub algorithm: Algorithm,
    pub step: StepParams,
    pub kappa2: f64,
    pub schedule: Option<DeltaSchedule>,
    pub iterations: usize,
    pub x0: X0Init,
    pub v0: V0Init,
    pub mode: Mode,
    /// Descent-inequality and Lyapunov-sandwich monitors (theorem mode).
    pub monitors: bool,
    /// Dual-sum and mean-dynamics identities.
    pub invariants: bool,
    /// Envelopes to check at the end; `None` checks every applicable one.
    pub envelopes: Option<Vec<EnvelopeKind>>,
    /// Stand-in optimum when the problem does not know `f*`.
    pub f_reference: Option<f64>,
    pub eps_breve: Option<f64>,
}

impl RunSpec {
    pub fn new(algorithm: Algorithm, step: StepParams, iterations: usize) -> Self {
        RunSpec {
            algorithm,
            step,
            kappa2: 2.0,
            schedule: None,
            iterations,
            x0: X0Init::Random { seed: 0, scale: 1.0 },
            v0: V0Init::Zeros,
            mode: Mode::Theorem,
            monitors: true,
            invariants: true,
            envelopes: None,
            f_reference: None,
            eps_breve: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub algorithm: Algorithm,
    pub mode: Mode,
    pub n: usize,
    pub p: usize,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub iterations_requested: usize,
    pub iterations_completed: usize,
    pub p_initial: f64,
    pub p_final: f64,
    /// Series the rate was fitted to.
    pub rate_series: String,
    pub fitted_ratio: Option<f64>,
    pub feasible: Option<bool>,
    pub feasibility_violations: Vec<String>,
    pub monitors_active: bool,
    pub descent_checked: usize,
    pub descent_violations: usize,
    pub first_violation: Option<usize>,
    /// Largest `residual / (1 + |V_k|)`.
    pub max_scaled_residual: Option<f64>,
    pub sandwich_checked: usize,
    pub sandwich_violations: usize,
    /// Largest `|sum_i v_i| / (1 + max_i ||v_i||)`.
    pub max_dual_sum: f64,
    /// Largest mean-dynamics defect relative to `1 + ||xbar_k||`.
    pub max_mean_dynamics: f64,
    pub invariant_violations: usize,
    pub diverged_at: Option<usize>,
    pub divergence: Option<String>,
    pub f_star_mode: FStarMode,
    pub envelopes: Vec<EnvelopeReport>,
    pub envelope_errors: Vec<String>,
}

impl Summary {
    pub fn envelope(&self, kind: EnvelopeKind) -> Option<&EnvelopeReport> {
        self.envelopes.iter().find(|e| e.kind == kind)
    }

    pub fn envelope_violations(&self) -> usize {
        self.envelopes.iter().filter(|e| !e.holds()).count()
    }

    /// Any monitored certificate failed.
    pub fn theorem_violated(&self) -> bool {
        self.descent_violations > 0 || self.sandwich_violations > 0 || self.envelope_violations() > 0
    }

    pub fn to_text(&self) -> String {
        // TOML so it is both readable and machine-parsable
        toml::to_string(self).expect("summary serializes")
    }
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub records: Vec<IterRecord>,
    pub summary: Summary,
    pub constants: Option<TheoremConstants>,
}

/// Tolerance of the exact identities.
pub const INVARIANT_TOL: f64 = 1e-12;

pub const CSV_HEADER: &str = "k,consensus_sq,mean_grad_sq,grad_at_mean_sq,f_bar,V,V_hat,W,dual_term,residual,envelope,delta,P,rounds,queries,vars_communicated,proj_dist_sq";

fn opt(v: Option<f64>) -> String {
    v.map(|t| t.to_string()).unwrap_or_default()
}

impl Trace {
    pub fn n(&self) -> usize {
        self.summary.n
    }

    /// CSV with the fixed columns. `queries` counts oracle calls: function
    /// values for the zeroth-order method, gradients otherwise.
    pub fn to_csv(&self) -> String {
        let (n, p) = (self.summary.n, self.summary.p);
        let per_round = match self.summary.algorithm {
            Algorithm::ZerothOrder => n * (p + 1),
            _ => n,
        };
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.k,
                r.consensus_sq,
                r.mean_grad_sq,
                r.grad_at_mean_sq,
                r.f_bar,
                r.lyapunov,
                r.v_hat,
                r.w,
                r.dual_term,
                opt(r.residual),
                opt(r.envelope),
                opt(r.delta),
                r.p_metric,
                r.k,
                r.k * per_round,
                r.k * n * p,
                opt(r.proj_dist_sq),
            )
            .unwrap();
        }
        s
    }
}

/// Parses the CSV written by `Trace::to_csv` back into records.
pub fn records_from_csv(text: &str) -> Result<Vec<IterRecord>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty csv")?;
    if header != CSV_HEADER {
        return Err(format!("unexpected header: {header}"));
    }
    let num = |t: &str| -> Result<f64, String> { t.parse::<f64>().map_err(|e| format!("{t}: {e}")) };
    let optnum = |t: &str| -> Result<Option<f64>, String> {
        if t.is_empty() {
            Ok(None)
        } else {
            num(t).map(Some)
        }
    };
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 17 {
            return Err(format!("row {idx}: expected 17 fields, got {}", f.len()));
        }
        out.push(IterRecord {
            k: f[0].parse().map_err(|e| format!("row {idx}: {e}"))?,
            consensus_sq: num(f[1])?,
            mean_grad_sq: num(f[2])?,
            grad_at_mean_sq: num(f[3])?,
            f_bar: num(f[4])?,
            lyapunov: num(f[5])?,
            v_hat: num(f[6])?,
            w: num(f[7])?,
            dual_term: num(f[8])?,
            residual: optnum(f[9])?,
            envelope: optnum(f[10])?,
            delta: optnum(f[11])?,
            p_metric: num(f[12])?,
            proj_dist_sq: optnum(f[16])?,
        });
    }
    Ok(out)
}

/// Computes the certificate constants matching the algorithm, when the
/// problem and graph admit them.
pub fn theorem_constants(
    problem: &ProblemInstance,
    spectral: &SpectralData,
    algorithm: Algorithm,
    kappa2: f64,
    step: StepParams,
) -> Option<TheoremConstants> {
    let pc = ProblemConstants::from_problem(problem, spectral).ok()?;
    Some(match algorithm {
        Algorithm::FirstOrder | Algorithm::FirstOrderVariant => {
            TheoremConstants::First(FirstOrderConstants::compute(&pc, kappa2, step))
        }
        Algorithm::ZerothOrder => TheoremConstants::Zeroth(ZerothOrderConstants::compute(&pc, kappa2, step)),
    })
}

/// Drives one algorithm and exposes its iterates.
pub struct Stepper<'a> {
    pub problem: &'a ProblemInstance,
    pub spectral: &'a SpectralData,
    pub algorithm: Algorithm,
    pub step: StepParams,
    pub schedule: Option<DeltaSchedule>,
    pub state: NetworkState,
}

impl<'a> Stepper<'a> {
    pub fn new(problem: &'a ProblemInstance, spectral: &'a SpectralData, spec: &RunSpec) -> Result<Self, RunError> {
        if problem.n() != spectral.n() {
            return Err(RunError::SizeMismatch(problem.n(), spectral.n()));
        }
        if spec.algorithm == Algorithm::ZerothOrder {
            spec.schedule.ok_or(RunError::MissingSchedule)?.validate()?;
        }
        let x0 = initial_x(problem.n(), problem.dim(), spec.x0);
        let state = init_state(x0, spec.v0, spec.algorithm, spectral)?;
        Ok(Stepper {
            problem,
            spectral,
            algorithm: spec.algorithm,
            step: spec.step,
            schedule: spec.schedule,
            state,
        })
    }

    pub fn delta(&self, k: usize) -> Option<f64> {
        match self.algorithm {
            Algorithm::ZerothOrder => self.schedule.map(|s| s.at(k)),
            _ => None,
        }
    }

    /// Local directions at the current iterate.
    pub fn directions(&self) -> Result<DMatrix<f64>, EngineError> {
        match self.delta(self.state.k) {
            Some(d) => local_estimates(self.problem, &self.state.x, d),
            None => local_gradients(self.problem, &self.state.x),
        }
    }

    pub fn advance_with(&mut self, directions: &DMatrix<f64>) -> Result<(), EngineError> {
        self.state = step_with_directions(&self.state, self.spectral, &self.step, self.algorithm, directions)?;
        Ok(())
    }

    pub fn advance(&mut self) -> Result<(), EngineError> {
        let d = self.directions()?;
        self.advance_with(&d)
    }
}

fn applicable_envelopes(
    constants: &TheoremConstants,
    problem: &ProblemInstance,
    schedule: Option<DeltaSchedule>,
) -> Vec<EnvelopeKind> {
    let has_nu = problem.pl_nu.is_some();
    match constants {
        TheoremConstants::First(_) => {
            let mut v = vec![EnvelopeKind::Thm1SumW, EnvelopeKind::Thm1Gap];
            if has_nu {
                v.push(EnvelopeKind::Thm2Linear);
                if problem.projection.is_some() || problem.minimizer.is_some() {
                    v.push(EnvelopeKind::Thm2Proj);
                }
            }
            v
        }
        TheoremConstants::Zeroth(_) => {
            let mut v = Vec::new();
            if schedule.map(|s| s.kind != ScheduleKind::Constant).unwrap_or(false) {
                v.push(EnvelopeKind::Thm3Sum);
                v.push(EnvelopeKind::Thm3Gap);
            }
            if has_nu && schedule.map(|s| s.kind == ScheduleKind::Geometric).unwrap_or(false) {
                v.push(EnvelopeKind::Thm4Linear);
            }
            v
        }
    }
}

/// Runs `spec.iterations` rounds and returns the full trace. Divergence
/// ends the run early and is reported in the summary, not as an error.
pub fn run(problem: &ProblemInstance, spectral: &SpectralData, spec: &RunSpec) -> Result<Trace, RunError> {
    let mut stepper = Stepper::new(problem, spectral, spec)?;
    let (n, p) = (problem.n(), problem.dim());
    let constants = theorem_constants(problem, spectral, spec.algorithm, spec.kappa2, spec.step);
    let monitors = spec.mode == Mode::Theorem
        && spec.monitors
        && constants.is_some()
        && spec.algorithm != Algorithm::FirstOrderVariant;
    let f_star_mode = match (problem.f_star, spec.f_reference) {
        (Some(f), _) => FStarMode::Known(f),
        (None, Some(r)) => FStarMode::Offset(r),
        (None, None) => FStarMode::Offset(0.0),
    };
    let f_ref = f_star_mode.value();
    let has_grad = problem.has_gradients();

    let feasibility = constants.as_ref().map(|c| match c {
        TheoremConstants::First(c) => c.feasibility.clone(),
        TheoremConstants::Zeroth(c) => c.feasibility.clone(),
    });
    let mut summary = Summary {
        algorithm: spec.algorithm,
        mode: spec.mode,
        n,
        p,
        alpha: spec.step.alpha,
        beta: spec.step.beta,
        eta: spec.step.eta,
        iterations_requested: spec.iterations,
        iterations_completed: 0,
        p_initial: f64::NAN,
        p_final: f64::NAN,
        rate_series: String::new(),
        fitted_ratio: None,
        feasible: feasibility.as_ref().map(|f| f.is_feasible()),
        feasibility_violations: feasibility
            .map(|f| {
                f.violations
                    .into_iter()
                    .map(|v| format!("{}: {}", v.condition, v.detail))
                    .collect()
            })
            .unwrap_or_default(),
        monitors_active: monitors,
        descent_checked: 0,
        descent_violations: 0,
        first_violation: None,
        max_scaled_residual: None,
        sandwich_checked: 0,
        sandwich_violations: 0,
        max_dual_sum: 0.0,
        max_mean_dynamics: 0.0,
        invariant_violations: 0,
        diverged_at: None,
        divergence: None,
        f_star_mode,
        envelopes: Vec::new(),
        envelope_errors: Vec::new(),
    };

    let mut records: Vec<IterRecord> = Vec::with_capacity(spec.iterations + 1);
    let mut best_p = f64::INFINITY;
    loop {
        let k = stepper.state.k;
        let delta = stepper.delta(k);
        let dirs = stepper.directions()?;
        let xbar_row = row_mean(&stepper.state.x);
        let xbar = DMatrix::from_fn(n, p, |_, l| xbar_row[l]);
        let (dual_dirs, true_at_mean) = match delta {
            Some(d) => {
                let h0 = local_estimates(problem, &xbar, d)?;
                let g0 = if has_grad {
                    local_gradients(problem, &xbar)?
                } else {
                    h0.clone()
                };
                (h0, g0)
            }
            None => {
                let g0 = local_gradients(problem, &xbar)?;
                (g0.clone(), g0)
            }
        };
        let f_bar = problem.global_value(&xbar_row);
        let snap = snapshot(
            &stepper.state,
            &dirs,
            &dual_dirs,
            &true_at_mean,
            f_bar,
            spectral,
            &spec.step,
            f_ref,
        )?;
        let mut rec = IterRecord::from_snapshot(k, &snap, delta, n);
        let p_now = rec.p_metric;
        if k == 0 {
            summary.p_initial = p_now;
        } else {
            best_p = best_p.min(p_now);
            rec.p_metric = best_p;
        }
        rec.proj_dist_sq = projection_distance_sq(problem, &stepper.state.x);

        if monitors {
            let c = constants.as_ref().unwrap();
            if let Some(prev) = records.last() {
                let residual = match c {
                    TheoremConstants::First(c) => descent_check_first_order(prev, &rec, c),
                    TheoremConstants::Zeroth(c) => {
                        descent_check_zeroth_order(prev, &rec, c, prev.delta.unwrap_or(0.0), delta.unwrap_or(0.0))
                    }
                };
                rec.residual = Some(residual);
                summary.descent_checked += 1;
                let scaled = residual / (1.0 + prev.lyapunov.abs());
                summary.max_scaled_residual = Some(summary.max_scaled_residual.map_or(scaled, |m: f64| m.max(scaled)));
                if residual > descent_slack(prev.lyapunov) {
                    summary.descent_violations += 1;
                    summary.first_violation.get_or_insert(k);
                }
            }
            if f_star_mode.is_known() {
                let (e8, e9) = match c {
                    TheoremConstants::First(c) => (c.eps8, c.eps9),
                    TheoremConstants::Zeroth(c) => (c.eps8, c.eps9),
                };
                let slack = 1e-9 * (1.0 + rec.lyapunov.abs());
                summary.sandwich_checked += 1;
                if rec.lyapunov < e9 * rec.v_hat - slack || rec.lyapunov > e8 * rec.v_hat + slack {
                    summary.sandwich_violations += 1;
                }
            }
        }
        records.push(rec);
        summary.iterations_completed = k;
        if k >= spec.iterations {
            break;
        }

        let prev_x = stepper.state.x.clone();
        if let Err(e) = stepper.advance_with(&dirs) {
            match e {
                EngineError::Diverged { k, reason } => {
                    summary.diverged_at = Some(k);
                    summary.divergence = Some(reason);
                    break;
                }
                other => return Err(other.into()),
            }
        }
        if spec.invariants {
            let st = &stepper.state;
            if spec.algorithm.conserves_dual_sum() {
                let vmax = (0..n).map(|i| st.v.row(i).norm()).fold(0.0, f64::max);
                let sum: f64 = row_mean(&st.v)
                    .iter()
                    .map(|t| (t * n as f64).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let rel = sum / (1.0 + vmax);
                summary.max_dual_sum = summary.max_dual_sum.max(rel);
                if rel > INVARIANT_TOL {
                    summary.invariant_violations += 1;
                }
            }
            if spec.algorithm != Algorithm::FirstOrderVariant || spec.v0 == V0Init::Zeros {
                let old = row_mean(&prev_x);
                let new = row_mean(&st.x);
                let dbar = row_mean(&dirs);
                let defect: f64 = (0..p)
                    .map(|l| (new[l] - (old[l] - spec.step.eta * dbar[l])).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let norm: f64 = old.iter().map(|t| t * t).sum::<f64>().sqrt();
                let rel = defect / (1.0 + norm);
                summary.max_mean_dynamics = summary.max_mean_dynamics.max(rel);
                if rel > INVARIANT_TOL {
                    summary.invariant_violations += 1;
                }
            }
        }
    }

    if let FStarMode::Offset(_) = f_star_mode {
        if spec.f_reference.is_none() {
            // best value seen stands in for the optimum
            let best = records.iter().map(|r| r.f_bar).fold(f64::INFINITY, f64::min);
            let shift = n as f64 * best;
            for r in &mut records {
                r.lyapunov -= shift;
                r.v_hat -= shift;
            }
            summary.f_star_mode = FStarMode::Offset(best);
        }
    }

    summary.p_final = records.last().map(|r| r.p_metric).unwrap_or(f64::NAN);
    let series: Vec<f64> = match f_star_mode {
        FStarMode::Known(f) => {
            summary.rate_series = "optimality_measure".into();
            records.iter().map(|r| r.optimality_measure(n, f)).collect()
        }
        FStarMode::Offset(_) => {
            summary.rate_series = "p_value".into();
            records
                .iter()
                .map(|r| (r.grad_at_mean_sq + r.consensus_sq) / n as f64)
                .collect()
        }
    };
    if series.len() >= 4 {
        summary.fitted_ratio = fit_rate_tail(&series).ok().map(|f| f.ratio).filter(|r| r.is_finite());
    }

    if spec.mode == Mode::Theorem && summary.feasible == Some(false) {
        // bounds built from out-of-window constants are not certificates
        summary
            .envelope_errors
            .push("parameters outside the certificate window; envelopes not checked".into());
    } else if spec.mode == Mode::Theorem {
        if let (Some(c), FStarMode::Known(f)) = (&constants, f_star_mode) {
            let schedule = stepper.schedule;
            let inputs = EnvelopeInputs {
                constants: c.clone(),
                n,
                f_star: Some(f),
                delta_sq_total: schedule.and_then(|s| s.square_sums(0).infinite).map(|t| n as f64 * t),
                eps_hat: schedule
                    .filter(|s| s.kind == ScheduleKind::Geometric)
                    .map(|s| s.eps_hat),
                eps_breve: spec.eps_breve,
            };
            let kinds = spec
                .envelopes
                .clone()
                .unwrap_or_else(|| applicable_envelopes(c, problem, schedule));
            for kind in kinds {
                if kind == EnvelopeKind::Thm4Linear {
                    if let Some(s) = schedule {
                        if !s.is_dominated_by(s.eps_hat) {
                            summary.envelope_errors.push(format!(
                                "{}: schedule does not satisfy delta_k <= eps_hat^(k/2)",
                                kind.name()
                            ));
                            continue;
                        }
                    }
                }
                match envelope_check(&records, &inputs, kind) {
                    Ok(r) => summary.envelopes.push(r),
                    Err(e) => summary.envelope_errors.push(format!("{}: {e}", kind.name())),
                }
            }
            let column = match c {
                TheoremConstants::First(_) => EnvelopeKind::Thm2Linear,
                TheoremConstants::Zeroth(_) => EnvelopeKind::Thm4Linear,
            };
            if summary.envelopes.iter().any(|r| r.kind == column) {
                let vals: Vec<Option<f64>> = (0..records.len())
                    .map(|k| envelope_value(column, &inputs, &records, k).ok())
                    .collect();
                for (r, v) in records.iter_mut().zip(vals) {
                    r.envelope = v;
                }
            }
        }
    }

    Ok(Trace {
        records,
        summary,
        constants,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    /// `(k, ||x_a - x_b||, ||x_a - x_b|| / ||x_a||)`.
    pub per_iteration: Vec<(usize, f64, f64)>,
    pub max_abs: f64,
    pub max_rel: f64,
}

impl CompareReport {
    fn from_rows(rows: Vec<(usize, f64, f64)>) -> Self {
        let max_abs = rows.iter().map(|r| r.1).fold(0.0, f64::max);
        let max_rel = rows.iter().map(|r| r.2).fold(0.0, f64::max);
        CompareReport {
            per_iteration: rows,
            max_abs,
            max_rel,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,abs_dev,rel_dev\n");
        for (k, a, r) in &self.per_iteration {
            writeln!(s, "{k},{a},{r}").unwrap();
        }
        s
    }
}

fn deviation(k: usize, a: &DMatrix<f64>, b: &DMatrix<f64>) -> (usize, f64, f64) {
    let d = (a - b).norm();
    let scale = a.norm();
    (k, d, if scale > 0.0 { d / scale } else { d })
}

/// Steps two runs in lockstep for `window` rounds and records the stacked
/// state deviation.
pub fn compare_runs(
    problem: &ProblemInstance,
    spectral: &SpectralData,
    a: &RunSpec,
    b: &RunSpec,
    window: usize,
) -> Result<CompareReport, RunError> {
    let mut sa = Stepper::new(problem, spectral, a)?;
    let mut sb = Stepper::new(problem, spectral, b)?;
    if sa.state.x.shape() != sb.state.x.shape() {
        return Err(RunError::Compare("runs have different dimensions".into()));
    }
    let mut rows = vec![deviation(0, &sa.state.x, &sb.state.x)];
    for k in 1..=window {
        sa.advance()?;
        sb.advance()?;
        rows.push(deviation(k, &sa.state.x, &sb.state.x));
    }
    Ok(CompareReport::from_rows(rows))
}

/// Compares the first-order method against the two-term recursion it is
/// algebraically equivalent to.
pub fn compare_with_extra(
    problem: &ProblemInstance,
    spectral: &SpectralData,
    spec: &RunSpec,
    window: usize,
) -> Result<CompareReport, RunError> {
    if spec.algorithm != Algorithm::FirstOrder {
        return Err(RunError::Compare(
            "the reference recursion matches the first-order method only".into(),
        ));
    }
    let mut s = Stepper::new(problem, spectral, spec)?;
    let x0 = s.state.x.clone();
    let mut rows = vec![deviation(0, &x0, &x0)];
    if window == 0 {
        return Ok(CompareReport::from_rows(rows));
    }
    s.advance()?;
    let mut extra = ExtraReference::new(problem, spectral, spec.step, x0, s.state.x.clone())?;
    rows.push(deviation(1, &s.state.x, extra.current()));
    for k in 2..=window {
        s.advance()?;
        let xe = extra.advance()?;
        rows.push(deviation(k, &s.state.x, xe));
    }
    Ok(CompareReport::from_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::params::{select_first_order_params, SelectionOptions};
    use crate::problems::quadratic_problem;

    fn setup() -> (ProblemInstance, SpectralData, RunSpec) {
        let prob = quadratic_problem(4, 2, 3, 1.0).unwrap();
        let sd = SpectralData::new(&Graph::ring(4).unwrap()).unwrap();
        let pc = ProblemConstants::from_problem(&prob, &sd).unwrap();
        let c = select_first_order_params(&pc, &SelectionOptions::default()).unwrap();
        let spec = RunSpec::new(Algorithm::FirstOrder, c.step, 200);
        (prob, sd, spec)
    }

    #[test]
    fn zero_iterations_gives_initial_row() {
        let (prob, sd, mut spec) = setup();
        spec.iterations = 0;
        let t = run(&prob, &sd, &spec).unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.records[0].k, 0);
    }

    #[test]
    fn deterministic() {
        let (prob, sd, spec) = setup();
        let a = run(&prob, &sd, &spec).unwrap();
        let b = run(&prob, &sd, &spec).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn csv_round_trip() {
        let (prob, sd, spec) = setup();
        let t = run(&prob, &sd, &spec).unwrap();
        let back = records_from_csv(&t.to_csv()).unwrap();
        assert_eq!(back, t.records);
    }

    #[test]
    fn self_compare_is_zero() {
        let (prob, sd, spec) = setup();
        let r = compare_runs(&prob, &sd, &spec, &spec, 20).unwrap();
        assert_eq!(r.max_abs, 0.0);
    }

    #[test]
    fn zeroth_needs_schedule() {
        let (prob, sd, mut spec) = setup();
        spec.algorithm = Algorithm::ZerothOrder;
        assert!(matches!(run(&prob, &sd, &spec), Err(RunError::MissingSchedule)));
    }
}
