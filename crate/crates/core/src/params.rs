//! Certificate constants, admissible parameter windows and automatic
//! parameter selection.

use serde::{Deserialize, Serialize};

use crate::graph::SpectralData;
use crate::problems::ProblemInstance;

#[derive(Debug, thiserror::Error)]
pub enum ParamsError {
    #[error("invalid problem constants: {0}")]
    BadConstants(String),
    #[error("invalid selection option: {0}")]
    BadOption(String),
    #[error("no admissible step size: {0}")]
    EmptyWindow(String),
    #[error("the P-L constant is required for this quantity")]
    MissingNu,
    #[error("geometric sum bound: {0}")]
    BadSum(String),
}

/// Problem-side inputs to every certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub smoothness: f64,
    pub rho: f64,
    pub rho2: f64,
    pub n: usize,
    pub p: usize,
    pub nu: Option<f64>,
}

impl ProblemConstants {
    pub fn new(smoothness: f64, rho: f64, rho2: f64, n: usize, p: usize, nu: Option<f64>) -> Result<Self, ParamsError> {
        if !(smoothness.is_finite() && smoothness > 0.0) {
            return Err(ParamsError::BadConstants(format!(
                "smoothness must be positive, got {smoothness}"
            )));
        }
        if !(rho2 > 0.0 && rho >= rho2 && rho.is_finite()) {
            return Err(ParamsError::BadConstants(format!(
                "need rho >= rho2 > 0, got rho={rho}, rho2={rho2}"
            )));
        }
        if n == 0 || p == 0 {
            return Err(ParamsError::BadConstants("n and p must be positive".into()));
        }
        if let Some(nu) = nu {
            if !(nu.is_finite() && nu > 0.0) {
                return Err(ParamsError::BadConstants(format!(
                    "P-L constant must be positive, got {nu}"
                )));
            }
        }
        Ok(ProblemConstants {
            smoothness,
            rho,
            rho2,
            n,
            p,
            nu,
        })
    }

    pub fn from_problem(problem: &ProblemInstance, spectral: &SpectralData) -> Result<Self, ParamsError> {
        if problem.n() != spectral.n() {
            return Err(ParamsError::BadConstants(format!(
                "problem has {} agents but graph has {} nodes",
                problem.n(),
                spectral.n()
            )));
        }
        ProblemConstants::new(
            problem.smoothness,
            spectral.rho,
            spectral.rho2,
            problem.n(),
            problem.dim(),
            problem.nu(),
        )
    }
}

impl ProblemInstance {
    fn nu(&self) -> Option<f64> {
        self.pl_nu
    }
}

/// One violated window condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub condition: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn flags(&self, condition: &str) -> bool {
        self.violations.iter().any(|v| v.condition == condition)
    }

    fn require(&mut self, ok: bool, condition: &str, detail: String) {
        if !ok {
            self.violations.push(Violation {
                condition: condition.to_string(),
                detail,
            });
        }
    }
}

pub const COND_KAPPA2: &str = "kappa2 above one";
pub const COND_BETA: &str = "beta lower bound";
pub const COND_ALPHA_LOW: &str = "alpha lower bound";
pub const COND_ALPHA_HIGH: &str = "alpha upper bound";
pub const COND_ETA_POS: &str = "eta positive";
pub const COND_ETA_HIGH: &str = "eta upper bound";

/// `alpha`, `beta`, `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepParams {
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
}

/// Constants of the first-order certificates for a given parameter triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderConstants {
    pub problem: ProblemConstants,
    pub kappa2: f64,
    pub step: StepParams,
    pub kappa1: f64,
    pub kappa3: f64,
    pub kappa4: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub eps4: f64,
    pub eps5: f64,
    pub eps6: f64,
    pub eps7: f64,
    pub eps8: f64,
    pub eps9: f64,
    pub eps10: Option<f64>,
    /// Linear rate `eps10 / eps8`.
    pub rate: Option<f64>,
    pub beta_lower: f64,
    pub alpha_lower: f64,
    pub alpha_upper: f64,
    pub eta_upper: f64,
    pub feasibility: FeasibilityReport,
}

fn kappa3(kappa2: f64, rho2: f64) -> f64 {
    0.25 * (1.0 + (1.0 + 8.0 * kappa2 + 8.0 / rho2).sqrt())
}

fn eps3(alpha: f64, beta: f64, rho2: f64) -> f64 {
    beta - 0.5 - alpha / (2.0 * beta * beta) - 1.0 / (2.0 * beta * rho2)
}

fn eps4(beta: f64) -> f64 {
    2.0 * beta * beta + 0.5
}

fn eps8(alpha: f64, beta: f64, rho2: f64) -> f64 {
    (alpha + beta) / (2.0 * beta) + 1.0 / (2.0 * rho2)
}

fn eps9(alpha: f64, beta: f64, rho: f64) -> f64 {
    (1.0 / (2.0 * rho)).min((alpha - beta) / (2.0 * alpha))
}

/// Minimum of the ratios, or 0 when a numerator is not positive.
fn window(pairs: &[(f64, f64)]) -> f64 {
    pairs
        .iter()
        .map(|&(num, den)| if num > 0.0 && den > 0.0 { num / den } else { 0.0 })
        .fold(f64::INFINITY, f64::min)
}

impl FirstOrderConstants {
    pub fn compute(pc: &ProblemConstants, kappa2: f64, step: StepParams) -> Self {
        let StepParams { alpha, beta, eta } = step;
        let (lf, rho, rho2) = (pc.smoothness, pc.rho, pc.rho2);
        let l2 = lf * lf;
        let kappa1 = (2.0 + 3.0 * l2) / (2.0 * rho2);
        let k3 = kappa3(kappa2, rho2);
        let s = kappa2 + 1.0 / rho2;
        let kappa4 = s * l2 + (s * s * l2 + 2.0).sqrt() * lf;
        let eps1 = (alpha - beta) * rho2 - 0.5 * (2.0 + 3.0 * l2);
        let eps2 = beta * beta * rho + (2.0 * alpha * alpha + beta * beta) * rho * rho + 2.5 * l2;
        let e3 = eps3(alpha, beta, rho2);
        let e4 = eps4(beta);
        let t = 1.0 / beta + 1.0 / rho2 + alpha / beta;
        let eps5 = 0.25 - t * l2 / (2.0 * beta);
        let eps6 = (1.0 + 1.0 / rho2 + alpha / beta) * l2 / (beta * beta) + lf * (1.0 + lf) / 2.0;
        let eps7 = eta * (eps1 - eta * eps2).min(e3 - eta * e4).min(eps5 - eta * eps6).min(0.25);
        let e8 = eps8(alpha, beta, rho2);
        let e9 = eps9(alpha, beta, rho);
        let eps10 = pc
            .nu
            .map(|nu| eta * (eps1 - eta * eps2).min(e3 - eta * e4).min(nu / 2.0));
        let rate = eps10.map(|e| e / e8);

        let beta_lower = (kappa1 / (kappa2 - 1.0)).max(k3).max(kappa4);
        let alpha_lower = beta + kappa1;
        let alpha_upper = kappa2 * beta;
        let eta_upper = window(&[(eps1, eps2), (e3, e4), (eps5, eps6)]);
        let feasibility = check_windows(kappa2, step, beta_lower, alpha_lower, alpha_upper, eta_upper);
        FirstOrderConstants {
            problem: *pc,
            kappa2,
            step,
            kappa1,
            kappa3: k3,
            kappa4,
            eps1,
            eps2,
            eps3: e3,
            eps4: e4,
            eps5,
            eps6,
            eps7,
            eps8: e8,
            eps9: e9,
            eps10,
            rate,
            beta_lower,
            alpha_lower,
            alpha_upper,
            eta_upper,
            feasibility,
        }
    }

    /// `beta` minus its lower bound; positive inside the window.
    pub fn beta_slack(&self) -> f64 {
        self.step.beta - self.beta_lower
    }

    /// Scale `c = eps8 * V_hat_0 / eps9` of the linear envelope.
    pub fn envelope_scale(&self, v_hat0: f64) -> f64 {
        self.eps8 * v_hat0 / self.eps9
    }
}

fn check_windows(
    kappa2: f64,
    step: StepParams,
    beta_lower: f64,
    alpha_lower: f64,
    alpha_upper: f64,
    eta_upper: f64,
) -> FeasibilityReport {
    let StepParams { alpha, beta, eta } = step;
    let mut r = FeasibilityReport::default();
    r.require(kappa2 > 1.0, COND_KAPPA2, format!("kappa2 = {kappa2} must exceed 1"));
    r.require(
        beta > beta_lower,
        COND_BETA,
        format!("beta = {beta} must exceed {beta_lower}"),
    );
    r.require(
        alpha > alpha_lower,
        COND_ALPHA_LOW,
        format!("alpha = {alpha} must exceed {alpha_lower}"),
    );
    r.require(
        alpha <= alpha_upper,
        COND_ALPHA_HIGH,
        format!("alpha = {alpha} must not exceed {alpha_upper}"),
    );
    r.require(eta > 0.0, COND_ETA_POS, format!("eta = {eta} must be positive"));
    r.require(
        eta < eta_upper,
        COND_ETA_HIGH,
        format!("eta = {eta} must be below {eta_upper}"),
    );
    r
}

/// Constants of the zeroth-order certificates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZerothOrderConstants {
    pub problem: ProblemConstants,
    pub kappa2: f64,
    pub step: StepParams,
    pub kappa1: f64,
    pub kappa3: f64,
    pub kappa4: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub eps4: f64,
    pub eps5: f64,
    pub eps6: f64,
    pub eps7: f64,
    pub eps8: f64,
    pub eps9: f64,
    pub eps10: Option<f64>,
    pub eps11: f64,
    pub eps12: f64,
    /// Linear rate `eps10 / eps8`.
    pub rate: Option<f64>,
    pub beta_lower: f64,
    pub alpha_lower: f64,
    pub alpha_upper: f64,
    pub eta_upper: f64,
    pub feasibility: FeasibilityReport,
}

impl ZerothOrderConstants {
    pub fn compute(pc: &ProblemConstants, kappa2: f64, step: StepParams) -> Self {
        let StepParams { alpha, beta, eta } = step;
        let (lf, rho, rho2) = (pc.smoothness, pc.rho, pc.rho2);
        let l2 = lf * lf;
        let kappa1 = (2.0 + 9.0 * l2) / (2.0 * rho2);
        let k3 = kappa3(kappa2, rho2);
        let s = kappa2 + 1.0 / rho2;
        let kappa4 = 6.0 * s * l2 + 2.0 * (9.0 * s * s * l2 * l2 + 3.0 * l2).sqrt();
        let eps1 = (alpha - beta) * rho2 - 0.5 * (2.0 + 9.0 * l2);
        let eps2 = beta * beta * rho + (2.0 * alpha * alpha + beta * beta) * rho * rho + 7.5 * l2;
        let e3 = eps3(alpha, beta, rho2);
        let e4 = eps4(beta);
        let t = 1.0 / beta + 1.0 / rho2 + alpha / beta;
        let eps5 = 0.125 - 1.5 * t * l2 / beta;
        let eps6 = 3.0 * (1.0 + 1.0 / rho2 + alpha / beta) * l2 / (beta * beta) + lf * (1.0 + 3.0 * lf) / 2.0;
        let eps7 = eta * (eps1 - eta * eps2).min(0.125);
        let e8 = eps8(alpha, beta, rho2);
        let e9 = eps9(alpha, beta, rho);
        let scale = 3.0 * (pc.n * pc.p) as f64 * l2 / 4.0;
        let u = 1.0 / rho2 + alpha / beta;
        let eps12 = ((1.0 / (beta * beta) + 1.0 / (2.0 * eta * beta)) * u
            + 1.0 / (2.0 * eta * beta * beta)
            + 1.0 / (beta * beta)
            + 0.5)
            * scale;
        let eps11 = (15.0 * eta / 4.0 + 5.0 * eta * eta) * scale + eps12;
        let eps10 = pc
            .nu
            .map(|nu| eta * (eps1 - eta * eps2).min(e3 - eta * e4).min(nu / 4.0));
        let rate = eps10.map(|e| e / e8);

        let beta_lower = (kappa1 / (kappa2 - 1.0)).max(k3).max(kappa4);
        let alpha_lower = beta + kappa1;
        let alpha_upper = kappa2 * beta;
        let eta_upper = window(&[(eps1, eps2), (e3, e4), (eps5, eps6)]);
        let feasibility = check_windows(kappa2, step, beta_lower, alpha_lower, alpha_upper, eta_upper);
        ZerothOrderConstants {
            problem: *pc,
            kappa2,
            step,
            kappa1,
            kappa3: k3,
            kappa4,
            eps1,
            eps2,
            eps3: e3,
            eps4: e4,
            eps5,
            eps6,
            eps7,
            eps8: e8,
            eps9: e9,
            eps10,
            eps11,
            eps12,
            rate,
            beta_lower,
            alpha_lower,
            alpha_upper,
            eta_upper,
            feasibility,
        }
    }

    pub fn beta_slack(&self) -> f64 {
        self.step.beta - self.beta_lower
    }

    /// `eps8 * U_hat_0 + (eps11 + eps12) * sum_i sum_k delta_{i,k}^2`.
    pub fn c_tilde(&self, u_hat0: f64, delta_sq_total: f64) -> f64 {
        self.eps8 * u_hat0 + (self.eps11 + self.eps12) * delta_sq_total
    }

    /// The tail term of the zeroth-order linear envelope at index `k`.
    pub fn phi(&self, eps_hat: f64, eps_breve: f64, k: usize) -> Result<f64, ParamsError> {
        let rate = self.rate.ok_or(ParamsError::MissingNu)?;
        if !(eps_hat > 0.0 && eps_hat < 1.0) {
            return Err(ParamsError::BadOption(format!(
                "eps_hat must lie in (0,1), got {eps_hat}"
            )));
        }
        if !(eps_breve > eps_hat && eps_breve < 1.0) {
            return Err(ParamsError::BadOption(format!(
                "eps_breve must lie in (eps_hat,1), got {eps_breve}"
            )));
        }
        let a = 1.0 - rate;
        let pre = self.eps11 / a + self.eps12;
        let k1 = (k + 1) as f64;
        let tail = if a > eps_hat {
            a.powf(k1) / (a - eps_hat)
        } else if a < eps_hat {
            eps_hat.powf(k1) / (eps_hat - a)
        } else {
            eps_breve.powf(k1) / (eps_breve - eps_hat)
        };
        Ok(pre * tail)
    }
}

/// Knobs of the automatic parameter selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionOptions {
    pub kappa2: f64,
    /// `beta = (1 + beta_margin) * beta_lower`.
    pub beta_margin: f64,
    /// Position of `alpha` inside `(beta + kappa1, kappa2 * beta]`; 1 picks
    /// the upper end.
    pub alpha_frac: f64,
    /// Fraction of the supremum of the step-size window.
    pub eta_safety: f64,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        SelectionOptions {
            kappa2: 2.0,
            beta_margin: 0.05,
            alpha_frac: 0.5,
            eta_safety: 0.5,
        }
    }
}

/// Largest fraction of the step-size supremum the selector will use.
pub const ETA_SAFETY_CAP: f64 = 0.999;

impl SelectionOptions {
    fn validate(&self) -> Result<(), ParamsError> {
        if !(self.kappa2 > 1.0 && self.kappa2.is_finite()) {
            return Err(ParamsError::BadOption(format!(
                "kappa2 must exceed 1, got {}",
                self.kappa2
            )));
        }
        if !(self.beta_margin > 0.0 && self.beta_margin.is_finite()) {
            return Err(ParamsError::BadOption(format!(
                "beta_margin must be positive (the lower bound is strict), got {}",
                self.beta_margin
            )));
        }
        if !(self.alpha_frac > 0.0 && self.alpha_frac <= 1.0) {
            return Err(ParamsError::BadOption(format!(
                "alpha_frac must lie in (0,1], got {}",
                self.alpha_frac
            )));
        }
        if !(self.eta_safety > 0.0 && self.eta_safety <= 1.0) {
            return Err(ParamsError::BadOption(format!(
                "eta_safety must lie in (0,1], got {}",
                self.eta_safety
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Family {
    First,
    Zeroth,
}

fn select(pc: &ProblemConstants, opts: &SelectionOptions, family: Family) -> Result<StepParams, ParamsError> {
    opts.validate()?;
    // the beta and alpha windows do not depend on alpha or eta, so a probe
    // evaluation with placeholder values gives them
    let probe = StepParams {
        alpha: 1.0,
        beta: 1.0,
        eta: 1.0,
    };
    let (beta_lower, kappa1) = match family {
        Family::First => {
            let c = FirstOrderConstants::compute(pc, opts.kappa2, probe);
            (c.beta_lower, c.kappa1)
        }
        Family::Zeroth => {
            let c = ZerothOrderConstants::compute(pc, opts.kappa2, probe);
            (c.beta_lower, c.kappa1)
        }
    };
    let beta = (1.0 + opts.beta_margin) * beta_lower;
    let lo = beta + kappa1;
    let hi = opts.kappa2 * beta;
    if lo >= hi {
        return Err(ParamsError::EmptyWindow(format!("alpha window ({lo}, {hi}] is empty")));
    }
    let alpha = lo + opts.alpha_frac * (hi - lo);
    let probe = StepParams { alpha, beta, eta: 1.0 };
    let eta_upper = match family {
        Family::First => FirstOrderConstants::compute(pc, opts.kappa2, probe).eta_upper,
        Family::Zeroth => ZerothOrderConstants::compute(pc, opts.kappa2, probe).eta_upper,
    };
    if !(eta_upper > 0.0 && eta_upper.is_finite()) {
        return Err(ParamsError::EmptyWindow(format!("step-size supremum is {eta_upper}")));
    }
    let eta = opts.eta_safety.min(ETA_SAFETY_CAP) * eta_upper;
    Ok(StepParams { alpha, beta, eta })
}

/// Picks parameters strictly inside the first-order windows.
pub fn select_first_order_params(
    pc: &ProblemConstants,
    opts: &SelectionOptions,
) -> Result<FirstOrderConstants, ParamsError> {
    let step = select(pc, opts, Family::First)?;
    let c = FirstOrderConstants::compute(pc, opts.kappa2, step);
    debug_assert!(c.feasibility.is_feasible(), "{:?}", c.feasibility);
    Ok(c)
}

/// Picks parameters strictly inside the zeroth-order windows.
pub fn select_zeroth_order_params(
    pc: &ProblemConstants,
    opts: &SelectionOptions,
) -> Result<ZerothOrderConstants, ParamsError> {
    let step = select(pc, opts, Family::Zeroth)?;
    let c = ZerothOrderConstants::compute(pc, opts.kappa2, step);
    debug_assert!(c.feasibility.is_feasible(), "{:?}", c.feasibility);
    Ok(c)
}

/// Bound on `sum_{tau=0}^{k} a^tau b^(k-tau)` for `a, b` in (0,1).
/// When `a == b` the bound needs some `c` in `(a, 1)`; the midpoint of
/// `(a, 1)` is used if none is given.
pub fn geometric_cross_sum_bound(a: f64, b: f64, k: usize, c: Option<f64>) -> Result<f64, ParamsError> {
    for (name, v) in [("a", a), ("b", b)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(ParamsError::BadSum(format!("{name} must lie in (0,1), got {v}")));
        }
    }
    let k1 = (k + 1) as f64;
    if a > b {
        Ok(a.powf(k1) / (a - b))
    } else if a < b {
        Ok(b.powf(k1) / (b - a))
    } else {
        let c = c.unwrap_or((a + 1.0) / 2.0);
        if !(c > a && c < 1.0) {
            return Err(ParamsError::BadSum(format!("c must lie in ({a},1), got {c}")));
        }
        Ok(c.powf(k1) / (c - b))
    }
}
