//! Deterministic forward-difference gradient estimator and smoothing
//! parameter schedules.

use serde::{Deserialize, Serialize};

use crate::problems::CostOracle;

#[derive(Debug, thiserror::Error)]
pub enum ZerothError {
    #[error("smoothing parameter must be positive and finite, got {0}")]
    BadDelta(f64),
    #[error("invalid schedule: {0}")]
    BadSchedule(String),
}

/// `(1/delta) sum_l (f(x + delta e_l) - f(x)) e_l`, using exactly `p + 1`
/// evaluations of `f`.
pub fn estimate_gradient(oracle: &dyn CostOracle, x: &[f64], delta: f64) -> Result<Vec<f64>, ZerothError> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(ZerothError::BadDelta(delta));
    }
    let f0 = oracle.value(x);
    let mut y = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for l in 0..x.len() {
        y[l] = x[l] + delta;
        g.push((oracle.value(&y) - f0) / delta);
        y[l] = x[l];
    }
    Ok(g)
}

/// Worst-case estimator error `sqrt(p) L delta / 2`.
pub fn estimator_error_bound(p: usize, smoothness: f64, delta: f64) -> f64 {
    (p as f64).sqrt() * smoothness * delta / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    /// `delta0 * eps_hat^(k/2)`
    Geometric,
    /// `delta0 / (k + 1)`
    SquareSummable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaSchedule {
    pub kind: ScheduleKind,
    pub delta0: f64,
    /// Decay factor of the geometric kind, in (0, 1).
    #[serde(default = "default_eps_hat")]
    pub eps_hat: f64,
}

fn default_eps_hat() -> f64 {
    0.99
}

/// Partial and (when finite) infinite sums of `delta_k^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquareSums {
    pub partial: f64,
    pub infinite: Option<f64>,
}

impl DeltaSchedule {
    pub fn constant(delta0: f64) -> Self {
        DeltaSchedule {
            kind: ScheduleKind::Constant,
            delta0,
            eps_hat: default_eps_hat(),
        }
    }

    pub fn geometric(delta0: f64, eps_hat: f64) -> Self {
        DeltaSchedule {
            kind: ScheduleKind::Geometric,
            delta0,
            eps_hat,
        }
    }

    pub fn square_summable(delta0: f64) -> Self {
        DeltaSchedule {
            kind: ScheduleKind::SquareSummable,
            delta0,
            eps_hat: default_eps_hat(),
        }
    }

    pub fn validate(&self) -> Result<(), ZerothError> {
        if !(self.delta0.is_finite() && self.delta0 > 0.0) {
            return Err(ZerothError::BadDelta(self.delta0));
        }
        if self.kind == ScheduleKind::Geometric && !(self.eps_hat > 0.0 && self.eps_hat < 1.0) {
            return Err(ZerothError::BadSchedule(format!(
                "eps_hat must lie in (0,1), got {}",
                self.eps_hat
            )));
        }
        Ok(())
    }

    pub fn at(&self, k: usize) -> f64 {
        match self.kind {
            ScheduleKind::Constant => self.delta0,
            ScheduleKind::Geometric => self.delta0 * self.eps_hat.powf(k as f64 / 2.0),
            ScheduleKind::SquareSummable => self.delta0 / (k as f64 + 1.0),
        }
    }

    /// `sum_{k=0}^{last} delta_k^2`, plus the infinite sum when it converges.
    pub fn square_sums(&self, last: usize) -> SquareSums {
        let partial = (0..=last).map(|k| self.at(k).powi(2)).sum();
        let d2 = self.delta0 * self.delta0;
        let infinite = match self.kind {
            ScheduleKind::Constant => None,
            ScheduleKind::Geometric => Some(d2 / (1.0 - self.eps_hat)),
            ScheduleKind::SquareSummable => Some(d2 * std::f64::consts::PI.powi(2) / 6.0),
        };
        SquareSums { partial, infinite }
    }

    /// Whether `delta_k <= eps_hat^(k/2)` holds for every `k`, which the
    /// linear-rate certificate of the zeroth-order method asks for.
    pub fn is_dominated_by(&self, eps_hat: f64) -> bool {
        match self.kind {
            ScheduleKind::Geometric => self.delta0 <= 1.0 && self.eps_hat <= eps_hat,
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{CallCounter, LinearCost, QuadraticCost};
    use std::sync::Arc;

    #[test]
    fn half_norm_at_origin() {
        let q = QuadraticCost::isotropic(vec![0.0, 0.0], 1.0);
        let g = estimate_gradient(&q, &[0.0, 0.0], 0.1).unwrap();
        assert!((g[0] - 0.05).abs() < 1e-15 && (g[1] - 0.05).abs() < 1e-15);
        let err = (g[0].powi(2) + g[1].powi(2)).sqrt();
        assert!((err - estimator_error_bound(2, 1.0, 0.1)).abs() < 1e-15);
    }

    #[test]
    fn exact_on_linear_costs() {
        let f = LinearCost {
            coeffs: vec![1.5, -2.0, 0.25],
            declared_smoothness: 0.0,
        };
        let g = estimate_gradient(&f, &[0.3, 0.1, -4.0], 0.5).unwrap();
        for (a, b) in g.iter().zip([1.5, -2.0, 0.25]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn uses_p_plus_one_calls() {
        let c = CallCounter::new(Arc::new(QuadraticCost::isotropic(vec![0.0; 7], 1.0)));
        estimate_gradient(&c, &[0.5; 7], 1e-3).unwrap();
        assert_eq!(c.value_calls(), 8);
        assert_eq!(c.gradient_calls(), 0);
    }

    #[test]
    fn rejects_bad_delta() {
        let q = QuadraticCost::isotropic(vec![0.0], 1.0);
        assert!(estimate_gradient(&q, &[0.0], 0.0).is_err());
        assert!(estimate_gradient(&q, &[0.0], -1.0).is_err());
        assert!(estimate_gradient(&q, &[0.0], f64::NAN).is_err());
    }

    #[test]
    fn schedules() {
        let g = DeltaSchedule::geometric(0.1, 0.81);
        assert!((g.at(2) - 0.081).abs() < 1e-15);
        let s = g.square_sums(10_000);
        assert!((s.infinite.unwrap() - 0.01 / 0.19).abs() < 1e-15);
        assert!((s.partial - s.infinite.unwrap()).abs() < 1e-12);
        let c = DeltaSchedule::constant(0.1);
        assert!(c.square_sums(99).infinite.is_none());
        assert!((c.square_sums(99).partial - 1.0).abs() < 1e-12);
        let h = DeltaSchedule::square_summable(1.0);
        assert!((h.at(3) - 0.25).abs() < 1e-15);
        assert!(DeltaSchedule::geometric(0.1, 1.0).validate().is_err());
        assert!(DeltaSchedule::constant(0.0).validate().is_err());
    }
}
