use nalgebra::DMatrix;
use proptest::prelude::*;

use consensus_pd::diagnostics::{lyapunov_v, projection_factor, quadratic_growth_check, FStarMode, SampleSpec};
use consensus_pd::engine::{init_state, Algorithm, NetworkState, V0Init};
use consensus_pd::graph::{Graph, SpectralData};
use consensus_pd::params::{
    select_first_order_params, select_zeroth_order_params, FirstOrderConstants, ProblemConstants, SelectionOptions,
    StepParams,
};
use consensus_pd::problems::{
    logistic_problem, quadratic_problem, rank_deficient_ls_problem, sine_pl_problem, ProblemInstance, QuadraticCost,
};
use consensus_pd::zeroth::{estimate_gradient, estimator_error_bound};

fn constants() -> impl Strategy<Value = ProblemConstants> {
    (0.1f64..10.0, 0.05f64..5.0, 1.0f64..4.0, 2usize..30, 1usize..20)
        .prop_map(|(l, rho2, ratio, n, p)| ProblemConstants::new(l, rho2 * ratio, rho2, n, p, Some(0.5)).unwrap())
}

fn options() -> impl Strategy<Value = SelectionOptions> {
    (1.2f64..6.0, 0.01f64..1.0, 0.05f64..1.0, 0.05f64..0.999).prop_map(
        |(kappa2, beta_margin, alpha_frac, eta_safety)| SelectionOptions {
            kappa2,
            beta_margin,
            alpha_frac,
            eta_safety,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn selected_params_are_feasible(pc in constants(), opts in options()) {
        let c = select_first_order_params(&pc, &opts).unwrap();
        prop_assert!(c.feasibility.is_feasible(), "{:?}", c.feasibility);
        prop_assert!(c.rate.unwrap() > 0.0 && c.rate.unwrap() < 1.0);
        let z = select_zeroth_order_params(&pc, &opts).unwrap();
        prop_assert!(z.feasibility.is_feasible(), "{:?}", z.feasibility);
    }

    #[test]
    fn beta_slack_grows_with_beta(pc in constants(), b1 in 0.1f64..100.0, db in 0.0f64..50.0) {
        let at = |beta: f64| FirstOrderConstants::compute(&pc, 2.0, StepParams { alpha: 1.5 * beta, beta, eta: 1e-3 });
        let (s1, s2) = (at(b1).beta_slack(), at(b1 + db).beta_slack());
        prop_assert!(s2 >= s1);
        prop_assert!(((s2 - s1) - db).abs() <= 1e-9 * (1.0 + b1 + db));
    }

    #[test]
    fn lyapunov_sandwich(seed in 0u64..1000, n in 3usize..8, p in 1usize..4, scale in 0.1f64..10.0) {
        let prob = quadratic_problem(n, p, seed, 1.0).unwrap();
        let sd = SpectralData::new(&Graph::random_geometric(n, 0.7, seed).unwrap()).unwrap();
        let pc = ProblemConstants::from_problem(&prob, &sd).unwrap();
        let c = select_first_order_params(&pc, &SelectionOptions::default()).unwrap();
        let x0 = consensus_pd::engine::initial_x(n, p, consensus_pd::engine::X0Init::Random { seed, scale });
        let mut state = init_state(x0, V0Init::LaplacianOfX0, Algorithm::FirstOrder, &sd).unwrap();
        state.v *= scale;
        let f_star = prob.f_star.unwrap();
        let v = lyapunov_v(&state, &sd, &c.step, &prob, FStarMode::Known(f_star)).unwrap();
        let v_hat = v_hat_of(&state, &prob, &sd, &c.step, f_star);
        let slack = 1e-9 * (1.0 + v.abs());
        prop_assert!(v >= c.eps9 * v_hat - slack, "{v} < {} * {v_hat}", c.eps9);
        prop_assert!(v <= c.eps8 * v_hat + slack, "{v} > {} * {v_hat}", c.eps8);
    }

    #[test]
    fn laplacian_identities(n in 2usize..25, radius in 0.3f64..0.9, seed in 0u64..500) {
        let sd = SpectralData::new(&Graph::random_geometric(n, radius, seed).unwrap()).unwrap();
        for r in sd.identity_residuals() {
            prop_assert!(r <= 1e-10, "{r}");
        }
        prop_assert!(sd.rho2 > 0.0 && sd.rho2 <= sd.rho);
    }

    #[test]
    fn estimator_error_is_exact_on_isotropic_quadratics(
        center in prop::collection::vec(-3.0f64..3.0, 1..6),
        a in 0.2f64..5.0,
        delta in 0.01f64..1.0,
        shift in -2.0f64..2.0,
    ) {
        let f = QuadraticCost::isotropic(center.clone(), a);
        let x: Vec<f64> = center.iter().map(|c| c + shift).collect();
        let est = estimate_gradient(&f, &x, delta).unwrap();
        let err: f64 = est.iter().zip(&x).zip(&center).map(|((e, xi), c)| (e - a * (xi - c)).powi(2)).sum::<f64>().sqrt();
        let bound = estimator_error_bound(center.len(), a, delta);
        prop_assert!(err <= bound + 1e-12);
        prop_assert!((err - bound).abs() <= 1e-9);
    }

    #[test]
    fn estimator_bound_on_benchmark_oracles(
        which in 0usize..4,
        agent in 0usize..3,
        x in prop::collection::vec(-3.0f64..3.0, 4),
        log_delta in -6.0f64..0.0,
    ) {
        let prob = benchmark(which);
        let oracle = prob.oracles[agent].as_ref();
        let x = &x[..oracle.dim()];
        let delta = 10f64.powf(log_delta);
        let est = estimate_gradient(oracle, x, delta).unwrap();
        let g = oracle.gradient(x).unwrap();
        let err: f64 = est.iter().zip(&g).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let bound = estimator_error_bound(oracle.dim(), oracle.smoothness(), delta);
        // forward differences lose about eps |f| / delta per coordinate
        let f = oracle.value(x).abs().max(1.0);
        let roundoff = 4.0 * f64::EPSILON * f * (oracle.dim() as f64).sqrt() / delta;
        prop_assert!(err <= bound + 1e-9 + roundoff, "err {err} bound {bound} delta {delta}");
    }
}

fn benchmark(which: usize) -> ProblemInstance {
    match which {
        0 => quadratic_problem(3, 4, 1, 1.0),
        1 => sine_pl_problem(vec![0.5, 0.0, -0.5]),
        2 => rank_deficient_ls_problem(3, 4, 2, 5, 2, true),
        _ => logistic_problem(3, 4, 20, 1e-3, 1.0, 0.1, 4),
    }
    .unwrap()
}

/// `||x - xbar||^2 + ||v + g0/beta||^2_K + n (f(xbar) - f*)`.
fn v_hat_of(
    state: &NetworkState,
    prob: &consensus_pd::problems::ProblemInstance,
    sd: &SpectralData,
    step: &StepParams,
    f_star: f64,
) -> f64 {
    let n = state.x.nrows();
    let xbar = consensus_pd::engine::row_mean(&state.x);
    let xb = DMatrix::from_fn(n, state.x.ncols(), |_, l| xbar[l]);
    let g0 = consensus_pd::engine::local_gradients(prob, &xb).unwrap();
    let k = &sd.projector;
    let kx = k * &state.x;
    let w = &state.v + g0 / step.beta;
    let kw = k * &w;
    kx.norm_squared() + kw.norm_squared() + n as f64 * (prob.global_value(&xbar) - f_star)
}

// The P-L inequality 1/2 ||grad f||^2 >= nu (f - f*) yields quadratic growth
// f - f* >= (nu/2) dist^2. The factor 2 nu is too strong: f = (a/2) x^2 has
// nu = a and f - f* = (a/2) x^2 < 2a x^2.
#[test]
fn quadratic_growth_constant_is_half_nu() {
    let problems = [
        quadratic_problem(4, 3, 5, 1.0).unwrap(),
        rank_deficient_ls_problem(5, 4, 2, 5, 2, true).unwrap(),
    ];
    let samples = SampleSpec::Random {
        radius: 3.0,
        count: 500,
        seed: 9,
    };
    for prob in &problems {
        let nu = prob.pl_nu.unwrap();
        assert!(
            quadratic_growth_check(prob, nu / 2.0, &samples).unwrap().is_empty(),
            "{}",
            prob.label
        );
    }
    let quad = &problems[0];
    let too_strong = quadratic_growth_check(quad, 2.0 * quad.pl_nu.unwrap(), &samples).unwrap();
    assert_eq!(too_strong.len(), 500);
}

// The replicated-projection distance splits into consensus plus n dist^2, so
// it is bounded by max(1, 2/nu) times consensus + n (f - f*).
#[test]
fn projection_distance_is_bounded_pointwise() {
    let prob = rank_deficient_ls_problem(5, 4, 2, 5, 2, true).unwrap();
    let nu = prob.pl_nu.unwrap();
    let f_star = prob.f_star.unwrap();
    let factor = projection_factor(nu);
    let mut worst = 0.0f64;
    for seed in 0..200 {
        let x = consensus_pd::engine::initial_x(5, 4, consensus_pd::engine::X0Init::Random { seed, scale: 2.0 });
        let xbar = consensus_pd::engine::row_mean(&x);
        let xb = DMatrix::from_fn(5, 4, |_, l| xbar[l]);
        let consensus = (&x - &xb).norm_squared();
        let lhs = consensus_pd::diagnostics::projection_distance_sq(&prob, &x).unwrap();
        let rhs = factor * (consensus + 5.0 * (prob.global_value(&xbar) - f_star));
        worst = worst.max(lhs / rhs);
        assert!(lhs <= rhs * (1.0 + 1e-9), "{lhs} > {rhs}");
    }
    assert!(worst > 0.0);
}

#[test]
fn sine_problem_is_not_convex_but_is_pl() {
    let prob = sine_pl_problem(vec![0.3, -0.3]).unwrap();
    // second derivative 2 + 6 cos(2x) is negative near x = pi/2
    let h = 1e-4;
    let x = std::f64::consts::FRAC_PI_2;
    let curv = (prob.global_value(&[x + h]) - 2.0 * prob.global_value(&[x]) + prob.global_value(&[x - h])) / (h * h);
    assert!(curv < 0.0);
    let global = prob.global_oracle();
    let violations = consensus_pd::diagnostics::pl_check(
        &global,
        prob.pl_nu.unwrap(),
        0.0,
        &SampleSpec::Grid {
            lo: -10.0,
            hi: 10.0,
            count: 4001,
        },
        &[0.0],
    );
    assert!(violations.is_empty());
}
