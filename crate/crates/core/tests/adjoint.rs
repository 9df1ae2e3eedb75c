use std::sync::Arc;

use robust_sonc::adjoint::{
    duality_check, duality_check_first, duality_check_second, duality_first, duality_second,
    solve_adjoints, solve_adjoints_in,
};
use robust_sonc::error::Error;
use robust_sonc::model::builtin::{builtin_example, cubic_problem, lq_problem, LQ_A, LQ_C};
use robust_sonc::model::{
    AdjointMode, ControlBox, MeasurePolytope, Monomial, PolyCost, PolyField, PolyTerminal,
    Polynomial, ProblemSpec, Scenario, TimeGrid,
};
use robust_sonc::model::{ControlProcess, MalliavinMode};
use robust_sonc::simulate::{
    direction_trace, generate_paths, simulate_first_variation, simulate_state,
};

fn zero() -> ControlProcess<f64> {
    ControlProcess::constant(vec![0.0])
}

fn one() -> ControlProcess<f64> {
    ControlProcess::constant(vec![1.0])
}

/// Backward RK4 for `Ṙ = −2aR − 1`, `R(T) = 1`, sampled on `steps` nodes.
fn riccati_rk4(a: f64, horizon: f64, steps: usize) -> Vec<f64> {
    let sub = 50;
    let h = horizon / (steps * sub) as f64;
    let rhs = |r: f64| -2.0 * a * r - 1.0;
    let mut out = vec![0.0; steps + 1];
    let mut r = 1.0;
    out[steps] = r;
    for k in (0..steps).rev() {
        for _ in 0..sub {
            // integrate backward: dr/ds = -rhs with s = T - t
            let k1 = -rhs(r);
            let k2 = -rhs(r + 0.5 * h * k1);
            let k3 = -rhs(r + 0.5 * h * k2);
            let k4 = -rhs(r + h * k3);
            r += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        out[k] = r;
    }
    out
}

fn single(
    name: &str,
    drift: PolyField<f64>,
    diffusion: PolyField<f64>,
    f: Polynomial<f64>,
    h: Polynomial<f64>,
    x0: Vec<f64>,
    steps: usize,
    m: usize,
) -> ProblemSpec<f64> {
    let sc = Scenario::new(
        name,
        Arc::new(drift),
        Arc::new(diffusion),
        Arc::new(PolyCost(f)),
        Arc::new(PolyTerminal(h)),
    );
    ProblemSpec {
        name: name.into(),
        grid: TimeGrid::new(1.0, steps).unwrap(),
        control_box: ControlBox::symmetric(m, 1.0),
        scenarios: vec![sc],
        measures: MeasurePolytope::simplex(1),
        x0,
        adjoint_mode: AdjointMode::regression(2),
        malliavin_mode: MalliavinMode::DeclaredZero,
        nabla_u: None,
    }
}

#[test]
fn example_analytic_adjoints_are_exact_constants() {
    let spec = builtin_example::<f64>();
    let bundle = generate_paths(1, 200, &spec.grid).unwrap();
    for g in 0..2 {
        let reference = simulate_state(&spec, &zero(), g, &bundle).unwrap();
        let adj = solve_adjoints(&spec, &reference, &bundle).unwrap();
        assert_eq!(adj.p1.max_abs(), 0.0);
        assert_eq!(adj.q1.max_abs(), 0.0);
        assert_eq!(adj.q2.max_abs(), 0.0);
        for p in 0..200 {
            for k in 0..=100 {
                assert_eq!(adj.p2.slot(p, k), &[1.0]);
            }
        }
        assert_eq!(adj.diagnostics.terminal_mismatch, 0.0);
    }
}

#[test]
fn example_regression_matches_analytic() {
    let spec = builtin_example::<f64>();
    let bundle = generate_paths(2, 5_000, &spec.grid).unwrap();
    for g in 0..2 {
        let reference = simulate_state(&spec, &zero(), g, &bundle).unwrap();
        let exact = solve_adjoints_in(&spec, &reference, &bundle, AdjointMode::Analytic).unwrap();
        let reg =
            solve_adjoints_in(&spec, &reference, &bundle, AdjointMode::regression(2)).unwrap();
        assert!(reg.p1.max_abs_diff(&exact.p1) <= 5e-2);
        assert!(reg.q1.max_abs_diff(&exact.q1) <= 5e-2);
        assert!(reg.p2.max_abs_diff(&exact.p2) <= 5e-2);
        assert!(reg.q2.max_abs_diff(&exact.q2) <= 5e-2);
        assert!(reg.diagnostics.ridged_nodes > 0);
    }
}

#[test]
fn analytic_mode_without_closed_forms_is_rejected() {
    let spec = cubic_problem::<f64>().with_adjoint_mode(AdjointMode::Analytic);
    let bundle = generate_paths(3, 10, &spec.grid).unwrap();
    let reference =
        simulate_state(&spec, &ControlProcess::constant(vec![0.5]), 0, &bundle).unwrap();
    assert!(matches!(
        solve_adjoints(&spec, &reference, &bundle),
        Err(Error::MissingClosedForm { scenario: 0, .. })
    ));
}

#[test]
fn regression_without_ridge_reports_rank_deficiency() {
    let spec = builtin_example::<f64>().with_adjoint_mode(AdjointMode::Regression {
        degree: 2,
        ridge: false,
    });
    let bundle = generate_paths(3, 50, &spec.grid).unwrap();
    let reference = simulate_state(&spec, &zero(), 0, &bundle).unwrap();
    assert!(matches!(
        solve_adjoints(&spec, &reference, &bundle),
        Err(Error::RankDeficient { scenario: 0, .. })
    ));
}

#[test]
fn zero_data_gives_zero_adjoints() {
    let spec = single(
        "zero",
        PolyField::scalar(&[(1.0, 1, 0), (1.0, 0, 1)]),
        PolyField::scalar(&[(0.3, 0, 0)]),
        Polynomial::zero(1, 1),
        Polynomial::zero(1, 0),
        vec![1.0],
        50,
        1,
    );
    let bundle = generate_paths(4, 2_000, &spec.grid).unwrap();
    let reference = simulate_state(&spec, &zero(), 0, &bundle).unwrap();
    let adj = solve_adjoints(&spec, &reference, &bundle).unwrap();
    for panel in [&adj.p1, &adj.q1, &adj.p2, &adj.q2] {
        assert_eq!(panel.max_abs(), 0.0);
    }
}

#[test]
fn lq_regression_matches_riccati_oracle() {
    let spec = lq_problem::<f64>(LQ_A, LQ_C).with_adjoint_mode(AdjointMode::regression(2));
    let bundle = generate_paths(5, 20_000, &spec.grid).unwrap();
    let reference = simulate_state(&spec, &zero(), 0, &bundle).unwrap();
    let adj = solve_adjoints(&spec, &reference, &bundle).unwrap();
    let r = riccati_rk4(LQ_A, 1.0, 100);
    let paths = bundle.n_paths();
    let sup = |f: &dyn Fn(usize) -> f64| (0..paths).map(f).fold(0.0f64, f64::max);
    let (mut worst_p1, mut worst_q1, mut worst_p2) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..=100 {
        let gap = sup(&|p| (adj.p1.slot(p, k)[0] + r[k] * reference.x.slot(p, k)[0]).abs());
        let size = sup(&|p| (r[k] * reference.x.slot(p, k)[0]).abs());
        worst_p1 = worst_p1.max(gap / size);
        worst_p2 = worst_p2.max(sup(&|p| (adj.p2.slot(p, k)[0] + r[k]).abs()) / r[k]);
        if k < 100 {
            // Q₁ is a martingale-integrand estimate, compared in mean square.
            let ms = (0..paths)
                .map(|p| (adj.q1.slot(p, k)[0] + r[k] * LQ_C).powi(2))
                .sum::<f64>()
                / paths as f64;
            worst_q1 = worst_q1.max(ms.sqrt() / (r[k] * LQ_C));
        }
    }
    assert!(worst_p1 < 5e-2, "P1 relative gap {worst_p1}");
    assert!(worst_p2 < 5e-2, "P2 relative gap {worst_p2}");
    assert!(worst_q1 < 5e-2, "Q1 relative RMS gap {worst_q1}");
}

#[test]
fn deterministic_second_adjoint_matches_matrix_ode() {
    // b = a x + u, σ = 0, f = h = x²/2: Ṗ₂ = −(2aP₂ − 1), P₂(T) = −1.
    let a = 0.5;
    let drift = PolyField::scalar(&[(a, 1, 0), (1.0, 0, 1)]);
    let spec = single(
        "deterministic",
        drift,
        PolyField::zero(1, 1),
        Polynomial::new(1, 1, vec![Monomial::new(0.5, vec![2], vec![0])]),
        Polynomial::new(1, 0, vec![Monomial::new(0.5, vec![2], vec![])]),
        vec![1.0],
        4_000,
        1,
    );
    let bundle = generate_paths(6, 8, &spec.grid).unwrap();
    let reference = simulate_state(&spec, &zero(), 0, &bundle).unwrap();
    let adj = solve_adjoints(&spec, &reference, &bundle).unwrap();
    let r = riccati_rk4(a, 1.0, 4_000);
    for k in (0..=4_000).step_by(100) {
        let got = adj.p2.slot(0, k)[0];
        assert!((got + r[k]).abs() < 1e-3, "node {k}: {got} vs {}", -r[k]);
    }
}

#[test]
fn two_dimensional_second_adjoint_is_symmetric_with_exact_terminal() {
    let drift = PolyField::new(
        2,
        1,
        vec![
            Polynomial::new(
                2,
                1,
                vec![
                    Monomial::new(0.3, vec![1, 0], vec![0]),
                    Monomial::new(1.0, vec![0, 1], vec![0]),
                ],
            ),
            Polynomial::new(
                2,
                1,
                vec![
                    Monomial::new(-0.5, vec![1, 0], vec![0]),
                    Monomial::new(1.0, vec![0, 0], vec![1]),
                ],
            ),
        ],
    );
    let diffusion = PolyField::new(
        2,
        1,
        vec![
            Polynomial::new(2, 1, vec![Monomial::new(0.2, vec![0, 1], vec![0])]),
            Polynomial::new(
                2,
                1,
                vec![
                    Monomial::new(0.1, vec![1, 0], vec![0]),
                    Monomial::new(0.2, vec![0, 0], vec![0]),
                ],
            ),
        ],
    );
    let f = Polynomial::new(
        2,
        1,
        vec![
            Monomial::new(0.5, vec![1, 1], vec![0]),
            Monomial::new(0.5, vec![0, 0], vec![2]),
        ],
    );
    let h = Polynomial::new(
        2,
        0,
        vec![
            Monomial::new(1.0, vec![2, 0], vec![]),
            Monomial::new(0.7, vec![1, 1], vec![]),
        ],
    );
    let spec = single("planar", drift, diffusion, f, h, vec![1.0, 0.5], 40, 1);
    let bundle = generate_paths(7, 3_000, &spec.grid).unwrap();
    let reference =
        simulate_state(&spec, &ControlProcess::constant(vec![0.2]), 0, &bundle).unwrap();
    let adj = solve_adjoints(&spec, &reference, &bundle).unwrap();
    assert!(adj.max_asymmetry() <= 1e-10);
    for p in 0..bundle.n_paths() {
        assert_eq!(adj.p2.slot(p, 40), &[-2.0, -0.7, -0.7, 0.0]);
        let x = reference.x.slot(p, 40);
        let hx = [2.0 * x[0] + 0.7 * x[1], 0.7 * x[0]];
        assert_eq!(adj.p1.slot(p, 40), &[-hx[0], -hx[1]]);
    }
}

#[test]
fn example_first_duality_is_exactly_zero() {
    let spec = builtin_example::<f64>();
    let bundle = generate_paths(8, 2_000, &spec.grid).unwrap();
    for g in 0..2 {
        let rep = duality_check_first(&spec, &zero(), &one(), g, &bundle).unwrap();
        assert_eq!(rep.lhs.mean, 0.0);
        assert_eq!(rep.rhs.mean, 0.0);
        assert!(rep.within(3.0));
    }
}

#[test]
fn example_second_duality_equals_minus_two() {
    let spec = builtin_example::<f64>();
    let bundle = generate_paths(9, 20_000, &spec.grid).unwrap();
    let rep = duality_check_second(&spec, &zero(), &one(), 0, &bundle).unwrap();
    assert!(rep.within(3.0), "{rep:?}");
    assert!((rep.lhs.mean + 2.0).abs() < 4.0 * rep.lhs.stderr, "{rep:?}");
    assert!((rep.rhs.mean + 2.0).abs() < 4.0 * rep.rhs.stderr, "{rep:?}");
}

#[test]
fn zero_direction_gives_exactly_zero_sides() {
    let spec = lq_problem::<f64>(LQ_A, LQ_C);
    let bundle = generate_paths(10, 500, &spec.grid).unwrap();
    let first = duality_check_first(&spec, &zero(), &zero(), 0, &bundle).unwrap();
    let second = duality_check_second(&spec, &zero(), &zero(), 0, &bundle).unwrap();
    for rep in [first, second] {
        assert_eq!(rep.lhs.mean, 0.0);
        assert_eq!(rep.rhs.mean, 0.0);
        assert_eq!(rep.residual, 0.0);
    }
}

#[test]
fn lq_regression_duality_holds_on_the_grid() {
    let spec = lq_problem::<f64>(LQ_A, LQ_C).with_adjoint_mode(AdjointMode::regression(2));
    let bundle = generate_paths(11, 20_000, &spec.grid).unwrap();
    let u = ControlProcess::constant(vec![0.5]);
    let d1 = duality_check_first(&spec, &zero(), &u, 0, &bundle).unwrap();
    let d2 = duality_check_second(&spec, &zero(), &u, 0, &bundle).unwrap();
    assert!(d1.within(3.0), "{d1:?}");
    assert!(d2.within(3.0), "{d2:?}");
}

#[test]
fn lq_analytic_first_duality_within_noise() {
    let spec = lq_problem::<f64>(LQ_A, LQ_C);
    let bundle = generate_paths(11, 20_000, &spec.grid).unwrap();
    let u = ControlProcess::constant(vec![0.5]);
    let d1 = duality_check_first(&spec, &zero(), &u, 0, &bundle).unwrap();
    assert!(d1.within(3.0), "{d1:?}");
}

#[test]
fn lq_analytic_second_duality_gap_is_first_order_in_step() {
    // y₁ is deterministic here, so the gap is the pure time-discretization
    // error of the continuous closed forms.
    let u = ControlProcess::constant(vec![0.5]);
    let gap = |steps: usize| {
        let mut spec = lq_problem::<f64>(LQ_A, LQ_C);
        spec.grid = TimeGrid::new(1.0, steps).unwrap();
        let bundle = generate_paths(13, 200, &spec.grid).unwrap();
        let d2 = duality_check_second(&spec, &zero(), &u, 0, &bundle).unwrap();
        assert!(d2.paired_stderr < 1e-12, "{d2:?}");
        d2.residual
    };
    let (coarse, fine) = (gap(100), gap(200));
    assert!(coarse.abs() < 1e-2 && coarse.abs() > 0.0, "{coarse}");
    let ratio = coarse / fine;
    assert!((1.6..=2.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn deterministic_linear_duality_matches_closed_form() {
    // σ = 0, b = a x + u, v ≡ 1, h = x²/2, f = 0: y₁(t) = (e^{at} − 1)/a.
    let a = 0.5;
    let spec = single(
        "deterministic",
        PolyField::scalar(&[(a, 1, 0), (1.0, 0, 1)]),
        PolyField::zero(1, 1),
        Polynomial::zero(1, 1),
        Polynomial::new(1, 0, vec![Monomial::new(0.5, vec![2], vec![])]),
        vec![1.0],
        2_000,
        1,
    );
    let bundle = generate_paths(12, 4, &spec.grid).unwrap();
    let reference = simulate_state(&spec, &zero(), 0, &bundle).unwrap();
    let adj = solve_adjoints(&spec, &reference, &bundle).unwrap();
    let v = direction_trace(&spec, &reference, &one(), &bundle).unwrap();
    let y1 = simulate_first_variation(&spec, &reference, &v, &bundle).unwrap();
    let y_t = ((a * 1.0f64).exp() - 1.0) / a;
    let second = duality_second(&spec, &reference, &adj, &v, &y1, &bundle).unwrap();
    assert!((second.lhs.mean - y_t * y_t).abs() < 1e-3, "{second:?}");
    assert!(second.residual.abs() < 1e-3, "{second:?}");
    let first = duality_first(&spec, &reference, &adj, &v, &y1, &bundle).unwrap();
    assert!((first.lhs.mean - reference.x.slot(0, 2_000)[0] * y_t).abs() < 1e-3);
    assert!(first.residual.abs() < 1e-3, "{first:?}");
}

#[test]
fn fused_duality_matches_the_separate_identities() {
    let spec = cubic_problem::<f64>().with_adjoint_mode(AdjointMode::regression(2));
    let bundle = generate_paths(14, 500, &spec.grid).unwrap();
    let bar = ControlProcess::constant(vec![0.5]);
    let (first, second) = duality_check(&spec, &bar, &one(), 0, &bundle).unwrap();
    assert_eq!(
        first,
        duality_check_first(&spec, &bar, &one(), 0, &bundle).unwrap()
    );
    assert_eq!(
        second,
        duality_check_second(&spec, &bar, &one(), 0, &bundle).unwrap()
    );
}
