//! Registry of built-in problems.

use std::sync::Arc;

use crate::model::control::ControlProcess;
use crate::model::grid::TimeGrid;
use crate::model::polynomial::{
    scalar_poly, Monomial, PolyCost, PolyField, PolyTerminal, Polynomial,
};
use crate::model::scenario::{AdjointClosedForm, ProcessFn, Scenario};
use crate::model::sets::{ControlBox, MeasurePolytope};
use crate::model::spec::{AdjointMode, MalliavinMode, ProblemSpec};
use crate::scalar::Real;

/// A built-in problem with its reference control `ū` and a candidate `u`.
#[derive(Clone, Debug)]
pub struct ProblemSetup<S: Real> {
    pub spec: ProblemSpec<S>,
    pub reference: ControlProcess<S>,
    pub candidate: ControlProcess<S>,
    pub description: String,
}

pub const BUILTIN_NAMES: [&str; 4] = ["example", "lq", "cubic", "linear-drift"];

pub fn builtin<S: Real>(name: &str) -> Option<ProblemSetup<S>> {
    match name {
        "example" => Some(ProblemSetup {
            spec: builtin_example(),
            reference: ControlProcess::constant(vec![S::zero()]),
            candidate: ControlProcess::constant(vec![S::one()]),
            description: "two-scenario singular example, U = [-1, 1]".into(),
        }),
        "lq" => Some(ProblemSetup {
            spec: lq_problem(S::lit(LQ_A), S::lit(LQ_C)),
            reference: ControlProcess::constant(vec![S::zero()]),
            candidate: ControlProcess::constant(vec![S::lit(0.5)]),
            description: "scalar linear-quadratic problem b = ax + u, σ = c".into(),
        }),
        "cubic" => Some(ProblemSetup {
            spec: cubic_problem(),
            reference: ControlProcess::constant(vec![S::lit(0.5)]),
            candidate: ControlProcess::constant(vec![S::one()]),
            description: "smooth nonlinear dynamics with state-dependent noise".into(),
        }),
        "linear-drift" => Some(ProblemSetup {
            spec: linear_drift_problem(S::lit(LQ_A)),
            reference: ControlProcess::constant(vec![S::zero()]),
            candidate: ControlProcess::constant(vec![S::one()]),
            description: "b = ax + u, σ = u with quadratic costs".into(),
        }),
        _ => None,
    }
}

/// The two-scenario example: `b₁ = σ₁ = u`, `b₂ = u`, `σ₂ = 0`,
/// `f₁ = u²/2`, `f₂ = u⁴/4`, `h₁ = h₂ = −x²/2`, on `[0, 1]` with `U = [−1, 1]`
/// and Λ the whole simplex over both scenarios.
pub fn builtin_example<S: Real>() -> ProblemSpec<S> {
    let closed = || {
        AdjointClosedForm::constant(
            vec![S::zero()],
            vec![S::zero()],
            vec![S::one()],
            vec![S::zero()],
        )
    };
    let zero_nabla: ProcessFn<S> = Arc::new(|_, _| vec![S::zero()]);
    let terminal = || Arc::new(PolyTerminal(terminal_poly::<S>(&[(-0.5, 2)])));
    let s1 = Scenario::new(
        "gamma1",
        Arc::new(PolyField::scalar(&[(1.0, 0, 1)])),
        Arc::new(PolyField::scalar(&[(1.0, 0, 1)])),
        Arc::new(PolyCost(scalar_poly(&[(0.5, 0, 2)]))),
        terminal(),
    )
    .with_adjoint(closed())
    .with_nabla_s(zero_nabla.clone());
    let s2 = Scenario::new(
        "gamma2",
        Arc::new(PolyField::scalar(&[(1.0, 0, 1)])),
        Arc::new(PolyField::zero(1, 1)),
        Arc::new(PolyCost(scalar_poly(&[(0.25, 0, 4)]))),
        terminal(),
    )
    .with_adjoint(closed())
    .with_nabla_s(zero_nabla);
    ProblemSpec {
        name: "example".into(),
        grid: TimeGrid {
            horizon: S::one(),
            steps: 100,
        },
        control_box: ControlBox::symmetric(1, S::one()),
        scenarios: vec![s1, s2],
        measures: MeasurePolytope::simplex(2),
        x0: vec![S::zero()],
        adjoint_mode: AdjointMode::Analytic,
        malliavin_mode: MalliavinMode::DeclaredZero,
        nabla_u: Some(Arc::new(|_, _| vec![S::zero()])),
    }
}

pub const LQ_A: f64 = 0.5;
pub const LQ_C: f64 = 0.4;

/// `R` with `Ṙ = −2aR − 1`, `R(T) = 1`.
pub fn lq_riccati<S: Real>(a: S, horizon: S, t: S) -> S {
    let two_a = S::lit(2.0) * a;
    if two_a.abs() < S::epsilon() {
        return S::one() + (horizon - t);
    }
    (S::one() + S::one() / two_a) * (two_a * (horizon - t)).exp() - S::one() / two_a
}

fn quadratic_costs<S: Real>() -> (Arc<PolyCost<S>>, Arc<PolyTerminal<S>>) {
    (
        Arc::new(PolyCost(scalar_poly(&[(0.5, 2, 0)]))),
        Arc::new(PolyTerminal(terminal_poly(&[(0.5, 2)]))),
    )
}

/// Closed forms at `ū = 0` for a scalar problem with costs `x²/2` where
/// `P₁ = −R x̄`, `Q₁ = −R q_scale`, `P₂ = −R`, `Q₂ = 0`.
fn riccati_adjoint<S: Real>(a: S, horizon: S, q_scale: S) -> AdjointClosedForm<S> {
    let r = move |t: S| lq_riccati(a, horizon, t);
    AdjointClosedForm {
        p1: Arc::new(move |t, x| vec![-r(t) * x[0]]),
        q1: Arc::new(move |t, _| vec![-r(t) * q_scale]),
        p2: Arc::new(move |t, _| vec![-r(t)]),
        q2: Arc::new(|_, _| vec![S::zero()]),
    }
}

fn single_scenario_spec<S: Real>(
    name: &str,
    scenario: Scenario<S>,
    x0: S,
    mode: AdjointMode,
) -> ProblemSpec<S> {
    ProblemSpec {
        name: name.into(),
        grid: TimeGrid {
            horizon: S::one(),
            steps: 100,
        },
        control_box: ControlBox::symmetric(1, S::one()),
        scenarios: vec![scenario],
        measures: MeasurePolytope::simplex(1),
        x0: vec![x0],
        adjoint_mode: mode,
        malliavin_mode: MalliavinMode::DeclaredZero,
        nabla_u: None,
    }
}

/// `b = ax + u`.
fn affine_drift<S: Real>(a: S) -> PolyField<S> {
    let terms = vec![
        Monomial::new(a, vec![1], vec![0]),
        Monomial::new(S::one(), vec![0], vec![1]),
    ];
    PolyField::new(1, 1, vec![Polynomial::new(1, 1, terms)])
}

/// Scalar LQ problem `b = ax + u`, `σ = c`, `f = h = x²/2`, `x₀ = 1`.
pub fn lq_problem<S: Real>(a: S, c: S) -> ProblemSpec<S> {
    let (f, h) = quadratic_costs();
    let drift = affine_drift(a);
    let diffusion = PolyField::new(1, 1, vec![Polynomial::constant(1, 1, c)]);
    let sc = Scenario::new("lq", Arc::new(drift), Arc::new(diffusion), f, h)
        .with_adjoint(riccati_adjoint(a, S::one(), c));
    single_scenario_spec("lq", sc, S::one(), AdjointMode::Analytic)
}

/// `b = ax + u`, `σ = u`, `f = h = x²/2`, `x₀ = 1`.
pub fn linear_drift_problem<S: Real>(a: S) -> ProblemSpec<S> {
    let (f, h) = quadratic_costs();
    let drift = affine_drift(a);
    let sc = Scenario::new(
        "linear-drift",
        Arc::new(drift),
        Arc::new(PolyField::scalar(&[(1.0, 0, 1)])),
        f,
        h,
    )
    .with_adjoint(riccati_adjoint(a, S::one(), S::zero()));
    single_scenario_spec("linear-drift", sc, S::one(), AdjointMode::Analytic)
}

/// `b = u − x + 0.2x²u + 0.1xu²`, `σ = 0.3 + 0.2xu`, `f = (x² + u²)/2`,
/// `h = x²/2`, `x₀ = 0.5`.
pub fn cubic_problem<S: Real>() -> ProblemSpec<S> {
    let drift = PolyField::scalar(&[(1.0, 0, 1), (-1.0, 1, 0), (0.2, 2, 1), (0.1, 1, 2)]);
    let diffusion = PolyField::scalar(&[(0.3, 0, 0), (0.2, 1, 1)]);
    let f = Arc::new(PolyCost(scalar_poly(&[(0.5, 2, 0), (0.5, 0, 2)])));
    let h = Arc::new(PolyTerminal(terminal_poly(&[(0.5, 2)])));
    let sc = Scenario::new("cubic", Arc::new(drift), Arc::new(diffusion), f, h);
    single_scenario_spec("cubic", sc, S::lit(0.5), AdjointMode::regression(2))
}

/// Scalar polynomial in `x` from `(coef, power)` pairs.
pub fn terminal_poly<S: Real>(terms: &[(f64, u32)]) -> Polynomial<S> {
    Polynomial::new(
        1,
        0,
        terms
            .iter()
            .map(|&(c, p)| Monomial::new(S::lit(c), vec![p], vec![]))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_values() {
        let spec = builtin_example::<f64>();
        assert_eq!(spec.scenarios[0].running_cost(0.3, &[0.0], &[1.0]), 0.5);
        assert_eq!(spec.scenarios[1].terminal_cost(&[2.0]), -2.0);
        assert_eq!(spec.scenarios[1].running_cost(0.3, &[0.0], &[1.0]), 0.25);
        assert!(spec.validate().is_valid(), "{:?}", spec.validate());
    }

    #[test]
    fn every_builtin_validates() {
        for name in BUILTIN_NAMES {
            let setup = builtin::<f64>(name).unwrap();
            let report = setup.spec.validate();
            assert!(report.is_valid(), "{name}: {report:?}");
        }
        assert!(builtin::<f64>("nope").is_none());
    }

    #[test]
    fn riccati_terminal_and_ode() {
        let a = 0.5f64;
        assert!((lq_riccati(a, 1.0, 1.0) - 1.0).abs() < 1e-15);
        let t = 0.4;
        let h = 1e-5;
        let deriv = (lq_riccati(a, 1.0, t + h) - lq_riccati(a, 1.0, t - h)) / (2.0 * h);
        assert!((deriv + 2.0 * a * lq_riccati(a, 1.0, t) + 1.0).abs() < 1e-8);
    }
}
