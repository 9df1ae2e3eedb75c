//! Declarative problem files (TOML).
//!
//! Every coefficient is a list of polynomial terms `{ coef, t, x, u }`, where
//! `t` is the time power and `x`, `u` hold per-coordinate exponents:
//!
//! ```toml
//! x0 = [0.0]
//!
//! [grid]
//! horizon = 1.0
//! steps = 100
//!
//! [control_box]
//! lower = [-1.0]
//! upper = [1.0]
//!
//! [[scenarios]]
//! name = "gamma1"
//! drift = [[{ coef = 1.0, u = [1] }]]
//! diffusion = [[{ coef = 1.0, u = [1] }]]
//! running_cost = [{ coef = 0.5, u = [2] }]
//! terminal_cost = [{ coef = -0.5, x = [2] }]
//!
//! [measures]
//! vertices = [[1.0]]
//!
//! [adjoint]
//! mode = "regression"
//! degree = 2
//!
//! [controls]
//! reference = [[{ coef = 0.0 }]]
//! ```
//!
//! Closed-form adjoints go in `[scenarios.adjoint]` with keys `p1`, `q1`,
//! `p2`, `q2` (polynomials in `(t, x)`, matrices row-major). Controls whose
//! terms involve `x` become feedback laws.

use std::sync::Arc;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::builtin::ProblemSetup;
use crate::model::control::ControlProcess;
use crate::model::grid::TimeGrid;
use crate::model::polynomial::{Monomial, PolyCost, PolyField, PolyTerminal, Polynomial};
use crate::model::scenario::{AdjointClosedForm, ProcessFn, Scenario};
use crate::model::sets::{ControlBox, MeasurePolytope};
use crate::model::spec::{AdjointMode, MalliavinMode, ProblemSpec};
use crate::scalar::Real;

type Terms = Vec<Monomial<f64>>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    name: Option<String>,
    x0: Vec<f64>,
    grid: GridSection,
    control_box: BoxSection,
    scenarios: Vec<ScenarioSection>,
    measures: Option<MeasuresSection>,
    adjoint: Option<AdjointSection>,
    malliavin: Option<MalliavinSection>,
    controls: Option<ControlsSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    horizon: f64,
    steps: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxSection {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioSection {
    name: Option<String>,
    drift: Vec<Terms>,
    diffusion: Vec<Terms>,
    running_cost: Terms,
    terminal_cost: Terms,
    adjoint: Option<ClosedFormSection>,
    nabla_s: Option<Vec<Terms>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClosedFormSection {
    p1: Vec<Terms>,
    q1: Vec<Terms>,
    p2: Vec<Terms>,
    q2: Vec<Terms>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasuresSection {
    vertices: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    simplex: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdjointSection {
    mode: String,
    degree: Option<usize>,
    ridge: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MalliavinSection {
    mode: String,
    nabla_u: Option<Vec<Terms>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlsSection {
    reference: Vec<Terms>,
    candidate: Option<Vec<Terms>>,
}

fn poly<S: Real>(n: usize, m: usize, terms: &Terms, what: &str) -> Result<Polynomial<S>> {
    let p = Polynomial::new(
        n,
        m,
        terms
            .iter()
            .map(|t| Monomial {
                coef: S::lit(t.coef),
                t: t.t,
                x: t.x.clone(),
                u: t.u.clone(),
            })
            .collect(),
    );
    match p.dimension_error() {
        Some(msg) => Err(Error::Config(format!("{what}: {msg}"))),
        None => Ok(p),
    }
}

fn polys<S: Real>(
    n: usize,
    m: usize,
    list: &[Terms],
    len: usize,
    what: &str,
) -> Result<Vec<Polynomial<S>>> {
    if list.len() != len {
        return Err(Error::Config(format!(
            "{what} has {} components, expected {len}",
            list.len()
        )));
    }
    list.iter()
        .enumerate()
        .map(|(i, t)| poly(n, m, t, &format!("{what}[{i}]")))
        .collect()
}

fn process<S: Real>(n: usize, list: &[Terms], len: usize, what: &str) -> Result<ProcessFn<S>> {
    Ok(Polynomial::process(polys(n, 0, list, len, what)?))
}

fn control<S: Real>(n: usize, m: usize, list: &[Terms], what: &str) -> Result<ControlProcess<S>> {
    let comps = polys::<S>(n, 0, list, m, what)?;
    if comps.iter().any(Polynomial::depends_on_state) {
        Ok(ControlProcess::feedback(move |t, x| {
            comps.iter().map(|p| p.eval(t, x, &[])).collect()
        }))
    } else {
        let none: [S; 0] = [];
        Ok(ControlProcess::deterministic(move |t| {
            comps.iter().map(|p| p.eval(t, &none, &none)).collect()
        }))
    }
}

/// Parses a problem file. Syntax and structural errors are [`Error::Config`];
/// semantic checks are left to [`ProblemSpec::validate`].
pub fn parse_config<S: Real>(text: &str) -> Result<ProblemSetup<S>> {
    let cfg: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let n = cfg.x0.len();
    let m = cfg.control_box.lower.len();
    if n == 0 || m == 0 {
        return Err(Error::Config("x0 and control_box must be non-empty".into()));
    }
    let lit = |v: &[f64]| v.iter().map(|&c| S::lit(c)).collect::<Vec<S>>();

    let mut scenarios = Vec::with_capacity(cfg.scenarios.len());
    for (g, s) in cfg.scenarios.iter().enumerate() {
        let what = |k: &str| format!("scenarios[{g}].{k}");
        let drift = PolyField::new(n, m, polys(n, m, &s.drift, n, &what("drift"))?);
        let diffusion = PolyField::new(n, m, polys(n, m, &s.diffusion, n, &what("diffusion"))?);
        let running = PolyCost(poly(n, m, &s.running_cost, &what("running_cost"))?);
        let terminal = PolyTerminal(poly(n, 0, &s.terminal_cost, &what("terminal_cost"))?);
        let mut sc = Scenario::new(
            s.name.clone().unwrap_or_else(|| format!("scenario{g}")),
            Arc::new(drift),
            Arc::new(diffusion),
            Arc::new(running),
            Arc::new(terminal),
        );
        if let Some(cf) = &s.adjoint {
            sc = sc.with_adjoint(AdjointClosedForm {
                p1: process(n, &cf.p1, n, &what("adjoint.p1"))?,
                q1: process(n, &cf.q1, n, &what("adjoint.q1"))?,
                p2: process(n, &cf.p2, n * n, &what("adjoint.p2"))?,
                q2: process(n, &cf.q2, n * n, &what("adjoint.q2"))?,
            });
        }
        if let Some(ns) = &s.nabla_s {
            sc = sc.with_nabla_s(process(n, ns, m * n, &what("nabla_s"))?);
        }
        scenarios.push(sc);
    }

    let measures = match &cfg.measures {
        Some(MeasuresSection {
            vertices: Some(v),
            simplex: false,
        }) => MeasurePolytope::new(v.iter().map(|w| lit(w)).collect()),
        Some(MeasuresSection {
            vertices: Some(_),
            simplex: true,
        }) => {
            return Err(Error::Config(
                "measures: give either vertices or simplex = true".into(),
            ))
        }
        _ => MeasurePolytope::simplex(scenarios.len()),
    };

    let adjoint_mode = match &cfg.adjoint {
        None => AdjointMode::regression(2),
        Some(a) => match a.mode.as_str() {
            "analytic" => AdjointMode::Analytic,
            "regression" => AdjointMode::Regression {
                degree: a.degree.unwrap_or(2),
                ridge: a.ridge.unwrap_or(true),
            },
            other => {
                return Err(Error::Config(format!(
                    "adjoint.mode {other:?} is not analytic or regression"
                )))
            }
        },
    };

    let (malliavin_mode, nabla_u) = match &cfg.malliavin {
        None => (MalliavinMode::DeclaredZero, None),
        Some(ms) => {
            let mode = match ms.mode.as_str() {
                "zero" | "declared_zero" => MalliavinMode::DeclaredZero,
                "closed-form" | "closed_form" => MalliavinMode::ClosedForm,
                other => {
                    return Err(Error::Config(format!(
                        "malliavin.mode {other:?} is not zero or closed-form"
                    )))
                }
            };
            let nu = ms
                .nabla_u
                .as_ref()
                .map(|t| process(n, t, m, "malliavin.nabla_u"))
                .transpose()?;
            (mode, nu)
        }
    };

    let (reference, candidate) = match &cfg.controls {
        None => {
            let c =
                ControlBox::new(lit(&cfg.control_box.lower), lit(&cfg.control_box.upper)).center();
            (
                ControlProcess::constant(c.clone()),
                ControlProcess::constant(c),
            )
        }
        Some(cs) => {
            let r = control(n, m, &cs.reference, "controls.reference")?;
            let c = match &cs.candidate {
                Some(t) => control(n, m, t, "controls.candidate")?,
                None => r.clone(),
            };
            (r, c)
        }
    };

    let spec = ProblemSpec {
        name: cfg.name.clone().unwrap_or_else(|| "config".into()),
        grid: TimeGrid {
            horizon: S::lit(cfg.grid.horizon),
            steps: cfg.grid.steps,
        },
        control_box: ControlBox::new(lit(&cfg.control_box.lower), lit(&cfg.control_box.upper)),
        scenarios,
        measures,
        x0: lit(&cfg.x0),
        adjoint_mode,
        malliavin_mode,
        nabla_u,
    };
    Ok(ProblemSetup {
        spec,
        reference,
        candidate,
        description: "loaded from configuration".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
name = "example"
x0 = [0.0]

[grid]
horizon = 1.0
steps = 100

[control_box]
lower = [-1.0]
upper = [1.0]

[[scenarios]]
name = "gamma1"
drift = [[{ coef = 1.0, u = [1] }]]
diffusion = [[{ coef = 1.0, u = [1] }]]
running_cost = [{ coef = 0.5, u = [2] }]
terminal_cost = [{ coef = -0.5, x = [2] }]
nabla_s = [[]]
[scenarios.adjoint]
p1 = [[]]
q1 = [[]]
p2 = [[{ coef = 1.0 }]]
q2 = [[]]

[[scenarios]]
name = "gamma2"
drift = [[{ coef = 1.0, u = [1] }]]
diffusion = [[]]
running_cost = [{ coef = 0.25, u = [4] }]
terminal_cost = [{ coef = -0.5, x = [2] }]
nabla_s = [[]]
[scenarios.adjoint]
p1 = [[]]
q1 = [[]]
p2 = [[{ coef = 1.0 }]]
q2 = [[]]

[measures]
vertices = [[1.0, 0.0], [0.0, 1.0]]

[adjoint]
mode = "analytic"

[malliavin]
mode = "zero"

[controls]
reference = [[]]
candidate = [[{ coef = 1.0 }]]
"#;

    #[test]
    fn parses_the_example() {
        let setup = parse_config::<f64>(EXAMPLE).unwrap();
        let spec = &setup.spec;
        assert!(spec.validate().is_valid(), "{:?}", spec.validate());
        assert_eq!(spec.scenarios.len(), 2);
        assert_eq!(spec.scenarios[1].running_cost(0.0, &[0.0], &[1.0]), 0.25);
        assert_eq!(spec.scenarios[0].terminal_cost(&[2.0]), -2.0);
        assert_eq!(spec.adjoint_mode, AdjointMode::Analytic);
        let p2 = spec.scenarios[0].adjoint.as_ref().unwrap().p2.clone();
        assert_eq!(p2(0.5, &[3.0]), vec![1.0]);
        assert!(setup.candidate.is_deterministic());
    }

    #[test]
    fn syntax_error_is_config_error() {
        assert!(matches!(
            parse_config::<f64>("x0 = ["),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = EXAMPLE.replace("[grid]", "[grid]\nfoo = 1");
        assert!(matches!(parse_config::<f64>(&text), Err(Error::Config(_))));
    }

    #[test]
    fn feedback_control_from_state_terms() {
        let text = EXAMPLE.replace(
            "candidate = [[{ coef = 1.0 }]]",
            "candidate = [[{ coef = 0.5, x = [1] }]]",
        );
        let setup = parse_config::<f64>(&text).unwrap();
        assert!(setup.candidate.is_feedback());
    }

    #[test]
    fn bad_vertex_shows_up_in_validation() {
        let text = EXAMPLE.replace("[[1.0, 0.0], [0.0, 1.0]]", "[[0.5, 0.6]]");
        let setup = parse_config::<f64>(&text).unwrap();
        let report = setup.spec.validate();
        assert!(report
            .violations
            .iter()
            .any(|v| v.message.contains("mass 1.1 ≠ 1")));
    }
}
