//! Finite-difference check of declared first derivatives.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::scenario::VectorField;
use crate::model::spec::ProblemSpec;
use crate::scalar::Real;

/// Location of the worst disagreement.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Mismatch {
    /// `"drift"`, `"diffusion"`, `"running_cost"` or `"terminal_cost"`.
    pub function: &'static str,
    /// `"x"` or `"u"`.
    pub wrt: &'static str,
    pub component: usize,
    pub variable: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub analytic: f64,
    pub finite_difference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub scenario: usize,
    pub n_probe: usize,
    pub tol: f64,
    pub max_rel_error: f64,
    pub passed: bool,
    pub worst: Option<Mismatch>,
}

const PROBE_SEED: u64 = 0x005e_edfd;

struct Worst {
    err: f64,
    at: Option<Mismatch>,
}

impl Worst {
    fn record(&mut self, analytic: f64, fd: f64, make: impl FnOnce() -> Mismatch) {
        let err = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1.0);
        if err > self.err || !err.is_finite() {
            self.err = if err.is_finite() { err } else { f64::INFINITY };
            self.at = Some(make());
        }
    }
}

/// Compares every analytic first derivative of one scenario with central
/// differences at `n_probe` seeded points `(t, x, u)`, with `t ∈ [0, T]`,
/// `x ∈ x₀ + [−1, 1]ⁿ` and `u ∈ U`.
pub fn fd_consistency<S: Real>(
    spec: &ProblemSpec<S>,
    scenario: usize,
    n_probe: usize,
    tol: S,
) -> Result<ConsistencyReport> {
    let sc = spec
        .scenarios
        .get(scenario)
        .ok_or_else(|| Error::InvalidInput(format!("scenario {scenario} does not exist")))?;
    let n = spec.state_dim();
    let m = spec.control_dim();
    let t0 = S::zero();
    let u0 = spec.control_box.center();
    if sc.running.jet(t0, &spec.x0, &u0).is_none() || sc.terminal.jet(&spec.x0).is_none() {
        return Err(Error::FiniteDifferenceOnly(format!(
            "scenario {scenario} uses finite-difference cost derivatives, nothing to compare"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let mut worst = Worst { err: 0.0, at: None };
    for _ in 0..n_probe {
        let t = S::lit(rng.random::<f64>()) * spec.grid.horizon;
        let x: Vec<S> = spec
            .x0
            .iter()
            .map(|&c| c + S::lit(rng.random_range(-1.0..=1.0)))
            .collect();
        let u: Vec<S> = (0..m)
            .map(|a| {
                let (l, h) = (spec.control_box.lower[a], spec.control_box.upper[a]);
                l + (h - l) * S::lit(rng.random::<f64>())
            })
            .collect();
        let point = |x: &[S], u: &[S]| {
            (
                t.as_f64(),
                x.iter().map(|v| v.as_f64()).collect(),
                u.iter().map(|v| v.as_f64()).collect(),
            )
        };

        for (name, field) in [
            ("drift", sc.drift.as_ref()),
            ("diffusion", sc.diffusion.as_ref()),
        ] {
            let jet = field.jet(t, &x, &u);
            for j in 0..n {
                let fd = central(&x, j, |w| field_value(field, t, w, &u));
                for i in 0..n {
                    worst.record(jet.dx[(i, j)].as_f64(), fd[i].as_f64(), || {
                        let (t, x, u) = point(&x, &u);
                        Mismatch {
                            function: name,
                            wrt: "x",
                            component: i,
                            variable: j,
                            t,
                            x,
                            u,
                            analytic: jet.dx[(i, j)].as_f64(),
                            finite_difference: fd[i].as_f64(),
                        }
                    });
                }
            }
            for a in 0..m {
                let fd = central(&u, a, |w| field_value(field, t, &x, w));
                for i in 0..n {
                    worst.record(jet.du[(i, a)].as_f64(), fd[i].as_f64(), || {
                        let (t, x, u) = point(&x, &u);
                        Mismatch {
                            function: name,
                            wrt: "u",
                            component: i,
                            variable: a,
                            t,
                            x,
                            u,
                            analytic: jet.du[(i, a)].as_f64(),
                            finite_difference: fd[i].as_f64(),
                        }
                    });
                }
            }
        }

        if let Some(jet) = sc.running.jet(t, &x, &u) {
            for j in 0..n {
                let fd = central(&x, j, |w| vec![sc.running.value(t, w, &u)])[0];
                worst.record(jet.dx[j].as_f64(), fd.as_f64(), || {
                    let (t, x, u) = point(&x, &u);
                    Mismatch {
                        function: "running_cost",
                        wrt: "x",
                        component: 0,
                        variable: j,
                        t,
                        x,
                        u,
                        analytic: jet.dx[j].as_f64(),
                        finite_difference: fd.as_f64(),
                    }
                });
            }
            for a in 0..m {
                let fd = central(&u, a, |w| vec![sc.running.value(t, &x, w)])[0];
                worst.record(jet.du[a].as_f64(), fd.as_f64(), || {
                    let (t, x, u) = point(&x, &u);
                    Mismatch {
                        function: "running_cost",
                        wrt: "u",
                        component: 0,
                        variable: a,
                        t,
                        x,
                        u,
                        analytic: jet.du[a].as_f64(),
                        finite_difference: fd.as_f64(),
                    }
                });
            }
        }
        if let Some(jet) = sc.terminal.jet(&x) {
            for j in 0..n {
                let fd = central(&x, j, |w| vec![sc.terminal.value(w)])[0];
                worst.record(jet.dx[j].as_f64(), fd.as_f64(), || {
                    let (t, x, u) = point(&x, &u);
                    Mismatch {
                        function: "terminal_cost",
                        wrt: "x",
                        component: 0,
                        variable: j,
                        t,
                        x,
                        u,
                        analytic: jet.dx[j].as_f64(),
                        finite_difference: fd.as_f64(),
                    }
                });
            }
        }
    }
    let tol = tol.as_f64();
    Ok(ConsistencyReport {
        scenario,
        n_probe,
        tol,
        max_rel_error: worst.err,
        passed: worst.err <= tol,
        worst: worst.at,
    })
}

fn field_value<S: Real>(field: &dyn VectorField<S>, t: S, x: &[S], u: &[S]) -> Vec<S> {
    field.value(t, x, u)
}

/// Central difference of a vector-valued `g` in coordinate `j` of `z`.
fn central<S: Real>(z: &[S], j: usize, g: impl Fn(&[S]) -> Vec<S>) -> Vec<S> {
    let h = S::fd_step(S::one().max(z[j].abs()));
    let mut w = z.to_vec();
    w[j] = z[j] + h;
    let plus = g(&w);
    w[j] = z[j] - h;
    let minus = g(&w);
    let two_h = S::lit(2.0) * h;
    plus.iter()
        .zip(&minus)
        .map(|(&p, &q)| (p - q) / two_h)
        .collect()
}
