//! The integral second-order condition and the monotonicity probe, both
//! built on `c_γ(v) = E∫⟨𝕊_γ y₁,γ(·; v), v⟩dt`.

use serde::Serialize;

use crate::analysis::Analysis;
use crate::conditions::singular::require_singular;
use crate::conditions::{Tolerance, Verdict};
use crate::error::Result;
use crate::model::control::ControlProcess;
use crate::robust::weighted_samples;
use crate::scalar::Real;
use crate::stats::Estimate;

/// Values of one perturbation `v = u − ū`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntegralEntry<S> {
    pub perturbation: usize,
    /// `c_γ(v)` per scenario.
    pub scenario_values: Vec<Estimate<S>>,
    /// `Σ_γ λ_γ c_γ(v)` per `Λ^ū` vertex, in `argmax_vertices` order.
    pub vertex_values: Vec<Estimate<S>>,
    /// Minimum over the vertices.
    pub statistic: S,
    pub statistic_stderr: S,
    pub minimizing_vertex: usize,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntegralReport<S> {
    pub singular: Verdict,
    pub argmax_vertices: Vec<usize>,
    pub entries: Vec<IntegralEntry<S>>,
    pub verdict: Verdict,
}

/// Per-scenario per-path trapezoid sums of `⟨𝕊_γ y₁,γ(·; d), d⟩` with
/// `d = u − w` along `x̄_γ` (`w = ū` when `other` is `None`).
fn pairing_samples<S: Real>(
    analysis: &Analysis<'_, S>,
    u: &ControlProcess<S>,
    other: Option<&ControlProcess<S>>,
) -> Result<Vec<Vec<S>>> {
    (0..analysis.spec.scenarios.len())
        .map(|g| {
            let mut d = analysis.perturbation(g, u)?;
            if let Some(w) = other {
                d = d.axpy(-S::one(), &analysis.perturbation(g, w)?);
            }
            let y1 = analysis.first_variation(g, &d)?;
            Ok(analysis.s_pairing(g, &y1, &d))
        })
        .collect()
}

/// For each `u`, the minimum over `Λ^ū` vertices of
/// `∫_Γ E∫⟨𝕊_γ y₁,γ, v⟩dt dλ`; violated when it exceeds the tolerance,
/// since then no measure in the hull satisfies the condition.
///
/// # Errors
/// [`crate::error::Error::NotSingular`] when `ū` is not singular.
pub fn integral_sonc<S: Real>(
    analysis: &Analysis<'_, S>,
    perturbations: &[ControlProcess<S>],
    tol: Tolerance<S>,
) -> Result<IntegralReport<S>> {
    let singular = require_singular(analysis, tol)?;
    let argmax = analysis.argmax().to_vec();
    let mut entries = Vec::with_capacity(perturbations.len());
    for (i, u) in perturbations.iter().enumerate() {
        let samples = pairing_samples(analysis, u, None)?;
        let scenario_values = samples.iter().map(|s| Estimate::from_samples(s)).collect();
        let vertex_values: Vec<Estimate<S>> = argmax
            .iter()
            .map(|&v| Estimate::from_samples(&weighted_samples(&samples, analysis.vertex(v))))
            .collect();
        let (pos, best) =
            vertex_values
                .iter()
                .enumerate()
                .fold((0, vertex_values[0]), |acc, (j, e)| {
                    if e.mean < acc.1.mean {
                        (j, *e)
                    } else {
                        acc
                    }
                });
        entries.push(IntegralEntry {
            perturbation: i,
            scenario_values,
            verdict: tol.nonpositive(best.mean, best.stderr),
            statistic: best.mean,
            statistic_stderr: best.stderr,
            minimizing_vertex: argmax[pos],
            vertex_values,
        });
    }
    Ok(IntegralReport {
        singular: singular.verdict,
        argmax_vertices: argmax,
        verdict: Verdict::all(entries.iter().map(|e| e.verdict)),
        entries,
    })
}

/// `−E∫⟨𝕊_γ y₁,γ(·; u₁ − u₂), u₁ − u₂⟩dt` per scenario; the monotonicity
/// condition asks for all of them to be nonnegative.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicityReport<S> {
    pub values: Vec<Estimate<S>>,
    pub verdicts: Vec<Verdict>,
    pub verdict: Verdict,
}

impl<S> MonotonicityReport<S> {
    pub fn fails(&self) -> bool {
        self.verdict == Verdict::Violated
    }
}

pub fn check_monotonicity<S: Real>(
    analysis: &Analysis<'_, S>,
    u1: &ControlProcess<S>,
    u2: &ControlProcess<S>,
    tol: Tolerance<S>,
) -> Result<MonotonicityReport<S>> {
    let samples = pairing_samples(analysis, u1, Some(u2))?;
    let values: Vec<Estimate<S>> = samples
        .iter()
        .map(|s| {
            let e = Estimate::from_samples(s);
            Estimate {
                mean: -e.mean,
                stderr: e.stderr,
            }
        })
        .collect();
    let verdicts: Vec<Verdict> = values
        .iter()
        .map(|e| tol.nonpositive(-e.mean, e.stderr))
        .collect();
    Ok(MonotonicityReport {
        verdict: Verdict::all(verdicts.iter().copied()),
        values,
        verdicts,
    })
}
