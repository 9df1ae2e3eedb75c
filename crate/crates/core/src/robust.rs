//! Scenario costs, the robust cost over the measure polytope and its
//! argmax vertices.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::control::ControlProcess;
use crate::model::spec::ProblemSpec;
use crate::scalar::Real;
use crate::simulate::bundle::PathBundle;
use crate::simulate::forward::{scenario_of, simulate_state, StatePath};
use crate::simulate::panel::Panel;
use crate::stats::Estimate;

/// Relative floor of the tie tolerance in the argmax rule.
const TIE_FLOOR: f64 = 1e-12;
/// Standard errors allowed between a vertex and the maximum.
const TIE_SIGMAS: f64 = 3.0;

/// Per-path costs `Σ_k f(t_k, x_k, u_k)Δt + h(x_N)` of one simulated state.
pub fn cost_samples<S: Real>(
    spec: &ProblemSpec<S>,
    state: &StatePath<S>,
    bundle: &PathBundle<S>,
) -> Result<Vec<S>> {
    let sc = scenario_of(spec, state.scenario)?;
    let grid = *bundle.grid();
    let dt = grid.dt();
    let scenario = state.scenario;
    let panel = Panel::par_build(state.x.paths(), 1, 1, |p, out| {
        let mut acc = S::zero();
        for k in 0..grid.steps {
            acc += sc.running_cost(grid.node(k), state.x.at(p, k), state.u.at(p, k)) * dt;
        }
        acc += sc.terminal_cost(state.x.at(p, grid.steps));
        if !acc.is_finite() {
            return Err(Error::NonFinite {
                quantity: "cost",
                scenario,
                path: p,
                step: grid.steps,
            });
        }
        out[0] = acc;
        Ok(())
    })?;
    Ok(panel.as_slice().to_vec())
}

/// `𝒥(u; γ)` with its standard error, plus the per-path samples.
pub fn cost_per_scenario<S: Real>(
    spec: &ProblemSpec<S>,
    control: &ControlProcess<S>,
    scenario: usize,
    bundle: &PathBundle<S>,
) -> Result<(Estimate<S>, Vec<S>)> {
    let state = simulate_state(spec, control, scenario, bundle)?;
    let samples = cost_samples(spec, &state, bundle)?;
    Ok((Estimate::from_samples(&samples), samples))
}

/// Costs of one control over every scenario and polytope vertex.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostTable<S> {
    pub scenario_costs: Vec<Estimate<S>>,
    pub vertex_costs: Vec<Estimate<S>>,
    pub robust_value: S,
    pub argmax_vertices: Vec<usize>,
    /// Standard error of the robust value (that of the best vertex).
    pub stderr: S,
    /// Per-scenario, per-path cost samples.
    #[serde(skip)]
    pub samples: Vec<Vec<S>>,
}

impl<S: Real> CostTable<S> {
    /// Per-path samples of `Σ_γ λ_γ 𝒥(u; γ)`.
    pub fn combined_samples(&self, weights: &[S]) -> Vec<S> {
        weighted_samples(&self.samples, weights)
    }

    /// `Σ_γ λ_γ 𝒥(u; γ)` from the scenario means.
    pub fn value_at(&self, weights: &[S]) -> S {
        weights
            .iter()
            .zip(&self.scenario_costs)
            .fold(S::zero(), |acc, (&w, e)| acc + w * e.mean)
    }
}

/// Per-path `Σ_γ λ_γ samples_γ`.
pub fn weighted_samples<S: Real>(samples: &[Vec<S>], weights: &[S]) -> Vec<S> {
    let paths = samples.first().map_or(0, Vec::len);
    (0..paths)
        .map(|p| {
            weights
                .iter()
                .zip(samples)
                .fold(S::zero(), |acc, (&w, s)| acc + w * s[p])
        })
        .collect()
}

/// Mean and standard error of the per-path difference `a − b`.
pub fn paired_difference<S: Real>(a: &[S], b: &[S]) -> Estimate<S> {
    let d: Vec<S> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    Estimate::from_samples(&d)
}

/// Builds the table from per-scenario samples on a common bundle.
pub fn cost_table<S: Real>(spec: &ProblemSpec<S>, samples: Vec<Vec<S>>) -> Result<CostTable<S>> {
    if samples.len() != spec.scenarios.len() {
        return Err(Error::InvalidInput(format!(
            "{} sample sets for {} scenarios",
            samples.len(),
            spec.scenarios.len()
        )));
    }
    let scenario_costs: Vec<Estimate<S>> =
        samples.iter().map(|s| Estimate::from_samples(s)).collect();
    let vertex_samples: Vec<Vec<S>> = spec
        .measures
        .vertices
        .iter()
        .map(|w| weighted_samples(&samples, w))
        .collect();
    let vertex_costs: Vec<Estimate<S>> = spec
        .measures
        .vertices
        .iter()
        .zip(&vertex_samples)
        .map(|(w, vs)| {
            let mean = w
                .iter()
                .zip(&scenario_costs)
                .fold(S::zero(), |acc, (&l, e)| acc + l * e.mean);
            Estimate {
                mean,
                stderr: Estimate::from_samples(vs).stderr,
            }
        })
        .collect();
    let best = argmax_index(&vertex_costs)
        .ok_or_else(|| Error::Internal("measure polytope has no vertices".into()))?;
    let robust_value = vertex_costs[best].mean;
    let argmax_vertices = (0..vertex_costs.len())
        .filter(|&v| {
            let gap = robust_value - vertex_costs[v].mean;
            let se = paired_difference(&vertex_samples[best], &vertex_samples[v]).stderr;
            let floor = S::lit(TIE_FLOOR) * (S::one() + robust_value.abs());
            gap <= (S::lit(TIE_SIGMAS) * se).max(floor)
        })
        .collect();
    Ok(CostTable {
        stderr: vertex_costs[best].stderr,
        scenario_costs,
        vertex_costs,
        robust_value,
        argmax_vertices,
        samples,
    })
}

fn argmax_index<S: Real>(values: &[Estimate<S>]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if best.is_none_or(|b| v.mean > values[b].mean) {
            best = Some(i);
        }
    }
    best
}

/// `Ĵ(u) = max_λ Σ_γ λ_γ 𝒥(u; γ)` over the polytope vertices.
pub fn robust_cost<S: Real>(
    spec: &ProblemSpec<S>,
    control: &ControlProcess<S>,
    bundle: &PathBundle<S>,
) -> Result<CostTable<S>> {
    let samples = (0..spec.scenarios.len())
        .map(|g| cost_per_scenario(spec, control, g, bundle).map(|(_, s)| s))
        .collect::<Result<Vec<_>>>()?;
    cost_table(spec, samples)
}

/// Indices of the vertices attaining the robust value: those whose mean is
/// within three standard errors of the paired difference to the best
/// vertex, or within a relative `1e-12` when both are exact.
pub fn argmax_measures<S: Real>(table: &CostTable<S>) -> &[usize] {
    &table.argmax_vertices
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin::builtin_example;
    use crate::simulate::bundle::generate_paths;

    #[test]
    fn example_reference_costs_vanish() {
        let spec = builtin_example::<f64>();
        let bundle = generate_paths(1, 500, &spec.grid).unwrap();
        let table = robust_cost(&spec, &ControlProcess::constant(vec![0.0]), &bundle).unwrap();
        assert_eq!(table.robust_value, 0.0);
        assert_eq!(table.argmax_vertices, vec![0, 1]);
    }

    #[test]
    fn dominated_vertex_is_excluded() {
        let spec = builtin_example::<f64>();
        let bundle = generate_paths(2, 5_000, &spec.grid).unwrap();
        let table = robust_cost(&spec, &ControlProcess::constant(vec![1.0]), &bundle).unwrap();
        assert_eq!(table.argmax_vertices, vec![1]);
        assert!((table.robust_value + 0.25).abs() < 1e-12);
    }
}
