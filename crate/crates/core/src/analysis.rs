//! Everything the condition checks and the expansion scan need about one
//! reference control, computed once on a shared bundle.

use std::sync::OnceLock;

use crate::adjoint::{solve_adjoints, AdjointProcesses};
use crate::error::Result;
use crate::hamiltonian::{s_matrix, SProcess};
use crate::model::control::ControlProcess;
use crate::model::spec::ProblemSpec;
use crate::robust::{cost_samples, cost_table, CostTable};
use crate::scalar::{dot, Real};
use crate::simulate::bundle::PathBundle;
use crate::simulate::forward::{
    perturbation_trace, simulate_first_variation, simulate_state, StatePath,
};
use crate::simulate::panel::Panel;

/// Reference state, adjoints and `𝕊` of one scenario.
#[derive(Clone, Debug)]
pub struct ScenarioAnalysis<S> {
    pub reference: StatePath<S>,
    pub adjoint: AdjointProcesses<S>,
    pub s: SProcess<S>,
}

/// The pipeline state at `ū`.
#[derive(Clone, Debug)]
pub struct Analysis<'a, S: Real> {
    pub spec: &'a ProblemSpec<S>,
    pub control_bar: &'a ControlProcess<S>,
    pub bundle: &'a PathBundle<S>,
    pub scenarios: Vec<ScenarioAnalysis<S>>,
    /// Costs at `ū`, which fix `Λ^ū`.
    pub costs: CostTable<S>,
    /// Singularity integrands per scenario, filled on first use.
    pub(crate) quantities: OnceLock<Vec<Panel<S>>>,
}

impl<'a, S: Real> Analysis<'a, S> {
    /// Simulates `x̄_γ`, solves the adjoints in `spec.adjoint_mode` and fills
    /// `𝕊_γ` for every scenario.
    pub fn new(
        spec: &'a ProblemSpec<S>,
        control_bar: &'a ControlProcess<S>,
        bundle: &'a PathBundle<S>,
    ) -> Result<Self> {
        let mut scenarios = Vec::with_capacity(spec.scenarios.len());
        let mut samples = Vec::with_capacity(spec.scenarios.len());
        for g in 0..spec.scenarios.len() {
            let reference = simulate_state(spec, control_bar, g, bundle)?;
            samples.push(cost_samples(spec, &reference, bundle)?);
            let adjoint = solve_adjoints(spec, &reference, bundle)?;
            let s = s_matrix(spec, &reference, &adjoint, bundle)?;
            scenarios.push(ScenarioAnalysis {
                reference,
                adjoint,
                s,
            });
        }
        let costs = cost_table(spec, samples)?;
        Ok(Self {
            spec,
            control_bar,
            bundle,
            scenarios,
            costs,
            quantities: OnceLock::new(),
        })
    }

    /// Indices of the `Λ^ū` vertices.
    pub fn argmax(&self) -> &[usize] {
        &self.costs.argmax_vertices
    }

    pub fn vertex(&self, v: usize) -> &[S] {
        &self.spec.measures.vertices[v]
    }

    /// `v = u − ū` along `x̄_γ`.
    pub fn perturbation(&self, scenario: usize, u: &ControlProcess<S>) -> Result<Panel<S>> {
        perturbation_trace(
            self.spec,
            &self.scenarios[scenario].reference,
            u,
            self.bundle,
        )
    }

    /// `y₁,γ(·; v)`.
    pub fn first_variation(&self, scenario: usize, v: &Panel<S>) -> Result<Panel<S>> {
        simulate_first_variation(
            self.spec,
            &self.scenarios[scenario].reference,
            v,
            self.bundle,
        )
    }

    /// Per-path trapezoid sums of `⟨𝕊_γ y, w⟩` over the grid.
    pub fn s_pairing(&self, scenario: usize, y: &Panel<S>, w: &Panel<S>) -> Vec<S> {
        let grid = self.bundle.grid();
        let (n, m) = (self.spec.state_dim(), self.spec.control_dim());
        let s = &self.scenarios[scenario].s.s;
        let half_dt = grid.dt() * S::lit(0.5);
        let at = |p: usize, k: usize| {
            let sy = s.mat_at(p, k, m).mul_vec(y.at(p, k));
            debug_assert_eq!(sy.len(), m);
            debug_assert_eq!(y.width(), n);
            dot(&sy, w.at(p, k))
        };
        (0..self.bundle.n_paths())
            .map(|p| {
                let mut acc = S::zero();
                let mut left = at(p, 0);
                for k in 0..grid.steps {
                    let right = at(p, k + 1);
                    acc += (left + right) * half_dt;
                    left = right;
                }
                acc
            })
            .collect()
    }
}
