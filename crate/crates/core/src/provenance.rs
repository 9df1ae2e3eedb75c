//! Run metadata embedded in every emitted report.

use serde::Serialize;

use crate::model::spec::{AdjointMode, MalliavinMode, ProblemSpec};
use crate::scalar::Real;
use crate::simulate::bundle::PathBundle;

/// Everything needed to regenerate a report byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub toolkit: &'static str,
    pub version: &'static str,
    pub problem: String,
    pub seed: u64,
    pub n_paths: usize,
    pub steps: usize,
    pub horizon: f64,
    pub adjoint_mode: AdjointMode,
    pub malliavin_mode: MalliavinMode,
}

impl Provenance {
    pub fn new<S: Real>(spec: &ProblemSpec<S>, bundle: &PathBundle<S>) -> Self {
        let mut out = Self::for_spec(spec, bundle.seed(), bundle.n_paths());
        out.steps = bundle.grid().steps;
        out.horizon = bundle.grid().horizon.as_f64();
        out
    }

    /// Metadata of a run that draws no paths, on the grid of `spec`.
    pub fn for_spec<S: Real>(spec: &ProblemSpec<S>, seed: u64, n_paths: usize) -> Self {
        Self {
            toolkit: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            problem: spec.name.clone(),
            seed,
            n_paths,
            steps: spec.grid.steps,
            horizon: spec.grid.horizon.as_f64(),
            adjoint_mode: spec.adjoint_mode,
            malliavin_mode: spec.malliavin_mode,
        }
    }
}
