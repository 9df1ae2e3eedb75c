//! Second-order necessary conditions for singular stochastic control under
//! model uncertainty.
//!
//! A problem is a finite family of controlled SDE scenarios with costs, a
//! polytope of measures over the scenarios and a reference control `ū`. The
//! crate simulates the state and its variations on shared Brownian paths,
//! solves the first- and second-order adjoint equations, assembles the
//! Hamiltonian and the operator `𝕊`, evaluates the robust cost with its
//! argmax measures and then tests singularity and the integral and pointwise
//! second-order conditions at `ū`.
//!
//! Everything is generic over the scalar type through [`scalar::Real`]; the
//! aliases below fix it to `f64`.

pub mod adjoint;
pub mod analysis;
pub mod conditions;
pub mod error;
pub mod expansion;
pub mod hamiltonian;
pub mod linalg;
pub mod model;
pub mod provenance;
pub mod robust;
pub mod scalar;
pub mod simulate;
pub mod stats;

pub use analysis::Analysis;
pub use error::{Error, Result};
pub use provenance::Provenance;
pub use scalar::Real;

pub type ProblemSpecF64 = model::ProblemSpec<f64>;
pub type ControlProcessF64 = model::ControlProcess<f64>;
pub type PathBundleF64 = simulate::PathBundle<f64>;
pub type PanelF64 = simulate::Panel<f64>;
pub type AnalysisF64<'a> = analysis::Analysis<'a, f64>;
pub type CostTableF64 = robust::CostTable<f64>;
pub type ConditionReportF64 = conditions::ConditionReport<f64>;
pub type ExpansionReportF64 = expansion::ExpansionReport<f64>;
pub type EstimateF64 = stats::Estimate<f64>;
