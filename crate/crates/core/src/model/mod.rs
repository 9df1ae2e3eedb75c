//! Problem data: grids, sets, scenarios, controls and the registry of
//! built-in problems.

pub mod builtin;
pub mod config;
pub mod consistency;
pub mod control;
pub mod grid;
pub mod polynomial;
pub mod scenario;
pub mod sets;
pub mod spec;

pub use builtin::{builtin, builtin_example, ProblemSetup, BUILTIN_NAMES};
pub use config::parse_config;
pub use consistency::{fd_consistency, ConsistencyReport, Mismatch};
pub use control::ControlProcess;
pub use grid::TimeGrid;
pub use polynomial::{Monomial, PolyCost, PolyField, PolyTerminal, Polynomial};
pub use scenario::{
    AdjointClosedForm, CostJet, FieldJet, FnCost, FnField, FnTerminal, ProcessFn, RunningCost,
    Scenario, TerminalCost, TerminalJet, VectorField,
};
pub use sets::{ControlBox, MeasurePolytope};
pub use spec::{AdjointMode, MalliavinMode, ProblemSpec, ValidationReport, Violation};
