//! First and second adjoint pairs, in closed form or by regression Monte
//! Carlo, and the duality identities that tie them to the variations.

pub mod duality;
pub mod regression;
pub mod solve;

pub use duality::{
    duality_both, duality_check, duality_check_first, duality_check_second, duality_first,
    duality_second, DualityReport,
};
pub use regression::{Design, RegressionBasis};
pub use solve::{
    adjoint_fourth_moments, solve_adjoint_first, solve_adjoint_second, solve_adjoints,
    solve_adjoints_in, AdjointDiagnostics, AdjointProcesses, FirstAdjoint, SecondAdjoint,
};
