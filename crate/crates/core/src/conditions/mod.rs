//! Singularity certification, the integral and pointwise second-order
//! necessary conditions, the monotonicity probe and the window scan.
//!
//! Every statistic here is linear in the measure λ, so "there is a λ in
//! `Λ^ū` with value ≤ 0" is decided exactly on the vertices of `Λ^ū`.

mod integral;
mod pointwise;
pub(crate) mod singular;
mod window;

use serde::Serialize;

use crate::scalar::Real;

pub use integral::{
    check_monotonicity, integral_sonc, IntegralEntry, IntegralReport, MonotonicityReport,
};
pub use pointwise::{
    pointwise_sonc, LambdaClaim, PerVEntry, PointwiseReport, PointwiseValue, Witness,
};
pub use singular::{
    check_singular, singular_vertex_stats, NodeStat, SingularReport, VertexSingularity,
};
pub use window::{lebesgue_window_scan, window_integrands, WindowReport, WindowRow, WindowTerm};

/// Outcome of a condition check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Satisfied,
    Violated,
    /// The statistic is within tolerance of the boundary.
    Inconclusive,
}

impl Verdict {
    /// Violated if any part is, satisfied if all are, inconclusive otherwise.
    pub fn all(parts: impl IntoIterator<Item = Verdict>) -> Verdict {
        let mut out = Verdict::Satisfied;
        for v in parts {
            match v {
                Verdict::Violated => return Verdict::Violated,
                Verdict::Inconclusive => out = Verdict::Inconclusive,
                Verdict::Satisfied => {}
            }
        }
        out
    }
}

/// Deterministic floor of the automatic tolerance.
pub const TOL_FLOOR: f64 = 1e-9;
/// Standard errors in the automatic tolerance.
pub const TOL_SIGMAS: f64 = 3.0;

/// Decision tolerance for one statistic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Tolerance<S> {
    /// `max(1e-9, 3·stderr)`.
    Auto,
    Fixed(S),
}

impl<S: Real> Default for Tolerance<S> {
    fn default() -> Self {
        Tolerance::Auto
    }
}

impl<S: Real> Tolerance<S> {
    pub fn resolve(&self, stderr: S) -> S {
        match *self {
            Tolerance::Auto => S::lit(TOL_FLOOR).max(S::lit(TOL_SIGMAS) * stderr),
            Tolerance::Fixed(t) => t,
        }
    }

    /// Verdict on a condition `value ≤ 0`.
    pub fn nonpositive(&self, value: S, stderr: S) -> Verdict {
        let tol = self.resolve(stderr);
        if value > tol {
            Verdict::Violated
        } else if value < -tol {
            Verdict::Satisfied
        } else {
            Verdict::Inconclusive
        }
    }

    /// Verdict on a condition `value = 0` for a nonnegative statistic. Under
    /// [`Tolerance::Auto`], values between the floor and `3·stderr` are
    /// inconclusive.
    pub fn vanishing(&self, value: S, stderr: S) -> Verdict {
        match *self {
            Tolerance::Auto if value <= S::lit(TOL_FLOOR) => Verdict::Satisfied,
            Tolerance::Auto if value <= self.resolve(stderr) => Verdict::Inconclusive,
            Tolerance::Auto => Verdict::Violated,
            Tolerance::Fixed(t) if value <= t => Verdict::Satisfied,
            Tolerance::Fixed(_) => Verdict::Violated,
        }
    }
}

/// All checks run by the `check` command.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionReport<S> {
    pub singular: SingularReport<S>,
    pub integral_sonc: Option<IntegralReport<S>>,
    pub monotonicity: Option<MonotonicityReport<S>>,
    pub pointwise_sonc: Option<PointwiseReport<S>>,
}

impl<S: Real> ConditionReport<S> {
    /// Violated if either second-order condition is.
    pub fn verdict(&self) -> Verdict {
        Verdict::all(
            self.integral_sonc
                .iter()
                .map(|r| r.verdict)
                .chain(self.pointwise_sonc.iter().map(|r| r.verdict)),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_bands() {
        let auto = Tolerance::<f64>::Auto;
        assert_eq!(auto.nonpositive(1.0, 0.1), Verdict::Violated);
        assert_eq!(auto.nonpositive(0.2, 0.1), Verdict::Inconclusive);
        assert_eq!(auto.nonpositive(-1.0, 0.1), Verdict::Satisfied);
        assert_eq!(auto.nonpositive(0.0, 0.0), Verdict::Inconclusive);
        assert_eq!(auto.vanishing(0.0, 0.0), Verdict::Satisfied);
        assert_eq!(auto.vanishing(0.01, 0.1), Verdict::Inconclusive);
        assert_eq!(auto.vanishing(1.0, 0.0), Verdict::Violated);
        assert_eq!(
            Tolerance::Fixed(0.5).vanishing(0.4, 10.0),
            Verdict::Satisfied
        );
    }

    #[test]
    fn verdict_aggregation() {
        use Verdict::*;
        assert_eq!(Verdict::all([Satisfied, Satisfied]), Satisfied);
        assert_eq!(Verdict::all([Satisfied, Inconclusive]), Inconclusive);
        assert_eq!(Verdict::all([Inconclusive, Violated]), Violated);
        assert_eq!(Verdict::all([]), Satisfied);
    }
}
