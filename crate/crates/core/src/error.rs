use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite {quantity} in scenario {scenario}, path {path}, step {step}")]
    NonFinite {
        quantity: &'static str,
        scenario: usize,
        path: usize,
        step: usize,
    },

    #[error(
        "control value outside the admissible box in scenario {scenario}, path {path}, step {step}"
    )]
    ControlOutsideBox {
        scenario: usize,
        path: usize,
        step: usize,
    },

    #[error("fundamental matrix degenerate (|det| = {det:e}) in scenario {scenario}, path {path}, step {step}")]
    DegenerateFundamental {
        scenario: usize,
        path: usize,
        step: usize,
        det: f64,
    },

    #[error("rank-deficient regression at node {node} of scenario {scenario} (ridge disabled)")]
    RankDeficient { scenario: usize, node: usize },

    #[error("scenario {scenario} lacks a closed form for {what}")]
    MissingClosedForm { scenario: usize, what: &'static str },

    #[error("{0}")]
    FiniteDifferenceOnly(String),

    #[error("reference control is not singular: {0}")]
    NotSingular(String),

    #[error("unsupported Malliavin setting: {0}")]
    MalliavinUnsupported(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// True for failures of the numerical pipeline, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        !matches!(self, Error::Config(_) | Error::InvalidInput(_))
    }
}
