use thiserror::Error;

/// Errors raised by the models, learners, and experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("induced chain has {closed_classes} closed communicating classes; stationary distribution is not unique")]
    NonErgodicChain { closed_classes: usize },

    #[error("anchored linear system is numerically singular (condition number {condition:e})")]
    SingularSystem { condition: f64 },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("basis is rank deficient; singular values {singular_values:?}")]
    RankDeficientBasis { singular_values: Vec<f64> },

    #[error("MSPBE forms disagree: norm form {norm_form}, w form {w_form}")]
    IdentityMismatch { norm_form: f64, w_form: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("RBF width {width} at parameter {index} is below the floor {floor}")]
    WidthUnderflow { index: usize, width: f64, floor: f64 },

    #[error("non-finite update in {component} at step {step}")]
    NonFiniteUpdate { component: String, step: u64 },

    #[error("estimator bank has {updates} updates, burn-in requires {burn_in}")]
    ColdEstimatorBank { updates: u64, burn_in: u64 },

    #[error("invalid action {0}")]
    InvalidAction(i64),

    #[error("TD matrix A is singular")]
    SingularA,

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
