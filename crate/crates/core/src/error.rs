use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("grid step mismatch: {left} vs {right}")]
    StepMismatch { left: f64, right: f64 },

    #[error("{delta} is not a nonnegative multiple of the grid step {step}")]
    NotGridMultiple { delta: f64, step: f64 },

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("path is not in the Hölder ball: {0}")]
    NotInBall(String),

    #[error("time {requested} lies beyond the horizon {horizon}")]
    BeyondHorizon { requested: f64, horizon: f64 },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("singular regression at step {step} (condition number {condition:.3e})")]
    SingularRegression { step: usize, condition: f64 },

    #[error("tree too large: {leaves:.3e} leaves exceeds the enumeration limit")]
    TreeTooLarge { leaves: f64 },

    #[error("analytic derivative disagrees with finite differences: {0}")]
    DerivativeMismatch(String),

    #[error("unknown problem id '{0}'")]
    UnknownProblem(String),

    #[error("problem has no closed-form value functional")]
    NoClosedForm,

    #[error("expression error: {0}")]
    Expression(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
