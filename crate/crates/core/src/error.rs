use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("requested precision {requested:e} is below the achievable floor {floor:e}")]
    PrecisionUnachievable { requested: f64, floor: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A rank verdict failed the margin or resampling gate.
    #[error("inconclusive verdict in {component}: {reason}")]
    Inconclusive { component: String, reason: String },

    /// Two routes that must agree did not. Either the numerics or the
    /// genericity assumption broke down.
    #[error("consistency violation: {0}")]
    Consistency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn inconclusive(component: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Inconclusive {
            component: component.into(),
            reason: reason.into(),
        }
    }
}
