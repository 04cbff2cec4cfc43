use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{source_name}: {message}")]
    Parse { source_name: String, message: String },

    #[error("scenario has {} problem(s):\n  - {}", .0.len(), .0.join("\n  - "))]
    Scenario(Vec<String>),

    #[error("degenerate sampling window: {0}")]
    DegenerateWindow(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("search space of {size:e} schedules exceeds the limit of {limit:e}")]
    SearchTooLarge { size: f64, limit: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn parse(source_name: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            message: message.into(),
        }
    }
}
