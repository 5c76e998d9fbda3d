use thiserror::Error;

use wsdiag_core::Error as CoreError;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("config: {0}")]
    Config(String),

    #[error("{0}")]
    Usage(String),

    #[error("output: {0}")]
    Output(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 3 for violated hypotheses or rejected input, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 3,
            CliError::Core(e) => match e {
                CoreError::GridTooCoarse { .. }
                | CoreError::InvalidGrid(_)
                | CoreError::NoBoundary
                | CoreError::UnderResolved { .. }
                | CoreError::MarginViolation { .. }
                | CoreError::DomainTooSmall { .. }
                | CoreError::ZeroWidthTransition
                | CoreError::ImpermeabilityViolated { .. }
                | CoreError::ShellUnderResolved { .. }
                | CoreError::MissingPressure
                | CoreError::Cfl { .. }
                | CoreError::TooFewRungs { .. }
                | CoreError::InvalidParameter { .. }
                | CoreError::Shape(_)
                | CoreError::Format(_) => 3,
                _ => 1,
            },
            _ => 1,
        }
    }
}
