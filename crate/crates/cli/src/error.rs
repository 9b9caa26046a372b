//! CLI error wrapper and the exit-code contract.
//!
//! 0 success, 1 I/O or internal, 2 parameter or configuration, 3 solver
//! failure, 4 integrator failure, 5 constraint violation.

use peierls::Error as CoreError;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(std::io::Error),
    Core(CoreError),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                CoreError::InvalidParameter(_)
                | CoreError::DimensionOverflow { .. }
                | CoreError::DimensionMismatch { .. } => 2,
                CoreError::SolverFailure { .. } => 3,
                CoreError::IntegratorFailure { .. } => 4,
                CoreError::ConstraintViolation { .. } => 5,
                CoreError::Consistency(_) => 3,
            },
        }
    }
}
