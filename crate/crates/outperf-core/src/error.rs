use thiserror::Error;

/// Error taxonomy shared by every module in the crate.
///
/// The split matters to callers: `InvalidInput`, `Capacity`, and
/// `Precondition` mean the request itself was malformed (the CLI maps these to
/// exit code 1), while `Numerical` means a well-formed computation failed to
/// converge or produced non-finite intermediates (exit code 2).
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CoreError {
    /// True for errors caused by the caller's request rather than by the
    /// arithmetic; used to pick process exit codes.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, CoreError::Numerical(_))
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
