use thiserror::Error;

pub type Result<T, E = SalpError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SalpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid model{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    InvalidModel { message: String, line: Option<usize> },
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("iteration limit {iterations} reached (relative gap {gap:e})")]
    IterationLimit { iterations: usize, gap: f64 },
    #[error("solver numerical failure: {0}")]
    NumericalFailure(String),
    #[error("state is terminal: no actions available")]
    TerminalState,
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SalpError {
    pub(crate) fn model(message: impl Into<String>, line: Option<usize>) -> Self {
        Self::InvalidModel { message: message.into(), line }
    }
}
