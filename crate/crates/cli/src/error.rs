use std::path::PathBuf;

use salp::SalpError;
use salp_tetris::TetrisError;
use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Salp(#[from] SalpError),
    #[error(transparent)]
    Tetris(#[from] TetrisError),
    #[error("cannot parse TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{failed} bound check(s) failed; replay file {}", replay.display())]
    BoundFailure { failed: usize, replay: PathBuf },
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self::Config(message.into())
    }

    /// 2 for failed bound checks, 3 for solver failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::BoundFailure { .. } => 2,
            Self::Salp(e) if is_solver_failure(e) => 3,
            _ => 1,
        }
    }
}

pub fn is_solver_failure(e: &SalpError) -> bool {
    matches!(
        e,
        SalpError::Singular(_)
            | SalpError::NotPositiveDefinite(_)
            | SalpError::Infeasible
            | SalpError::Unbounded
            | SalpError::IterationLimit { .. }
            | SalpError::NumericalFailure(_)
    )
}

pub fn read_file(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::File { path: path.to_path_buf(), source })
}

pub fn create_file(path: &std::path::Path) -> Result<std::fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CliError::File { path: dir.to_path_buf(), source })?;
    }
    std::fs::File::create(path).map_err(|source| CliError::File { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::BoundFailure { failed: 1, replay: "r.json".into() }.exit_code(), 2);
        assert_eq!(CliError::Salp(SalpError::Unbounded).exit_code(), 3);
        assert_eq!(CliError::Salp(SalpError::IterationLimit { iterations: 5, gap: 1.0 }).exit_code(), 3);
        assert_eq!(CliError::Salp(SalpError::InvalidArgument("x".into())).exit_code(), 1);
        assert_eq!(CliError::config("bad").exit_code(), 1);
    }
}
