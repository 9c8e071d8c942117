use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TetrisError {
    #[error("piece index {0} out of range")]
    PieceIndex(usize),
    #[error("illegal placement: rotation {rotation}, column {column}")]
    IllegalPlacement { rotation: usize, column: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid board: {0}")]
    InvalidBoard(String),
}
