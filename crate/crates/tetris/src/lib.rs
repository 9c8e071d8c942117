//! Tetris with gravity-drop placements, posed as a discounted MDP for the
//! `salp` solvers.

pub mod board;
pub mod error;
pub mod piece;

pub use board::{Board, Placement, COLS, NUM_FEATURES, ROWS};
pub use error::TetrisError;
pub use piece::Piece;
pub mod state;

pub use state::{TetrisEnv, TetrisState, DEFAULT_DISCOUNT};
pub mod play;

pub use play::{baseline_policy, play_episode, play_games, GreedyPolicy, PlacementPolicy, RandomPolicy, BASELINE_WEIGHTS};
