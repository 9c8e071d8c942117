//! Experiment pipelines behind the `salp` command: Tetris line searches,
//! bound certificates over random MDPs and sample-complexity curves.

pub mod certify;
pub mod config;
pub mod curve;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod output;

pub use error::{CliError, Result};
