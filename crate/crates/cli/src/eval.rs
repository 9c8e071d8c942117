//! Monte Carlo policy evaluation with common random numbers.

use std::path::{Path, PathBuf};

use salp::formulation::ScoreEstimate;
use salp_tetris::play::{play_games, GameRecord};
use salp_tetris::PlacementPolicy;
use serde::{Deserialize, Serialize};

use crate::error::{create_file, CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub policy_id: String,
    /// Lines cleared per game.
    pub mean: f64,
    pub stderr: f64,
    pub games: u64,
    pub seed: u64,
    pub scores_path: Option<PathBuf>,
}

impl EvaluationResult {
    pub fn estimate(&self) -> ScoreEstimate {
        ScoreEstimate { mean: self.mean, stderr: self.stderr }
    }
}

/// Sample mean and standard error of the mean; the error is zero for a
/// single observation.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Serialize, Deserialize)]
struct GameRow {
    game: u64,
    lines: u64,
    steps: u64,
    terminated: bool,
    piece_digest: String,
}

pub fn write_game_records(path: &Path, records: &[GameRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(create_file(path)?);
    for r in records {
        out.serialize(GameRow {
            game: r.game,
            lines: r.lines,
            steps: r.steps,
            terminated: r.terminated,
            piece_digest: r.piece_digest.clone(),
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_game_records(path: &Path) -> Result<Vec<GameRecord>> {
    let mut input = csv::Reader::from_path(path)?;
    input
        .deserialize()
        .map(|row| {
            let r: GameRow = row?;
            Ok(GameRecord { game: r.game, lines: r.lines, steps: r.steps, terminated: r.terminated, piece_digest: r.piece_digest })
        })
        .collect()
}

pub fn summarize(policy_id: &str, records: &[GameRecord], seed: u64, scores_path: Option<PathBuf>) -> EvaluationResult {
    let lines: Vec<f64> = records.iter().map(|r| r.lines as f64).collect();
    let (mean, stderr) = mean_and_stderr(&lines);
    EvaluationResult { policy_id: policy_id.to_string(), mean, stderr, games: records.len() as u64, seed, scores_path }
}

/// Plays `games` games; game `g` draws its pieces from `(master_seed, g)`
/// only. Per-game scores go to `scores_path` when given.
pub fn eval_policy<P: PlacementPolicy + ?Sized>(
    policy: &P,
    policy_id: &str,
    games: u64,
    master_seed: u64,
    max_steps: u64,
    scores_path: Option<&Path>,
) -> Result<(EvaluationResult, Vec<GameRecord>)> {
    if games == 0 || max_steps == 0 {
        return Err(CliError::config("evaluation needs at least one game and one step"));
    }
    let records = play_games(policy, games, master_seed, max_steps);
    if let Some(path) = scores_path {
        write_game_records(path, &records)?;
    }
    let result = summarize(policy_id, &records, master_seed, scores_path.map(Path::to_path_buf));
    Ok((result, records))
}
