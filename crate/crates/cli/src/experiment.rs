//! Sample → per-θ solve → evaluation → best-θ selection.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use salp::env::{Environment, ExplicitEnv};
use salp::formulation::{build_sampled_salp, theta_line_search, SampledMode, ScoreEstimate};
use salp::mdp::{greedy_policy, optimal_value, policy_value, MdpModel, StateDistribution};
use salp::sampling::{sample_baseline_states, sample_occupancy_exact, SampleSet};
use salp_tetris::play::{play_games, policy_rng, GameRecord};
use salp_tetris::{GreedyPolicy, PlacementPolicy, TetrisEnv, TetrisState};
use serde::{Deserialize, Serialize};

use crate::config::{EnvSpec, ExperimentConfig};
use crate::error::{read_file, Result};
use crate::eval::{mean_and_stderr, summarize, write_game_records};
use crate::output::{write_csv, write_json};

/// One `(seed, θ)` cell; identical across runs of the same config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub seed: u64,
    pub sample_size: usize,
    pub theta: f64,
    pub objective: Option<f64>,
    pub budget_used: Option<f64>,
    pub iterations: usize,
    pub mean_score: Option<f64>,
    pub stderr: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub seed: u64,
    pub theta: f64,
    pub solve_time_s: f64,
}

/// Mean score over the seeds whose cell succeeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub theta: f64,
    pub sample_size: usize,
    pub mean_score: Option<f64>,
    /// Standard error across seeds.
    pub stderr: Option<f64>,
    pub seeds_ok: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub distinct_states: usize,
    pub terminal_samples: usize,
    pub best_theta: Option<f64>,
    pub best_mean: Option<f64>,
    pub best_weights: Option<Vec<f64>>,
    pub error: Option<String>,
}

/// Best single policy of one method across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub best_mean: Option<f64>,
    pub best_seed: Option<u64>,
    pub best_theta: Option<f64>,
    /// Mean over seeds of each seed's best policy.
    pub average_of_seed_best: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub env: String,
    pub sample_size: usize,
    pub seeds: Vec<u64>,
    pub eval_games: u64,
    pub eval_seed: u64,
    pub theta_schedule: Vec<f64>,
    /// Argmax of the seed-averaged curve.
    pub best_theta: Option<f64>,
    pub best_mean: Option<f64>,
    pub zero_theta_mean: Option<f64>,
    pub methods: Vec<MethodSummary>,
    pub per_seed: Vec<SeedSummary>,
    pub failed_cells: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub rows: Vec<CellRow>,
    pub timings: Vec<TimingRow>,
    pub table: Vec<TableRow>,
    pub summary: ExperimentSummary,
    /// Per-game records by `(seed, θ index)`; empty for explicit MDPs.
    pub games: Vec<((u64, usize), Vec<GameRecord>)>,
}

impl ExperimentResults {
    /// Seed-averaged score per θ, `None` where every seed failed.
    pub fn curve(&self) -> Vec<(f64, Option<f64>)> {
        self.table.iter().map(|r| (r.theta, r.mean_score)).collect()
    }

    /// `fig2.csv`, `timings.csv`, `table.csv`, `summary.json` and per-game
    /// score files under `games/`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_csv(&dir.join("fig2.csv"), &self.rows)?;
        write_csv(&dir.join("timings.csv"), &self.timings)?;
        write_csv(&dir.join("table.csv"), &self.table)?;
        write_json(&dir.join("summary.json"), &self.summary)?;
        for ((seed, i), records) in &self.games {
            write_game_records(&dir.join(format!("games/seed{seed}_theta{i:02}.csv")), records)?;
        }
        Ok(())
    }
}

struct SeedOutcome {
    rows: Vec<CellRow>,
    timings: Vec<TimingRow>,
    summary: SeedSummary,
    games: Vec<((u64, usize), Vec<GameRecord>)>,
}

type Scorer<'a> = dyn Fn(&[f64]) -> Result<(ScoreEstimate, Vec<GameRecord>)> + Sync + 'a;

fn failed_seed(cfg: &ExperimentConfig, seed: u64, error: String) -> SeedOutcome {
    log::warn!("seed {seed} failed: {error}");
    SeedOutcome {
        rows: cfg
            .theta_schedule
            .iter()
            .map(|&theta| CellRow {
                seed,
                sample_size: cfg.sample_size,
                theta,
                objective: None,
                budget_used: None,
                iterations: 0,
                mean_score: None,
                stderr: None,
                error: Some(error.clone()),
            })
            .collect(),
        timings: Vec::new(),
        summary: SeedSummary {
            seed,
            distinct_states: 0,
            terminal_samples: 0,
            best_theta: None,
            best_mean: None,
            best_weights: None,
            error: Some(error),
        },
        games: Vec::new(),
    }
}

fn weight_key(r: &[f64]) -> Vec<u64> {
    r.iter().map(|v| v.to_bits()).collect()
}

/// Line search over the schedule for one sample.
fn run_seed<E: Environment<f64>>(
    cfg: &ExperimentConfig,
    env: &E,
    seed: u64,
    states: &[E::State],
    score: &Scorer<'_>,
) -> Result<SeedOutcome> {
    let sampled = build_sampled_salp(env, states, SampledMode::Budget(0.0), None)?;
    log::info!(
        "seed {seed}: {} samples, {} distinct, {} rows",
        sampled.sample_size,
        sampled.distinct_states,
        sampled.lp.n_rows()
    );
    let played: Mutex<HashMap<Vec<u64>, Vec<GameRecord>>> = Mutex::new(HashMap::new());
    let search = theta_line_search(&sampled.lp, &cfg.theta_schedule, &cfg.solver.options(), |w| {
        let (est, records) = score(w).map_err(|e| salp::SalpError::InvalidArgument(e.to_string()))?;
        if !records.is_empty() {
            played.lock().expect("evaluation lock").insert(weight_key(w), records);
        }
        Ok(est)
    })?;
    let played = played.into_inner().expect("evaluation lock");
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    let mut games = Vec::new();
    for (i, (row, sol)) in search.rows.iter().zip(&search.solutions).enumerate() {
        rows.push(CellRow {
            seed,
            sample_size: cfg.sample_size,
            theta: row.theta,
            objective: row.objective,
            budget_used: row.budget_used,
            iterations: row.iterations,
            mean_score: row.score.map(|s| s.mean),
            stderr: row.score.map(|s| s.stderr),
            error: row.error.clone(),
        });
        timings.push(TimingRow { seed, theta: row.theta, solve_time_s: row.solve_time_s });
        if let Some(records) = sol.as_ref().and_then(|s| played.get(&weight_key(&s.weights)).cloned()) {
            games.push(((seed, i), records));
        }
    }
    let best = search.best;
    let summary = SeedSummary {
        seed,
        distinct_states: sampled.distinct_states,
        terminal_samples: sampled.terminal_samples,
        best_theta: search.best_theta(),
        best_mean: best.and_then(|i| search.rows[i].score.map(|s| s.mean)),
        best_weights: search.best_solution().map(|s| s.weights.0.clone()),
        error: None,
    };
    Ok(SeedOutcome { rows, timings, summary, games })
}

fn aggregate(cfg: &ExperimentConfig, env_name: &str, outcomes: Vec<SeedOutcome>) -> ExperimentResults {
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    let mut per_seed = Vec::new();
    let mut games = Vec::new();
    for o in outcomes {
        rows.extend(o.rows);
        timings.extend(o.timings);
        per_seed.push(o.summary);
        games.extend(o.games);
    }
    let table: Vec<TableRow> = cfg
        .theta_schedule
        .iter()
        .map(|&theta| {
            let scores: Vec<f64> = rows.iter().filter(|r| r.theta == theta).filter_map(|r| r.mean_score).collect();
            let (mean, err) = mean_and_stderr(&scores);
            TableRow {
                theta,
                sample_size: cfg.sample_size,
                mean_score: (!scores.is_empty()).then_some(mean),
                stderr: (!scores.is_empty()).then_some(err),
                seeds_ok: scores.len(),
            }
        })
        .collect();
    let best = table
        .iter()
        .filter_map(|r| r.mean_score.map(|m| (r.theta, m)))
        .fold(None, |acc: Option<(f64, f64)>, (t, m)| match acc {
            Some((_, bm)) if bm >= m => acc,
            _ => Some((t, m)),
        });
    let method = |name: &str, cells: Vec<&CellRow>| {
        let best = cells
            .iter()
            .filter_map(|r| r.mean_score.map(|m| (r, m)))
            .fold(None, |acc: Option<(&CellRow, f64)>, (r, m)| match acc {
                Some((_, bm)) if bm >= m => acc,
                _ => Some((r, m)),
            });
        let seed_best: Vec<f64> = cfg
            .seeds
            .iter()
            .filter_map(|&s| {
                cells.iter().filter(|r| r.seed == s).filter_map(|r| r.mean_score).fold(None, |a: Option<f64>, m| {
                    Some(a.map_or(m, |a| a.max(m)))
                })
            })
            .collect();
        MethodSummary {
            method: name.to_string(),
            best_mean: best.map(|(_, m)| m),
            best_seed: best.map(|(r, _)| r.seed),
            best_theta: best.map(|(r, _)| r.theta),
            average_of_seed_best: (!seed_best.is_empty()).then(|| mean_and_stderr(&seed_best).0),
        }
    };
    let methods = vec![
        method("ALP", rows.iter().filter(|r| r.theta == 0.0).collect()),
        method("SALP", rows.iter().collect()),
    ];
    let summary = ExperimentSummary {
        env: env_name.to_string(),
        sample_size: cfg.sample_size,
        seeds: cfg.seeds.clone(),
        eval_games: cfg.eval_games,
        eval_seed: cfg.eval_seed,
        theta_schedule: cfg.theta_schedule.clone(),
        best_theta: best.map(|b| b.0),
        best_mean: best.map(|b| b.1),
        zero_theta_mean: table.first().and_then(|r| r.mean_score),
        methods,
        per_seed,
        failed_cells: rows.iter().filter(|r| r.error.is_some()).count(),
    };
    ExperimentResults { rows, timings, table, summary, games }
}

/// Samples with the baseline greedy policy from the empty board.
pub fn sample_tetris_states(cfg: &ExperimentConfig, env: TetrisEnv, seed: u64) -> Result<SampleSet<TetrisState>> {
    let baseline = GreedyPolicy::new(cfg.baseline.tetris_weights(), env)?;
    let set = sample_baseline_states(
        &env,
        |st: &TetrisState| {
            let moves = st.legal_placements();
            (!moves.is_empty()).then(|| baseline.choose(st, &moves, &mut policy_rng(seed, 0)))
        },
        cfg.sample_size,
        &cfg.baseline.sampling(),
        seed,
    )?;
    Ok(set)
}

pub fn run_tetris_pipeline(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    cfg.validate()?;
    let EnvSpec::Tetris { discount } = cfg.env else {
        return Err(crate::error::CliError::config("run_tetris_pipeline needs the tetris environment"));
    };
    let env = TetrisEnv::new(discount)?;
    let score = |w: &[f64]| -> Result<(ScoreEstimate, Vec<GameRecord>)> {
        let policy = GreedyPolicy::new(w.to_vec(), env)?;
        let records = play_games(&policy, cfg.eval_games, cfg.eval_seed, cfg.max_eval_steps);
        Ok((summarize("", &records, cfg.eval_seed, None).estimate(), records))
    };
    let outcomes = cfg
        .seeds
        .iter()
        .map(|&seed| {
            sample_tetris_states(cfg, env, seed)
                .and_then(|set| run_seed(cfg, &env, seed, &set.states, &score))
                .unwrap_or_else(|e| failed_seed(cfg, seed, e.to_string()))
        })
        .collect();
    Ok(aggregate(cfg, "tetris", outcomes))
}

/// Explicit model and basis from a config, with uniform `ν`.
pub fn load_explicit(model: &Path, basis: &crate::config::BasisSpec) -> Result<(MdpModel<f64>, salp::Basis)> {
    let model = MdpModel::from_json_str(&read_file(model)?)?;
    let basis = basis.build(model.n_states())?;
    Ok((model, basis))
}

/// Samples from `π_{μ*,ν}` and scores policies by `−νᵀJ_μ` exactly.
pub fn run_explicit_pipeline(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    cfg.validate()?;
    let EnvSpec::ExplicitMdp { model, basis } = &cfg.env else {
        return Err(crate::error::CliError::config("run_explicit_pipeline needs an explicit MDP"));
    };
    let (model, basis) = load_explicit(model, basis)?;
    let nu = StateDistribution::uniform(model.n_states());
    let env = ExplicitEnv::new(&model, &basis, nu.clone())?;
    let (_, optimal) = optimal_value(&model)?;
    let score = |w: &[f64]| -> Result<(ScoreEstimate, Vec<GameRecord>)> {
        let j = policy_value(&greedy_policy(&basis.evaluate(w)?, &model)?, &model)?;
        Ok((ScoreEstimate { mean: -nu.iter().zip(j.iter()).map(|(p, v)| p * v).sum::<f64>(), stderr: 0.0 }, Vec::new()))
    };
    let outcomes = cfg
        .seeds
        .iter()
        .map(|&seed| {
            sample_occupancy_exact(&model, &optimal, &nu, cfg.sample_size, seed)
                .map_err(Into::into)
                .and_then(|set| run_seed(cfg, &env, seed, &set.states, &score))
                .unwrap_or_else(|e| failed_seed(cfg, seed, e.to_string()))
        })
        .collect();
    Ok(aggregate(cfg, "explicit-mdp", outcomes))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    match cfg.env {
        EnvSpec::Tetris { .. } => run_tetris_pipeline(cfg),
        EnvSpec::ExplicitMdp { .. } => run_explicit_pipeline(cfg),
    }
}

/// The curve rises to an interior peak: the argmax is neither the first nor
/// the last θ, and both ends score strictly below it.
pub fn rises_then_falls(curve: &[(f64, Option<f64>)]) -> bool {
    let scores: Option<Vec<f64>> = curve.iter().map(|c| c.1).collect();
    let Some(scores) = scores else { return false };
    if scores.len() < 3 {
        return false;
    }
    let (peak, &top) = scores
        .iter()
        .enumerate()
        .fold((0, &f64::NEG_INFINITY), |acc, (i, v)| if *v > *acc.1 { (i, v) } else { acc });
    peak > 0 && peak + 1 < scores.len() && scores[0] < top && scores[scores.len() - 1] < top
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_peak_detection() {
        let c = |v: &[f64]| v.iter().enumerate().map(|(i, &s)| (i as f64, Some(s))).collect::<Vec<_>>();
        assert!(rises_then_falls(&c(&[1.0, 5.0, 3.0])));
        assert!(rises_then_falls(&c(&[1.0, 5.0, 4.0, 6.0, 2.0])));
        assert!(!rises_then_falls(&c(&[1.0, 2.0, 3.0])));
        assert!(!rises_then_falls(&c(&[3.0, 2.0, 1.0])));
        assert!(!rises_then_falls(&c(&[1.0, 2.0])));
        let mut gap = c(&[1.0, 5.0, 3.0]);
        gap[2].1 = None;
        assert!(!rises_then_falls(&gap));
    }
}
