use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use salp::formulation::{solve_alp, solve_salp, solve_salp_penalty, SalpSolution};
use salp::lp::{LpOptions, SolverReport};
use salp::mdp::{exact_value_iteration, greedy_policy, occupancy, optimal_value, solve_exact_lp, StateDistribution};
use salp::sampling::sample_occupancy_exact;
use salp_cli::certify::{replay_instance, run_bounds_pipeline};
use salp_cli::config::{BasisSpec, BoundsConfig, CurveConfig, EnvSpec, ExperimentConfig};
use salp_cli::curve::run_sample_complexity_curve;
use salp_cli::error::{create_file, read_file, CliError, Result};
use salp_cli::eval::eval_policy;
use salp_cli::experiment::{load_explicit, run_experiment, sample_tetris_states};
use salp_cli::output::{render_table, write_csv, write_json};
use salp_tetris::{GreedyPolicy, TetrisEnv, BASELINE_WEIGHTS, DEFAULT_DISCOUNT};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "salp", version, about = "Smoothed approximate linear programming experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExactMethod {
    PolicyIteration,
    ValueIteration,
    Lp,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal cost-to-go and policy of an explicit MDP.
    SolveExact {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "policy-iteration")]
        method: ExactMethod,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// ALP weights with uniform state-relevance weights.
    SolveAlp {
        #[arg(long)]
        model: PathBuf,
        /// identity | constant | random:K:SEED | file:PATH
        #[arg(long)]
        basis: BasisSpec,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// SALP weights with the budget measured by the optimal policy's
    /// discounted visits from the uniform distribution.
    SolveSalp {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        basis: BasisSpec,
        #[arg(long, conflicts_with = "penalty", required_unless_present = "penalty")]
        theta: Option<f64>,
        /// Penalty form instead of a budget.
        #[arg(long)]
        penalty: bool,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Draws the configured state sample for one seed.
    SampleStates {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo lines-cleared score of a greedy Tetris policy.
    EvalPolicy {
        /// JSON array of 22 weights; the baseline policy when absent.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        games: u64,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, default_value_t = 1_000_000)]
        max_steps: u64,
        #[arg(long, default_value_t = DEFAULT_DISCOUNT)]
        discount: f64,
        /// Per-game CSV with piece digests.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Sample, θ line search and evaluation for every seed.
    TetrisExperiment {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use seeds 1..=N instead of the configured list.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certifies the bounds on seeded random MDPs.
    BoundsReport {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Rerun the checks of a replay file instead.
        #[arg(long, conflicts_with = "config")]
        replay: Option<PathBuf>,
    },
    /// Sampled-program gap against the full program as S grows.
    SampleCurve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn print_json<V: Serialize>(value: &V) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

#[derive(Serialize)]
struct WeightsOutput<'a> {
    weights: &'a [f64],
    slacks: Option<&'a [f64]>,
    budget_used: Option<f64>,
    report: &'a SolverReport<f64>,
}

fn salp_output<'a>(sol: &'a SalpSolution<f64>, report: &'a SolverReport<f64>) -> WeightsOutput<'a> {
    WeightsOutput { weights: &sol.weights, slacks: Some(&sol.slacks), budget_used: Some(sol.budget_used), report }
}

fn load_toml<C>(path: Option<&Path>, parse: fn(&str) -> Result<C>, default: C) -> Result<C> {
    match path {
        Some(p) => parse(&read_file(p)?),
        None => Ok(default),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SolveExact { model, method, tol } => {
            let (model, _) = load_explicit(&model, &BasisSpec::Constant)?;
            let (values, iterations) = match method {
                ExactMethod::PolicyIteration => (optimal_value(&model)?.0, None),
                ExactMethod::ValueIteration => {
                    let vi = exact_value_iteration(&model, tol)?;
                    (vi.values, Some(vi.iterations))
                }
                ExactMethod::Lp => (solve_exact_lp(&model, &StateDistribution::uniform(model.n_states()))?, None),
            };
            let policy = greedy_policy(&values, &model)?;
            #[derive(Serialize)]
            struct Exact<'a> {
                values: &'a [f64],
                policy: &'a [usize],
                iterations: Option<usize>,
            }
            print_json(&Exact { values: &values, policy: policy.actions(), iterations })
        }
        Command::SolveAlp { model, basis, tol } => {
            let (model, basis) = load_explicit(&model, &basis)?;
            let nu = StateDistribution::uniform(model.n_states());
            let (r, report) = solve_alp(&model, &basis, &nu, &LpOptions::with_tol(tol))?;
            print_json(&WeightsOutput { weights: &r, slacks: None, budget_used: None, report: &report })
        }
        Command::SolveSalp { model, basis, theta, penalty, tol } => {
            let (model, basis) = load_explicit(&model, &basis)?;
            let nu = StateDistribution::uniform(model.n_states());
            let (_, optimal) = optimal_value(&model)?;
            let pi = occupancy(&model, &optimal, &nu)?;
            let opts = LpOptions::with_tol(tol);
            let (sol, report) = match theta {
                Some(theta) if !penalty => solve_salp(&model, &basis, &nu, &pi, theta, &opts)?,
                _ => solve_salp_penalty(&model, &basis, &nu, &pi, &opts)?,
            };
            print_json(&salp_output(&sol, &report))
        }
        Command::SampleStates { config, seed, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let file = std::io::BufWriter::new(create_file(&out)?);
            match &cfg.env {
                EnvSpec::Tetris { discount } => {
                    sample_tetris_states(&cfg, TetrisEnv::new(*discount)?, seed)?.write_to(file)?
                }
                EnvSpec::ExplicitMdp { model, basis } => {
                    let (model, _) = load_explicit(model, basis)?;
                    let nu = StateDistribution::uniform(model.n_states());
                    let (_, optimal) = optimal_value(&model)?;
                    sample_occupancy_exact(&model, &optimal, &nu, cfg.sample_size, seed)?.write_to(file)?
                }
            }
            Ok(())
        }
        Command::EvalPolicy { weights, games, seed, max_steps, discount, scores } => {
            let env = TetrisEnv::new(discount)?;
            let (id, w) = match &weights {
                Some(path) => {
                    (path.display().to_string(), serde_json::from_str::<Vec<f64>>(&read_file(path)?)?)
                }
                None => ("baseline".to_string(), BASELINE_WEIGHTS.to_vec()),
            };
            let policy = GreedyPolicy::new(w, env)?;
            let (result, _) = eval_policy(&policy, &id, games, seed, max_steps, scores.as_deref())?;
            print_json(&result)
        }
        Command::TetrisExperiment { config, seeds, out } => {
            let mut cfg = load_toml(config.as_deref(), ExperimentConfig::from_toml_str, ExperimentConfig::desk_tetris())?;
            if let Some(n) = seeds {
                cfg.seeds = (1..=n).collect();
            }
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            let results = run_experiment(&cfg)?;
            results.write(&cfg.output_dir)?;
            let rows: Vec<Vec<String>> = results
                .table
                .iter()
                .map(|r| {
                    let fmt = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.2}"));
                    vec![format!("{}", r.theta), fmt(r.mean_score), fmt(r.stderr), r.seeds_ok.to_string()]
                })
                .collect();
            print!("{}", render_table(&["theta", "mean score", "stderr", "seeds"], &rows));
            if let (Some(t), Some(m)) = (results.summary.best_theta, results.summary.best_mean) {
                println!("best theta {t} with mean {m:.2}");
            }
            Ok(())
        }
        Command::BoundsReport { config, out, replay } => {
            if let Some(path) = replay {
                let reports = replay_instance(&path)?;
                print_json(&reports)?;
                let failed = reports.iter().filter(|r| !r.pass).count();
                return if failed > 0 { Err(CliError::BoundFailure { failed, replay: path }) } else { Ok(()) };
            }
            let mut cfg = load_toml(config.as_deref(), BoundsConfig::from_toml_str, BoundsConfig::default())?;
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            let outcome = run_bounds_pipeline(&cfg, Some(&cfg.output_dir))?;
            write_json(&cfg.output_dir.join("bounds.json"), &outcome.flat())?;
            print!("{}", outcome.table());
            match outcome.replays.first() {
                Some(path) => Err(CliError::BoundFailure { failed: outcome.failures(), replay: path.clone() }),
                None => Ok(()),
            }
        }
        Command::SampleCurve { config, out } => {
            let mut cfg = load_toml(config.as_deref(), CurveConfig::from_toml_str, CurveConfig::default())?;
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            let results = run_sample_complexity_curve(&cfg)?;
            write_csv(&cfg.output_dir.join("curve.csv"), &results.rows)?;
            write_json(&cfg.output_dir.join("curve.json"), &results.summary)?;
            let rows: Vec<Vec<String>> = results
                .summary
                .points
                .iter()
                .map(|p| {
                    let fmt = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.3e}"));
                    vec![p.sample_size.to_string(), fmt(p.median_gap), fmt(p.median_value_error), p.runs_ok.to_string()]
                })
                .collect();
            print!("{}", render_table(&["S", "median gap", "median error", "runs"], &rows));
            println!("exhaustive gap {:.3e}", results.summary.exhaustive_gap);
            Ok(())
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("SALP_THREADS") else { return Ok(()) };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::config(format!("SALP_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::config(e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Usage errors exit with 1; 2 is reserved for failed bound checks.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    match configure_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
