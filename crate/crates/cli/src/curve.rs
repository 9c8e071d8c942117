//! Sampled penalty-form SALP against the full program as `S` grows.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use salp::basis::BasisMatrix;
use salp::bounds::weighted_norm_1_nu;
use salp::env::ExplicitEnv;
use salp::formulation::{build_sampled_salp, solve_salp_penalty, SampledMode, SalpSolution};
use salp::lp::{solve_salp_structured, LpOptions};
use salp::mdp::{occupancy, optimal_value, random_mdp, MdpModel, StateDistribution};
use salp::sampling::{estimate_b, sample_occupancy_exact, sample_size_bound};
use serde::{Deserialize, Serialize};

use crate::config::CurveConfig;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub sample_size: usize,
    pub seed: u64,
    pub distinct_states: usize,
    pub objective: Option<f64>,
    /// `|sampled objective − full objective|`.
    pub objective_gap: Option<f64>,
    /// `‖J* − Φr̂‖_{1,ν}`.
    pub value_error: Option<f64>,
    pub iterations: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub sample_size: usize,
    pub median_gap: Option<f64>,
    pub median_value_error: Option<f64>,
    pub runs_ok: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub n_states: usize,
    pub k: usize,
    pub discount: f64,
    pub full_objective: f64,
    pub full_value_error: f64,
    /// Half-width of the weight box imposed on every program.
    pub box_radius: f64,
    pub b: f64,
    pub epsilon: f64,
    pub delta: f64,
    /// Sample size from the formula, `None` when `ε > B`.
    pub formula_samples: Option<u64>,
    pub points: Vec<CurvePoint>,
    /// Objective gap of the exhaustive sample under uniform `ν` and `π`.
    pub exhaustive_gap: f64,
}

#[derive(Debug, Clone)]
pub struct CurveResults {
    pub rows: Vec<CurveRow>,
    pub summary: CurveSummary,
}

fn opts() -> LpOptions<f64> {
    LpOptions::with_tol(1e-10)
}

pub fn curve_instance(cfg: &CurveConfig) -> Result<(MdpModel<f64>, BasisMatrix<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.model_seed);
    let model = random_mdp(cfg.n_states, cfg.n_actions, cfg.discount, &mut rng)?;
    let basis = BasisMatrix::random(cfg.n_states, cfg.k, &mut rng)?;
    Ok((model, basis))
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Sampled program over `states` with objective `Φᵀν` inside the box.
fn solve_sampled(
    env: &ExplicitEnv<'_, f64>,
    basis: &BasisMatrix<f64>,
    nu: &StateDistribution<f64>,
    states: &[usize],
    radius: f64,
) -> Result<(SalpSolution<f64>, usize, usize)> {
    let c = basis.matrix().tr_mul_vec(nu);
    let sampled = build_sampled_salp(env, states, SampledMode::Penalty, Some(c))?;
    let k = basis.k();
    let lp = sampled.lp.with_bounds(vec![-radius; k], vec![radius; k])?;
    let (sol, report) = solve_salp_structured(&lp, &opts())?;
    Ok((sol, sampled.distinct_states, report.iterations))
}

/// Objective gap between the exhaustive sample and the full penalty SALP,
/// both with uniform `ν` and `π`.
pub fn exhaustive_gap(model: &MdpModel<f64>, basis: &BasisMatrix<f64>, radius: f64) -> Result<f64> {
    let n = model.n_states();
    let uniform = StateDistribution::uniform(n);
    let (full, _) = solve_salp_penalty(model, basis, &uniform, &uniform, &opts())?;
    let env = ExplicitEnv::new(model, basis, uniform.clone())?;
    let states: Vec<usize> = (0..n).collect();
    let (sol, _, _) = solve_sampled(&env, basis, &uniform, &states, radius)?;
    Ok((sol.objective - full.objective).abs())
}

pub fn run_sample_complexity_curve(cfg: &CurveConfig) -> Result<CurveResults> {
    cfg.validate()?;
    let (model, basis) = curve_instance(cfg)?;
    let n = model.n_states();
    let nu = StateDistribution::uniform(n);
    let (jstar, optimal) = optimal_value(&model)?;
    let pi = occupancy(&model, &optimal, &nu)?;
    let (full, _) = solve_salp_penalty(&model, &basis, &nu, &pi, &opts())?;
    let value_error = |r: &[f64]| -> Result<f64> {
        let phi = basis.evaluate(r)?;
        let d: Vec<f64> = jstar.iter().zip(&phi).map(|(a, b)| a - b).collect();
        Ok(weighted_norm_1_nu(&d, &nu)?)
    };
    let full_value_error = value_error(&full.weights)?;
    let radius = 2.0 * full.weights.iter().fold(0.0f64, |m, v| m.max(v.abs())) + 1.0;
    let env = ExplicitEnv::new(&model, &basis, nu.clone())?;

    let jobs: Vec<(usize, u64)> = cfg.sizes.iter().flat_map(|&s| cfg.seeds.iter().map(move |&seed| (s, seed))).collect();
    let rows: Vec<CurveRow> = jobs
        .par_iter()
        .map(|&(s, seed)| {
            let run = || -> Result<CurveRow> {
                let set = sample_occupancy_exact(&model, &optimal, &nu, s, seed)?;
                let (sol, distinct, iterations) = solve_sampled(&env, &basis, &nu, &set.states, radius)?;
                Ok(CurveRow {
                    sample_size: s,
                    seed,
                    distinct_states: distinct,
                    objective: Some(sol.objective),
                    objective_gap: Some((sol.objective - full.objective).abs()),
                    value_error: Some(value_error(&sol.weights)?),
                    iterations,
                    error: None,
                })
            };
            run().unwrap_or_else(|e| CurveRow {
                sample_size: s,
                seed,
                distinct_states: 0,
                objective: None,
                objective_gap: None,
                value_error: None,
                iterations: 0,
                error: Some(e.to_string()),
            })
        })
        .collect();

    let points = cfg
        .sizes
        .iter()
        .map(|&s| {
            let ok: Vec<&CurveRow> = rows.iter().filter(|r| r.sample_size == s && r.error.is_none()).collect();
            CurvePoint {
                sample_size: s,
                median_gap: median(ok.iter().filter_map(|r| r.objective_gap).collect()),
                median_value_error: median(ok.iter().filter_map(|r| r.value_error).collect()),
                runs_ok: ok.len(),
            }
        })
        .collect();

    let k = basis.k();
    let all_states: Vec<usize> = (0..n).collect();
    let b = estimate_b(&vec![-radius; k], &vec![radius; k], &all_states, &env)?;
    let formula_samples = (cfg.epsilon <= b).then(|| sample_size_bound(b, k, cfg.epsilon, cfg.delta)).transpose()?;
    let summary = CurveSummary {
        n_states: n,
        k,
        discount: model.discount(),
        full_objective: full.objective,
        full_value_error,
        box_radius: radius,
        b,
        epsilon: cfg.epsilon,
        delta: cfg.delta,
        formula_samples,
        points,
        exhaustive_gap: exhaustive_gap(&model, &basis, radius)?,
    };
    Ok(CurveResults { rows, summary })
}

/// Medians are strictly decreasing in `S`.
pub fn gaps_decrease(points: &[CurvePoint]) -> bool {
    let gaps: Option<Vec<f64>> = points.iter().map(|p| p.median_gap).collect();
    gaps.is_some_and(|g| g.windows(2).all(|w| w[1] < w[0]))
}
