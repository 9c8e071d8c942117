//! Bound certificates over seeded random instances.

use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use salp::basis::BasisMatrix;
use salp::bounds::{check_theorem3, ell, BoundReport, BoundsContext, InputDigest};
use salp::formulation::{solve_alp, solve_salp, solve_salp_penalty};
use salp::linalg::Matrix;
use salp::lp::LpOptions;
use salp::mdp::{random_mdp, MdpModel, StateDistribution};
use salp::sampling::episode_rng;
use serde::{Deserialize, Serialize};

use crate::config::BoundsConfig;
use crate::error::{read_file, CliError, Result};
use crate::output::{render_table, write_json};

/// Everything needed to rebuild one instance and rerun its checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayInstance {
    pub instance: usize,
    pub model: serde_json::Value,
    pub basis: Vec<Vec<f64>>,
    pub theta_grid: Vec<f64>,
    /// Names of the failed checks when the file was written.
    pub failed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceBound {
    pub instance: usize,
    #[serde(flatten)]
    pub report: BoundReport,
}

#[derive(Debug, Clone)]
pub struct InstanceOutcome {
    pub instance: usize,
    pub discount: f64,
    pub identity_basis: bool,
    pub reports: Vec<BoundReport>,
    pub model: MdpModel<f64>,
    pub basis: BasisMatrix<f64>,
}

impl InstanceOutcome {
    pub fn failed(&self) -> Vec<&BoundReport> {
        self.reports.iter().filter(|r| !r.pass).collect()
    }

    pub fn replay(&self, theta_grid: &[f64]) -> Result<ReplayInstance> {
        let m = self.basis.matrix();
        Ok(ReplayInstance {
            instance: self.instance,
            model: serde_json::from_str(&self.model.to_json_string())?,
            basis: (0..m.rows()).map(|i| m.row(i).to_vec()).collect(),
            theta_grid: theta_grid.to_vec(),
            failed: self.failed().iter().map(|r| r.name.clone()).collect(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct BoundsOutcome {
    pub instances: Vec<InstanceOutcome>,
    /// Replay files of failing instances, when written.
    pub replays: Vec<PathBuf>,
}

impl BoundsOutcome {
    pub fn flat(&self) -> Vec<InstanceBound> {
        self.instances
            .iter()
            .flat_map(|o| o.reports.iter().map(|r| InstanceBound { instance: o.instance, report: r.clone() }))
            .collect()
    }

    pub fn failures(&self) -> usize {
        self.instances.iter().map(|o| o.failed().len()).sum()
    }

    /// One line per check family: instances, passes and the smallest slack.
    pub fn table(&self) -> String {
        let mut families: Vec<(String, usize, usize, f64)> = Vec::new();
        for o in &self.instances {
            for r in &o.reports {
                let family = r.name.split('(').next().unwrap_or(&r.name).to_string();
                match families.iter_mut().find(|f| f.0 == family) {
                    Some(f) => {
                        f.1 += 1;
                        f.2 += r.pass as usize;
                        f.3 = f.3.min(r.slack);
                    }
                    None => families.push((family, 1, r.pass as usize, r.slack)),
                }
            }
        }
        let rows: Vec<Vec<String>> = families
            .iter()
            .map(|(name, n, ok, slack)| vec![name.clone(), n.to_string(), ok.to_string(), format!("{slack:.3e}")])
            .collect();
        render_table(&["check", "runs", "passed", "min slack"], &rows)
    }
}

fn exact_opts() -> LpOptions<f64> {
    LpOptions::with_tol(1e-10)
}

/// Instance `i`: its own random stream, discounts cycling through the
/// config, the identity basis for the last instance when requested.
pub fn generate_instance(cfg: &BoundsConfig, i: usize) -> Result<(MdpModel<f64>, BasisMatrix<f64>, bool)> {
    let mut rng: ChaCha8Rng = episode_rng(cfg.seed, i as u64);
    let alpha = cfg.discounts[i % cfg.discounts.len()];
    let model = random_mdp(cfg.n_states, cfg.n_actions, alpha, &mut rng)?;
    let identity = cfg.identity_instance && i + 1 == cfg.instances;
    let basis =
        if identity { BasisMatrix::identity(cfg.n_states) } else { BasisMatrix::random(cfg.n_states, cfg.k, &mut rng)? };
    Ok((model, basis, identity))
}

fn max_violation(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x - y).fold(f64::NEG_INFINITY, f64::max)
}

fn sup_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `ℓ(r, ·)` on the grid is nonincreasing, convex and below
/// `(1+α)/(1−α)‖J* − Φr‖_∞`.
fn lemma1_reports(ctx: &BoundsContext<'_, f64>, label: &str, r: &[f64], grid: &[f64], digest: &str) -> Result<Vec<BoundReport>> {
    let alpha = ctx.model.discount();
    let vals: Vec<f64> =
        grid.iter().map(|&t| ell(ctx.model, ctx.basis, r, t, &ctx.pi).map(|v| v.0)).collect::<salp::Result<_>>()?;
    let increase = vals.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let convexity = grid
        .windows(3)
        .zip(vals.windows(3))
        .map(|(t, v)| {
            let lambda = (t[2] - t[1]) / (t[2] - t[0]);
            v[1] - (lambda * v[0] + (1.0 - lambda) * v[2])
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let err = sup_norm_diff(&ctx.basis.evaluate(r)?, &ctx.jstar);
    let cap = (1.0 + alpha) / (1.0 - alpha) * err;
    let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = vec![BoundReport::with_default_tolerance(
        format!("lemma1_bounded(r={label})"),
        top,
        cap,
        digest.to_string(),
    )];
    if grid.len() >= 2 {
        out.push(BoundReport::with_default_tolerance(format!("lemma1_decreasing(r={label})"), increase, 0.0, digest.to_string()));
    }
    if grid.len() >= 3 {
        out.push(BoundReport::with_default_tolerance(format!("lemma1_convex(r={label})"), convexity, 0.0, digest.to_string()));
    }
    Ok(out)
}

/// Every certificate for one instance, with `ν` uniform.
pub fn certify_instance(model: &MdpModel<f64>, basis: &BasisMatrix<f64>, grid: &[f64]) -> Result<Vec<BoundReport>> {
    let n = model.n_states();
    let nu = StateDistribution::uniform(n);
    let opts = exact_opts();
    let ctx = BoundsContext::new(model, basis, &nu)?;
    let digest = InputDigest::new("instance").model(model).scalars(basis.matrix().as_slice()).finish();
    let mut reports = Vec::new();

    let (r_alp, alp) = solve_alp(model, basis, &nu, &opts)?;
    let phi_alp = basis.evaluate(&r_alp)?;
    reports.push(BoundReport::new("alp_lower_bound", max_violation(&phi_alp, &ctx.jstar), 0.0, 1e-7, digest.clone()));
    let (zero, _) = solve_salp(model, basis, &nu, &ctx.pi, 0.0, &opts)?;
    reports.push(BoundReport::new(
        "theta0_equivalence",
        (zero.objective - alp.objective).abs(),
        0.0,
        1e-7,
        digest.clone(),
    ));
    reports.push(ctx.lemma2(&phi_alp, &vec![0.0; n])?);

    for &theta in grid {
        reports.push(ctx.theorem1(theta)?);
        let (sol, _) = solve_salp(model, basis, &nu, &ctx.pi, theta, &opts)?;
        let mut lemma = ctx.lemma2(&basis.evaluate(&sol.weights)?, &sol.slacks)?;
        lemma.name = format!("lemma2(theta={theta})");
        reports.push(lemma);
    }

    reports.extend(lemma1_reports(&ctx, "r*", &ctx.r_star, grid, &digest)?);
    reports.extend(lemma1_reports(&ctx, "alp", &r_alp, grid, &digest)?);
    let curve = ctx.u_salp_curve(grid)?;
    reports.push(BoundReport::new(
        "lemma1_derivative",
        (curve.ell_derivative - curve.ell_derivative_fd).abs(),
        1e-5 * curve.ell_derivative.abs(),
        0.0,
        digest.clone(),
    ));

    reports.push(ctx.theorem2(&ctx.default_psi_candidates()?)?);
    let (penalty, _) = solve_salp_penalty(model, basis, &nu, &ctx.pi, &opts)?;
    let phi_penalty = basis.evaluate(&penalty.weights)?;
    let mut lemma = ctx.lemma2(&phi_penalty, &penalty.slacks)?;
    lemma.name = "lemma2(penalty)".into();
    reports.push(lemma);
    let mut t3 = check_theorem3(model, &phi_penalty, &nu)?;
    t3.name = "theorem3(salp)".into();
    reports.push(t3);
    let mut t3 = check_theorem3(model, &phi_alp, &nu)?;
    t3.name = "theorem3(alp)".into();
    reports.push(t3);
    Ok(reports)
}

/// Certifies every configured instance in parallel. With `replay_dir`,
/// failing instances are written there as `replay_<i>.json`.
pub fn run_bounds_pipeline(cfg: &BoundsConfig, replay_dir: Option<&Path>) -> Result<BoundsOutcome> {
    cfg.validate()?;
    let instances: Vec<InstanceOutcome> = (0..cfg.instances)
        .into_par_iter()
        .map(|i| {
            let (model, basis, identity) = generate_instance(cfg, i)?;
            let reports = certify_instance(&model, &basis, &cfg.theta_grid)?;
            Ok(InstanceOutcome { instance: i, discount: model.discount(), identity_basis: identity, reports, model, basis })
        })
        .collect::<Result<_>>()?;
    let mut replays = Vec::new();
    if let Some(dir) = replay_dir {
        for o in instances.iter().filter(|o| !o.failed().is_empty()) {
            let path = dir.join(format!("replay_{}.json", o.instance));
            write_json(&path, &o.replay(&cfg.theta_grid)?)?;
            replays.push(path);
        }
    }
    Ok(BoundsOutcome { instances, replays })
}

/// Reruns every check of a replay file.
pub fn replay_instance(path: &Path) -> Result<Vec<BoundReport>> {
    let replay: ReplayInstance = serde_json::from_str(&read_file(path)?)?;
    let model = MdpModel::from_json_str(&replay.model.to_string())?;
    if replay.basis.len() != model.n_states() {
        return Err(CliError::config("replay basis and model disagree on the number of states"));
    }
    let basis = BasisMatrix::new(Matrix::from_rows(&replay.basis)?)?;
    certify_instance(&model, &basis, &replay.theta_grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BoundsConfig {
        BoundsConfig { instances: 3, n_states: 8, n_actions: 2, k: 3, ..BoundsConfig::default() }
    }

    #[test]
    fn instances_are_seeded() {
        let cfg = small();
        let (a, ba, _) = generate_instance(&cfg, 1).unwrap();
        let (b, bb, _) = generate_instance(&cfg, 1).unwrap();
        assert_eq!(a.to_json_string(), b.to_json_string());
        assert_eq!(ba.matrix().as_slice(), bb.matrix().as_slice());
        assert_eq!(a.discount(), 0.95);
        assert!(generate_instance(&cfg, 2).unwrap().2);
        assert!(!generate_instance(&cfg, 1).unwrap().2);
    }

    #[test]
    fn small_sweep_passes() {
        let out = run_bounds_pipeline(&small(), None).unwrap();
        assert_eq!(out.failures(), 0, "{}", out.table());
        assert!(out.flat().iter().any(|b| b.report.name == "theorem2"));
    }
}
