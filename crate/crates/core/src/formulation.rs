//! Assembly of the exact-model ALP and SALP variants, the sampled SALP over
//! a set of visited states, and the budget line search.

use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;

use crate::basis::BasisMatrix;
pub use crate::basis::WeightVector;
use crate::env::Environment;
use crate::error::{Result, SalpError};
use crate::linalg::Matrix;
use crate::lp::{
    solve_dense_lp, solve_salp_structured, warm_start_resolve, DenseLp, IpmIterate, LpOptions, SlackMode,
    SolverReport, StructuredSalpLp,
};
use crate::mdp::{MdpModel, StateDistribution};
use crate::scalar::{dot, Scalar};

/// Optimal point of a smoothed ALP.
#[derive(Debug, Clone)]
pub struct SalpSolution<T> {
    pub weights: WeightVector<T>,
    /// One slack per constrained state.
    pub slacks: Vec<T>,
    pub objective: T,
    /// Slack mass under the violation measure.
    pub budget_used: T,
    /// Budget the problem was solved at; `None` for the penalty form.
    pub theta: Option<T>,
    pub(crate) warm: Option<IpmIterate<T>>,
    pub(crate) warm_mid: Option<IpmIterate<T>>,
}

/// `2 / (1 − α)`, the slack price of the penalty form.
pub fn penalty_coefficient<T: Scalar>(discount: T) -> T {
    T::lit(2.0) / (T::one() - discount)
}

fn check_dims<T: Scalar>(model: &MdpModel<T>, basis: &BasisMatrix<T>, dists: &[&StateDistribution<T>]) -> Result<()> {
    if basis.n_states() != model.n_states() {
        return Err(SalpError::Dimension(format!(
            "basis covers {} states, model has {}",
            basis.n_states(),
            model.n_states()
        )));
    }
    if dists.iter().any(|d| d.len() != model.n_states()) {
        return Err(SalpError::Dimension("distribution length differs from the number of states".into()));
    }
    Ok(())
}

/// Rows `Φ(x) − α Σ_y P_a(x, y) Φ(y)` in `(x, a)` order, and `g(x, a)`.
pub fn bellman_rows<T: Scalar>(model: &MdpModel<T>, basis: &BasisMatrix<T>) -> (Matrix<T>, Vec<T>) {
    let (n, na, k) = (model.n_states(), model.n_actions(), basis.k());
    let alpha = model.discount();
    let pphi: Vec<Matrix<T>> = (0..na).map(|a| model.transition(a).mul(basis.matrix())).collect();
    let mut rows = Matrix::zeros(n * na, k);
    let mut rhs = Vec::with_capacity(n * na);
    for x in 0..n {
        for (a, pp) in pphi.iter().enumerate() {
            let row = rows.row_mut(x * na + a);
            for ((o, &f), &e) in row.iter_mut().zip(basis.features(x)).zip(pp.row(x)) {
                *o = f - alpha * e;
            }
            rhs.push(model.cost(x, a));
        }
    }
    (rows, rhs)
}

/// `maximize νᵀΦr  s.t.  Φr ≤ TΦr`, one row per state-action pair.
pub fn build_alp<T: Scalar>(model: &MdpModel<T>, basis: &BasisMatrix<T>, nu: &StateDistribution<T>) -> Result<DenseLp<T>> {
    check_dims(model, basis, &[nu])?;
    basis.require_constant()?;
    let (rows, rhs) = bellman_rows(model, basis);
    DenseLp::new(basis.project(nu)?, rows, rhs)
}

fn salp_lp<T: Scalar>(
    model: &MdpModel<T>,
    basis: &BasisMatrix<T>,
    nu: &StateDistribution<T>,
    pi: &StateDistribution<T>,
    mode: SlackMode<T>,
) -> Result<DenseLp<T>> {
    check_dims(model, basis, &[nu, pi])?;
    basis.require_constant()?;
    let (n, na, k) = (model.n_states(), model.n_actions(), basis.k());
    let (rows, mut rhs) = bellman_rows(model, basis);
    let budget = matches!(mode, SlackMode::Budget { theta } if theta.is_finite());
    let m = n * na + usize::from(budget);
    let mut a = Matrix::zeros(m, k + n);
    for i in 0..n * na {
        a.row_mut(i)[..k].copy_from_slice(rows.row(i));
        a[(i, k + i / na)] = -T::one();
    }
    let mut c = basis.project(nu)?;
    match mode {
        SlackMode::Budget { theta } => {
            if !(theta >= T::zero()) {
                return Err(SalpError::InvalidArgument(format!("budget {theta} must be nonnegative")));
            }
            if budget {
                a.row_mut(n * na)[k..].copy_from_slice(pi);
                rhs.push(theta);
            }
            c.extend(std::iter::repeat(T::zero()).take(n));
        }
        SlackMode::Penalty { coefficient } => c.extend(pi.iter().map(|&p| -coefficient * p)),
    }
    DenseLp::new(c, a, rhs)?.with_lower_bounds((0..k + n).map(|j| (j >= k).then_some(T::zero())).collect())
}

/// `maximize νᵀΦr  s.t.  Φr ≤ TΦr + s,  πᵀs ≤ θ,  s ≥ 0` over `(r, s)`.
/// An infinite `θ` drops the budget row.
pub fn build_salp<T: Scalar>(
    model: &MdpModel<T>,
    basis: &BasisMatrix<T>,
    nu: &StateDistribution<T>,
    pi: &StateDistribution<T>,
    theta: T,
) -> Result<DenseLp<T>> {
    salp_lp(model, basis, nu, pi, SlackMode::Budget { theta })
}

/// `maximize νᵀΦr − 2/(1−α) πᵀs  s.t.  Φr ≤ TΦr + s,  s ≥ 0`.
pub fn build_salp_penalty<T: Scalar>(
    model: &MdpModel<T>,
    basis: &BasisMatrix<T>,
    nu: &StateDistribution<T>,
    pi: &StateDistribution<T>,
) -> Result<DenseLp<T>> {
    salp_lp(model, basis, nu, pi, SlackMode::Penalty { coefficient: penalty_coefficient(model.discount()) })
}

pub fn solve_alp<T: Scalar>(
    model: &MdpModel<T>,
    basis: &BasisMatrix<T>,
    nu: &StateDistribution<T>,
    opts: &LpOptions<T>,
) -> Result<(WeightVector<T>, SolverReport<T>)> {
    let (x, report) = solve_dense_lp(&build_alp(model, basis, nu)?, opts)?;
    Ok((WeightVector(x), report))
}

fn dense_solution<T: Scalar>(x: Vec<T>, k: usize, pi: &[T], theta: Option<T>, objective: T) -> SalpSolution<T> {
    let slacks: Vec<T> = x[k..].iter().map(|&s| s.max(T::zero())).collect();
    SalpSolution {
        budget_used: dot(pi, &slacks),
        weights: WeightVector(x[..k].to_vec()),
        slacks,
        objective,
        theta,
        warm: None,
        warm_mid: None,
    }
}

pub fn solve_salp<T: Scalar>(
    model: &MdpModel<T>,
    basis: &BasisMatrix<T>,
    nu: &StateDistribution<T>,
    pi: &StateDistribution<T>,
    theta: T,
    opts: &LpOptions<T>,
) -> Result<(SalpSolution<T>, SolverReport<T>)> {
    let (x, report) = solve_dense_lp(&build_salp(model, basis, nu, pi, theta)?, opts)?;
    Ok((dense_solution(x, basis.k(), pi, Some(theta), report.objective), report))
}

pub fn solve_salp_penalty<T: Scalar>(
    model: &MdpModel<T>,
    basis: &BasisMatrix<T>,
    nu: &StateDistribution<T>,
    pi: &StateDistribution<T>,
    opts: &LpOptions<T>,
) -> Result<(SalpSolution<T>, SolverReport<T>)> {
    let (x, report) = solve_dense_lp(&build_salp_penalty(model, basis, nu, pi)?, opts)?;
    Ok((dense_solution(x, basis.k(), pi, None, report.objective), report))
}

/// Slack treatment of the sampled program.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampledMode<T> {
    /// `(1/S) Σ s(x) ≤ θ`.
    Budget(T),
    /// Objective term `−2/((1−α)S) Σ s(x)`.
    Penalty,
}

/// Sampled SALP together with how the sample was folded into it.
#[derive(Debug, Clone)]
pub struct SampledSalp<T> {
    pub lp: StructuredSalpLp<T>,
    pub sample_size: usize,
    pub distinct_states: usize,
    /// Samples without actions; they carry no constraints or slacks.
    pub terminal_samples: usize,
}

/// Builds the sampled SALP over `states`. Duplicate states share a slack
/// and a set of constraint rows; their multiplicity enters through the
/// empirical slack measure and the objective. The objective defaults to the
/// empirical mean of `φ(x)` over the sample (terminal samples contribute
/// their fixed value of zero); `objective` overrides it.
pub fn build_sampled_salp<T: Scalar, E: Environment<T>>(
    env: &E,
    states: &[E::State],
    mode: SampledMode<T>,
    objective: Option<Vec<T>>,
) -> Result<SampledSalp<T>> {
    if states.is_empty() {
        return Err(SalpError::InvalidArgument("sample must contain at least one state".into()));
    }
    let k = env.num_features();
    let alpha = env.discount();
    let mut index: HashMap<&E::State, usize> = HashMap::new();
    let mut distinct: Vec<&E::State> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for x in states {
        let j = *index.entry(x).or_insert_with(|| {
            distinct.push(x);
            counts.push(0);
            distinct.len() - 1
        });
        counts[j] += 1;
    }
    let per_state: Vec<(Vec<T>, Vec<crate::env::ActionRow<T>>)> =
        distinct.par_iter().map(|x| (env.features(x), env.action_rows(x))).collect();

    let inv_s = T::one() / T::from_usize_lossy(states.len());
    let mut c = vec![T::zero(); k];
    let mut data = Vec::new();
    let mut slack_of_row = Vec::new();
    let mut rhs = Vec::new();
    let mut measure = Vec::new();
    let mut terminal_samples = 0;
    for ((phi, rows), &count) in per_state.iter().zip(&counts) {
        if phi.len() != k {
            return Err(SalpError::Dimension(format!("feature vector has {} entries, K = {k}", phi.len())));
        }
        if rows.is_empty() {
            terminal_samples += count;
            continue;
        }
        let weight = T::from_usize_lossy(count) * inv_s;
        for (ci, &f) in c.iter_mut().zip(phi) {
            *ci += weight * f;
        }
        let j = measure.len();
        measure.push(weight);
        for row in rows {
            data.extend(phi.iter().zip(&row.next_features).map(|(&f, &e)| f - alpha * e));
            slack_of_row.push(j);
            rhs.push(row.cost);
        }
    }
    if terminal_samples > 0 {
        log::warn!("{terminal_samples} terminal samples carry no constraints");
    }
    if measure.is_empty() {
        return Err(SalpError::InvalidArgument("every sampled state is terminal".into()));
    }
    let c = match objective {
        Some(c) if c.len() != k => {
            return Err(SalpError::Dimension(format!("objective has {} entries, K = {k}", c.len())))
        }
        Some(c) => c,
        None => c,
    };
    let slack_mode = match mode {
        SampledMode::Budget(theta) => SlackMode::Budget { theta },
        SampledMode::Penalty => SlackMode::Penalty { coefficient: penalty_coefficient(alpha) },
    };
    let a11 = Matrix::from_row_major(rhs.len(), k, data)?;
    let lp = StructuredSalpLp::new(a11, slack_of_row, rhs, c, measure, slack_mode)?;
    Ok(SampledSalp { lp, sample_size: states.len(), distinct_states: distinct.len(), terminal_samples })
}

/// `{0} ∪ {0.00256 · 2^k : k = 0..8}`.
pub fn default_theta_schedule<T: Scalar>() -> Vec<T> {
    std::iter::once(T::zero()).chain((0..9).map(|k| T::lit(0.00256 * f64::powi(2.0, k)))).collect()
}

pub fn validate_schedule<T: Scalar>(schedule: &[T]) -> Result<()> {
    match schedule.first() {
        Some(&t) if t == T::zero() => {}
        _ => return Err(SalpError::InvalidArgument("θ schedule must start at 0".into())),
    }
    if schedule.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(SalpError::InvalidArgument("θ schedule must be strictly increasing".into()));
    }
    Ok(())
}

/// Monte Carlo estimate of a policy's score (higher is better).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreEstimate {
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct LineSearchRow<T> {
    pub theta: T,
    pub objective: Option<T>,
    pub budget_used: Option<T>,
    pub score: Option<ScoreEstimate>,
    pub solve_time_s: f64,
    pub iterations: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct LineSearchResult<T> {
    pub rows: Vec<LineSearchRow<T>>,
    pub solutions: Vec<Option<SalpSolution<T>>>,
    /// Index of the winning row.
    pub best: Option<usize>,
}

impl<T: Scalar> LineSearchResult<T> {
    pub fn best_theta(&self) -> Option<T> {
        self.best.map(|i| self.rows[i].theta)
    }

    pub fn best_solution(&self) -> Option<&SalpSolution<T>> {
        self.best.and_then(|i| self.solutions[i].as_ref())
    }
}

/// Solves `lp` in budget mode for every θ of `schedule`, warm-starting each
/// solve from the previous one, then scores the greedy policies with
/// `evaluate` (in parallel). Failures are recorded per θ. The winner has the
/// highest mean score; ties go to the smaller θ.
pub fn theta_line_search<T, F>(
    lp: &StructuredSalpLp<T>,
    schedule: &[T],
    opts: &LpOptions<T>,
    evaluate: F,
) -> Result<LineSearchResult<T>>
where
    T: Scalar,
    F: Fn(&WeightVector<T>) -> Result<ScoreEstimate> + Sync,
{
    validate_schedule(schedule)?;
    let mut rows = Vec::with_capacity(schedule.len());
    let mut solutions: Vec<Option<SalpSolution<T>>> = Vec::with_capacity(schedule.len());
    let mut previous: Option<SalpSolution<T>> = None;
    for &theta in schedule {
        let start = Instant::now();
        let solved = match &previous {
            Some(prev) => warm_start_resolve(lp, prev, theta, opts),
            None => lp.with_mode(SlackMode::Budget { theta }).and_then(|p| solve_salp_structured(&p, opts)),
        };
        let elapsed = start.elapsed().as_secs_f64();
        match solved {
            Ok((sol, report)) => {
                rows.push(LineSearchRow {
                    theta,
                    objective: Some(sol.objective),
                    budget_used: Some(sol.budget_used),
                    score: None,
                    solve_time_s: elapsed,
                    iterations: report.iterations,
                    error: None,
                });
                previous = Some(sol.clone());
                solutions.push(Some(sol));
            }
            Err(e) => {
                log::warn!("solve at θ = {theta} failed: {e}");
                rows.push(LineSearchRow {
                    theta,
                    objective: None,
                    budget_used: None,
                    score: None,
                    solve_time_s: elapsed,
                    iterations: 0,
                    error: Some(e.to_string()),
                });
                solutions.push(None);
            }
        }
    }
    let scores: Vec<Option<Result<ScoreEstimate>>> =
        solutions.par_iter().map(|s| s.as_ref().map(|s| evaluate(&s.weights))).collect();
    for (row, score) in rows.iter_mut().zip(scores) {
        match score {
            Some(Ok(est)) => row.score = Some(est),
            Some(Err(e)) => row.error = Some(e.to_string()),
            None => {}
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, row) in rows.iter().enumerate() {
        if let Some(est) = row.score {
            if best.map_or(true, |(_, m)| est.mean > m) {
                best = Some((i, est.mean));
            }
        }
    }
    Ok(LineSearchResult { rows, solutions, best: best.map(|(i, _)| i) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ExplicitEnv;
    use crate::mdp::{optimal_value, random_mdp};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn instance(seed: u64, n: usize, k: usize) -> (MdpModel<f64>, BasisMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_mdp(n, 3, 0.9, &mut rng).unwrap();
        let basis = BasisMatrix::random(n, k, &mut rng).unwrap();
        (model, basis)
    }

    fn opts() -> LpOptions<f64> {
        LpOptions::with_tol(1e-10)
    }

    #[test]
    fn identity_basis_alp_is_exact() {
        let (model, _) = instance(1, 10, 2);
        let basis = BasisMatrix::identity(10);
        let (r, _) = solve_alp(&model, &basis, &StateDistribution::uniform(10), &opts()).unwrap();
        let (jstar, _) = optimal_value(&model).unwrap();
        for (a, b) in r.iter().zip(jstar.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_basis_alp_matches_bisection() {
        let (model, _) = instance(2, 8, 1);
        let basis = BasisMatrix::constant(8);
        let (r, _) = solve_alp(&model, &basis, &StateDistribution::uniform(8), &opts()).unwrap();
        // Largest c with c ≤ g(x, a) + αc everywhere.
        let feasible = |c: f64| {
            (0..8).all(|x| (0..3).all(|a| c <= model.cost(x, a) + model.discount() * c + 1e-15))
        };
        let (mut lo, mut hi) = (-100.0, 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if feasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((r[0] - lo).abs() < 1e-7, "{} vs {lo}", r[0]);
    }

    #[test]
    fn rejects_basis_without_constant() {
        let (model, _) = instance(3, 3, 1);
        let basis = BasisMatrix::new(Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap()).unwrap();
        assert!(build_alp(&model, &basis, &StateDistribution::uniform(3)).is_err());
    }

    #[test]
    fn salp_at_zero_budget_equals_alp() {
        let (model, basis) = instance(4, 15, 4);
        let nu = StateDistribution::uniform(15);
        let (_, alp) = solve_alp(&model, &basis, &nu, &opts()).unwrap();
        let (sol, _) = solve_salp(&model, &basis, &nu, &nu, 0.0, &opts()).unwrap();
        assert!((sol.objective - alp.objective).abs() < 1e-8);
        assert!(build_salp(&model, &basis, &nu, &nu, -1.0).is_err());
    }

    #[test]
    fn two_state_example_salp_beats_alp() {
        let p = Matrix::identity(2);
        let costs = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let model = MdpModel::new(vec![p], costs, 0.9).unwrap();
        let basis = BasisMatrix::constant(2);
        let nu = StateDistribution::uniform(2);
        let (_, alp) = solve_alp(&model, &basis, &nu, &opts()).unwrap();
        let gains: Vec<f64> = [0.01, 0.05, 0.1]
            .iter()
            .map(|&t| solve_salp(&model, &basis, &nu, &nu, t, &opts()).unwrap().0.objective - alp.objective)
            .collect();
        assert!(gains.iter().all(|&g| g > 1e-3), "{gains:?}");
    }

    #[test]
    fn penalty_form_with_identity_basis_is_exact() {
        let (model, _) = instance(5, 6, 1);
        let basis = BasisMatrix::identity(6);
        let nu = StateDistribution::uniform(6);
        let (sol, _) = solve_salp_penalty(&model, &basis, &nu, &nu, &opts()).unwrap();
        let (jstar, _) = optimal_value(&model).unwrap();
        assert!(sol.slacks.iter().all(|&s| s < 1e-7));
        for (a, b) in sol.weights.iter().zip(jstar.iter()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn exhaustive_sample_matches_full_program() {
        let (model, basis) = instance(6, 12, 3);
        let nu = StateDistribution::uniform(12);
        let env = ExplicitEnv::new(&model, &basis, nu.clone()).unwrap();
        let states: Vec<usize> = (0..12).collect();
        for theta in [0.0, 0.05] {
            let sampled = build_sampled_salp(&env, &states, SampledMode::Budget(theta), None).unwrap();
            let (s, _) = solve_salp_structured(&sampled.lp, &opts()).unwrap();
            let (full, _) = solve_salp(&model, &basis, &nu, &nu, theta, &opts()).unwrap();
            assert!((s.objective - full.objective).abs() < 1e-8, "{} vs {}", s.objective, full.objective);
        }
    }

    #[test]
    fn duplicates_share_slacks_with_empirical_weights() {
        let (model, basis) = instance(7, 5, 3);
        let env = ExplicitEnv::new(&model, &basis, StateDistribution::uniform(5)).unwrap();
        let states = vec![0, 1, 1, 2, 2, 2, 3, 4, 4, 4];
        let sampled = build_sampled_salp(&env, &states, SampledMode::Budget(0.02), None).unwrap();
        assert_eq!(sampled.lp.n_slacks(), 5);
        assert_eq!(sampled.distinct_states, 5);
        let (s, _) = solve_salp_structured(&sampled.lp, &opts()).unwrap();
        let empirical = StateDistribution::from_weights(vec![1.0, 2.0, 3.0, 1.0, 3.0]).unwrap();
        let (full, _) = solve_salp(&model, &basis, &empirical, &empirical, 0.02, &opts()).unwrap();
        assert!((s.objective - full.objective).abs() < 1e-8);
    }

    #[test]
    fn penalty_and_budget_modes_agree_at_used_budget() {
        let (model, basis) = instance(8, 20, 4);
        let env = ExplicitEnv::new(&model, &basis, StateDistribution::uniform(20)).unwrap();
        let states: Vec<usize> = (0..20).chain(0..7).collect();
        let pen = build_sampled_salp(&env, &states, SampledMode::Penalty, None).unwrap();
        let (ps, _) = solve_salp_structured(&pen.lp, &opts()).unwrap();
        let budget = build_sampled_salp(&env, &states, SampledMode::Budget(ps.budget_used), None).unwrap();
        let (bs, _) = solve_salp_structured(&budget.lp, &opts()).unwrap();
        let nu_phi = dot(pen.lp.objective(), &ps.weights);
        assert!((bs.objective - nu_phi).abs() < 1e-7, "{} vs {nu_phi}", bs.objective);
    }

    #[test]
    fn schedule_checks() {
        let s: Vec<f64> = default_theta_schedule();
        assert_eq!(s.len(), 10);
        assert_eq!(s[1], 0.00256);
        assert!((s[9] - 0.65536).abs() < 1e-15);
        assert!((s[7] - 0.16384).abs() < 1e-15);
        validate_schedule(&s).unwrap();
        assert!(validate_schedule(&[0.1, 0.2]).is_err());
        assert!(validate_schedule(&[0.0, 0.2, 0.2]).is_err());
    }

    #[test]
    fn line_search_prefers_smaller_theta_on_ties_and_monotone_objective() {
        let (model, basis) = instance(9, 30, 4);
        let env = ExplicitEnv::new(&model, &basis, StateDistribution::uniform(30)).unwrap();
        let states: Vec<usize> = (0..30).collect();
        let sampled = build_sampled_salp(&env, &states, SampledMode::Budget(0.0), None).unwrap();
        let schedule: Vec<f64> = default_theta_schedule();
        let res = theta_line_search(&sampled.lp, &schedule, &opts(), |_| Ok(ScoreEstimate { mean: 1.0, stderr: 0.0 }))
            .unwrap();
        assert_eq!(res.best, Some(0));
        let objs: Vec<f64> = res.rows.iter().map(|r| r.objective.unwrap()).collect();
        assert!(objs.windows(2).all(|w| w[1] >= w[0] - 1e-8), "{objs:?}");
        let only_zero = theta_line_search(&sampled.lp, &[0.0], &opts(), |_| Ok(ScoreEstimate { mean: 0.0, stderr: 0.0 }))
            .unwrap();
        assert!((only_zero.rows[0].objective.unwrap() - objs[0]).abs() < 1e-9);
    }
}
