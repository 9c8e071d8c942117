//! State sampling (baseline-policy simulation and exact occupancy draws),
//! the sample-size formula and the constant `B` over a sample.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::env::{draw_index, Environment, Simulator};
use crate::error::{Result, SalpError};
use crate::mdp::{occupancy, MdpModel, Policy, StateDistribution};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSource {
    BaselinePolicy,
    ExactOccupancy,
    Exhaustive,
}

impl fmt::Display for SampleSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::BaselinePolicy => "baseline-policy",
            Self::ExactOccupancy => "exact-occupancy",
            Self::Exhaustive => "exhaustive",
        })
    }
}

impl FromStr for SampleSource {
    type Err = SalpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline-policy" => Ok(Self::BaselinePolicy),
            "exact-occupancy" => Ok(Self::ExactOccupancy),
            "exhaustive" => Ok(Self::Exhaustive),
            _ => Err(SalpError::Parse(format!("unknown sample source `{s}`"))),
        }
    }
}

/// One-line text encoding of a state for sample files.
pub trait StateCodec: Sized {
    fn encode(&self) -> String;
    fn decode(text: &str) -> Result<Self>;
}

impl StateCodec for usize {
    fn encode(&self) -> String {
        self.to_string()
    }

    fn decode(text: &str) -> Result<Self> {
        text.trim().parse().map_err(|e| SalpError::Parse(format!("bad state index `{text}`: {e}")))
    }
}

/// A multiset of sampled states.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet<S> {
    pub states: Vec<S>,
    pub source: SampleSource,
    pub seed: u64,
}

impl<S> SampleSet<S> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

impl<S: StateCodec> SampleSet<S> {
    /// Header line `# salp-samples source=<src> seed=<seed> S=<n>`, then one
    /// encoded state per line.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# salp-samples source={} seed={} S={}", self.source, self.seed, self.states.len())?;
        for s in &self.states {
            writeln!(out, "{}", s.encode())?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| SalpError::Parse("empty sample file".into()))??;
        let mut fields = header
            .strip_prefix("# salp-samples ")
            .ok_or_else(|| SalpError::Parse("missing sample header".into()))?
            .split_whitespace()
            .map(|kv| kv.split_once('=').ok_or_else(|| SalpError::Parse(format!("bad header field `{kv}`"))));
        let mut source = None;
        let mut seed = None;
        let mut count = None;
        for field in fields.by_ref() {
            let (key, value) = field?;
            let bad = |e: std::num::ParseIntError| SalpError::Parse(format!("bad header value `{value}`: {e}"));
            match key {
                "source" => source = Some(value.parse()?),
                "seed" => seed = Some(value.parse().map_err(bad)?),
                "S" => count = Some(value.parse::<usize>().map_err(bad)?),
                _ => return Err(SalpError::Parse(format!("unknown header field `{key}`"))),
            }
        }
        let (Some(source), Some(seed), Some(count)) = (source, seed, count) else {
            return Err(SalpError::Parse("header needs source, seed and S".into()));
        };
        let mut states = Vec::with_capacity(count);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            states.push(S::decode(&line).map_err(|e| SalpError::Parse(format!("line {}: {e}", i + 2)))?);
        }
        if states.len() != count {
            return Err(SalpError::Parse(format!("header promises {count} states, found {}", states.len())));
        }
        Ok(Self { states, source, seed })
    }
}

/// Episode layout for baseline-policy sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineSampling {
    /// Steps discarded at the start of every episode.
    pub burn_in: usize,
    /// Steps between recorded states.
    pub stride: usize,
    /// Episodes are cut (and restarted) after this many steps.
    pub max_episode_steps: usize,
    /// Consecutive episodes without a recorded state before giving up.
    pub max_empty_episodes: usize,
}

impl Default for BaselineSampling {
    fn default() -> Self {
        Self { burn_in: 50, stride: 20, max_episode_steps: 100_000, max_empty_episodes: 1000 }
    }
}

/// Random stream of episode `index` under a master seed.
pub fn episode_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn run_episode<Sim, P>(sim: &Sim, policy: &P, cfg: &BaselineSampling, cap: usize, rng: &mut ChaCha8Rng) -> Vec<Sim::State>
where
    Sim: Simulator,
    P: Fn(&Sim::State) -> Option<usize>,
{
    let mut out = Vec::new();
    let mut state = sim.initial_state(rng);
    for t in 0..cfg.max_episode_steps {
        if t >= cfg.burn_in && (t - cfg.burn_in) % cfg.stride == 0 {
            out.push(state.clone());
            if out.len() == cap {
                break;
            }
        }
        let Some(action) = policy(&state) else { break };
        match sim.step(&state, action, rng) {
            Some(next) => state = next,
            None => break,
        }
    }
    out
}

/// Runs episodes of `policy`, discarding `burn_in` steps per episode and
/// keeping every `stride`-th state after that, until `s` states are
/// collected. Episodes run in parallel; episode `i` draws from stream `i` of
/// `seed` and results are concatenated in episode order, so the sample does
/// not depend on the thread count.
pub fn sample_baseline_states<Sim, P>(
    sim: &Sim,
    policy: P,
    s: usize,
    cfg: &BaselineSampling,
    seed: u64,
) -> Result<SampleSet<Sim::State>>
where
    Sim: Simulator,
    P: Fn(&Sim::State) -> Option<usize> + Sync,
{
    if s == 0 {
        return Err(SalpError::InvalidArgument("sample size must be positive".into()));
    }
    if cfg.burn_in == 0 || cfg.stride == 0 || cfg.max_episode_steps == 0 {
        return Err(SalpError::InvalidArgument("burn-in, stride and episode cap must be positive".into()));
    }
    let mut states = Vec::with_capacity(s);
    let mut next_episode = 0u64;
    let mut batch = 1usize;
    let mut empty_run = 0usize;
    while states.len() < s {
        let cap = s - states.len();
        let episodes: Vec<Vec<Sim::State>> = (next_episode..next_episode + batch as u64)
            .into_par_iter()
            .map(|e| run_episode(sim, &policy, cfg, cap, &mut episode_rng(seed, e)))
            .collect();
        next_episode += batch as u64;
        for ep in episodes {
            if ep.is_empty() {
                empty_run += 1;
                if empty_run > cfg.max_empty_episodes {
                    return Err(SalpError::InvalidArgument(format!(
                        "{empty_run} consecutive episodes ended before the burn-in of {} steps",
                        cfg.burn_in
                    )));
                }
                continue;
            }
            empty_run = 0;
            let take = (s - states.len()).min(ep.len());
            states.extend(ep.into_iter().take(take));
            if states.len() == s {
                break;
            }
        }
        batch = (batch * 2).min(64);
    }
    Ok(SampleSet { states, source: SampleSource::BaselinePolicy, seed })
}

/// `s` i.i.d. draws from the occupancy measure of `policy` started at `nu`.
pub fn sample_occupancy_exact<T: Scalar>(
    model: &MdpModel<T>,
    policy: &Policy,
    nu: &StateDistribution<T>,
    s: usize,
    seed: u64,
) -> Result<SampleSet<usize>> {
    if s == 0 {
        return Err(SalpError::InvalidArgument("sample size must be positive".into()));
    }
    let pi = occupancy(model, policy, nu)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = (0..s).map(|_| draw_index(&pi, &mut rng)).collect();
    Ok(SampleSet { states, source: SampleSource::ExactOccupancy, seed })
}

/// Empirical distribution of a sample of state indices.
pub fn empirical_distribution(states: &[usize], n_states: usize) -> Vec<f64> {
    let mut freq = vec![0.0; n_states];
    for &x in states {
        freq[x] += 1.0;
    }
    let total = states.len().max(1) as f64;
    freq.iter_mut().for_each(|f| *f /= total);
    freq
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Number of samples that guarantees an `ε`-accurate sampled SALP with
/// probability `1 − δ`:
/// `⌈(64B²/ε²) (2(K+2) ln(16eB/ε) + ln(8/δ))⌉`.
pub fn sample_size_bound(b: f64, k: usize, epsilon: f64, delta: f64) -> Result<u64> {
    if !(b.is_finite() && b > 0.0) {
        return Err(SalpError::InvalidArgument(format!("B = {b} must be positive and finite")));
    }
    if !(epsilon > 0.0 && epsilon <= b) {
        return Err(SalpError::InvalidArgument(format!("ε = {epsilon} must lie in (0, B]")));
    }
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(SalpError::InvalidArgument(format!("δ = {delta} must lie in (0, 1/2]")));
    }
    let k2 = (k + 2) as f64;
    let value = 64.0 * b * b / (epsilon * epsilon)
        * (2.0 * k2 * (16.0 * std::f64::consts::E * b / epsilon).ln() + (8.0 / delta).ln());
    if !(value < u64::MAX as f64) {
        return Err(SalpError::InvalidArgument("sample size overflows".into()));
    }
    Ok(value.ceil() as u64)
}

/// `max_x max_a sup_{l ≤ r ≤ u} (Φr(x) − g(x,a) − αE[Φr(x')])⁺` over the
/// sampled non-terminal states. The supremum of each linear function over the
/// box is attained coordinate-wise at a corner.
pub fn estimate_b<T: Scalar, E: Environment<T>>(
    lower: &[T],
    upper: &[T],
    states: &[E::State],
    env: &E,
) -> Result<T> {
    let k = env.num_features();
    if lower.len() != k || upper.len() != k {
        return Err(SalpError::Dimension(format!("box bounds need K = {k} entries")));
    }
    if lower.iter().chain(upper).any(|v| !v.is_finite()) {
        return Err(SalpError::InvalidArgument("box bounds must be finite".into()));
    }
    if lower.iter().zip(upper).any(|(l, u)| l > u) {
        return Err(SalpError::InvalidArgument("box lower bound exceeds upper bound".into()));
    }
    let alpha = env.discount();
    let per_state: Vec<T> = states
        .par_iter()
        .map(|x| {
            let phi = env.features(x);
            env.action_rows(x).iter().fold(T::zero(), |best, row| {
                let sup = phi
                    .iter()
                    .zip(&row.next_features)
                    .zip(lower.iter().zip(upper))
                    .fold(-row.cost, |acc, ((&f, &e), (&l, &u))| {
                        let v = f - alpha * e;
                        acc + (v * l).max(v * u)
                    });
                best.max(sup)
            })
        })
        .collect();
    Ok(per_state.into_iter().fold(T::zero(), T::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisMatrix;
    use crate::env::ExplicitEnv;
    use crate::linalg::Matrix;
    use crate::mdp::random_mdp;

    fn small() -> (MdpModel<f64>, BasisMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let model = random_mdp(6, 2, 0.9, &mut rng).unwrap();
        let basis = BasisMatrix::random(6, 2, &mut rng).unwrap();
        (model, basis)
    }

    /// Stationary distribution by power iteration on `P_μᵀ`.
    fn stationary(p: &Matrix<f64>) -> Vec<f64> {
        let n = p.rows();
        let mut v = vec![1.0 / n as f64; n];
        for _ in 0..10_000 {
            v = p.tr_mul_vec(&v);
        }
        v
    }

    #[test]
    fn baseline_sampling_is_deterministic_and_stationary() {
        let (model, basis) = small();
        let env = ExplicitEnv::new(&model, &basis, StateDistribution::uniform(6)).unwrap();
        let cfg = BaselineSampling { burn_in: 5, stride: 3, ..Default::default() };
        let a = sample_baseline_states(&env, |_: &usize| Some(1), 50_000, &cfg, 9).unwrap();
        let b = sample_baseline_states(&env, |_: &usize| Some(1), 50_000, &cfg, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 50_000);
        let target = stationary(model.transition(1));
        assert!(total_variation(&empirical_distribution(&a.states, 6), &target) < 0.05);
    }

    #[test]
    fn baseline_sampling_gives_up_on_short_episodes() {
        struct Dies;
        impl Simulator for Dies {
            type State = u8;
            fn initial_state<R: rand::Rng>(&self, _: &mut R) -> u8 {
                0
            }
            fn step<R: rand::Rng>(&self, s: &u8, _: usize, _: &mut R) -> Option<u8> {
                (*s < 3).then_some(s + 1)
            }
        }
        let cfg = BaselineSampling { max_empty_episodes: 20, ..Default::default() };
        assert!(sample_baseline_states(&Dies, |_: &u8| Some(0), 10, &cfg, 1).is_err());
        // One state per episode when the stride exceeds the episode length.
        let cfg = BaselineSampling { burn_in: 1, stride: 100, ..Default::default() };
        let s = sample_baseline_states(&Dies, |_: &u8| Some(0), 10, &cfg, 1).unwrap();
        assert!(s.states.iter().all(|&x| x == 1));
    }

    #[test]
    fn occupancy_sampling_matches_occupancy() {
        let (model, _) = small();
        let pol = Policy::constant(6, 0);
        let nu = StateDistribution::uniform(6);
        let s = sample_occupancy_exact(&model, &pol, &nu, 50_000, 4).unwrap();
        let pi = occupancy(&model, &pol, &nu).unwrap();
        assert!(total_variation(&empirical_distribution(&s.states, 6), &pi) < 0.03);
        assert_eq!(s, sample_occupancy_exact(&model, &pol, &nu, 50_000, 4).unwrap());
    }

    #[test]
    fn sample_size_formula() {
        let s = sample_size_bound(1.0, 22, 0.1, 0.05).unwrap();
        let direct = 6400.0 * (48.0 * (160.0 * std::f64::consts::E).ln() + 160.0f64.ln());
        assert_eq!(s, direct.ceil() as u64);
        assert!(sample_size_bound(1.0, 22, 0.2, 0.05).unwrap() * 2 < s);
        assert!(sample_size_bound(1.0, 23, 0.1, 0.05).unwrap() >= s);
        assert!(sample_size_bound(1.0, 22, 2.0, 0.05).is_err());
        assert!(sample_size_bound(1.0, 22, 0.1, 0.6).is_err());
        assert!(sample_size_bound(1.0, 22, 0.0, 0.1).is_err());
    }

    #[test]
    fn b_at_origin_and_grid_oracle() {
        let (model, basis) = small();
        let env = ExplicitEnv::new(&model, &basis, StateDistribution::uniform(6)).unwrap();
        let states: Vec<usize> = (0..6).collect();
        let at_zero = estimate_b(&[0.0, 0.0], &[0.0, 0.0], &states, &env).unwrap();
        let neg_cost = model.costs().as_slice().iter().fold(0.0f64, |m, &g| m.max(-g));
        assert_eq!(at_zero, neg_cost);

        let (lo, hi) = ([-1.0, -0.5], [2.0, 1.5]);
        let b = estimate_b(&lo, &hi, &states, &env).unwrap();
        let mut grid_best = 0.0f64;
        let steps = 300;
        for i in 0..=steps {
            for j in 0..=steps {
                let r = [
                    lo[0] + (hi[0] - lo[0]) * i as f64 / steps as f64,
                    lo[1] + (hi[1] - lo[1]) * j as f64 / steps as f64,
                ];
                let phir = basis.evaluate(&r).unwrap();
                for x in 0..6 {
                    for a in 0..2 {
                        let v = phir[x] - model.q_value(x, a, &phir);
                        grid_best = grid_best.max(v);
                    }
                }
            }
        }
        assert!((b - grid_best).abs() < 1e-9, "{b} vs {grid_best}");
        let wider = estimate_b(&[-2.0, -1.0], &[3.0, 2.0], &states, &env).unwrap();
        assert!(wider >= b);
        assert!(estimate_b(&[0.0, f64::NEG_INFINITY], &[1.0, 1.0], &states, &env).is_err());
    }

    #[test]
    fn sample_file_round_trip() {
        let set = SampleSet { states: vec![3usize, 1, 4, 1], source: SampleSource::ExactOccupancy, seed: 77 };
        let mut buf = Vec::new();
        set.write_to(&mut buf).unwrap();
        let back: SampleSet<usize> = SampleSet::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, set);
        assert!(SampleSet::<usize>::read_from("# salp-samples source=exhaustive seed=1 S=2\n0\n".as_bytes()).is_err());
    }
}
