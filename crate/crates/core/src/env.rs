//! Environments seen through a linear architecture: per-state features and,
//! for every action, the immediate cost and the expected next-state features.
//! This is all the sampled SALP and greedy action selection need.

use std::hash::Hash;

use rand::Rng;

use crate::basis::BasisMatrix;
use crate::error::{Result, SalpError};
use crate::mdp::{MdpModel, StateDistribution};
use crate::scalar::{dot, Scalar};

/// One action available at a state.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionRow<T> {
    pub cost: T,
    /// `E[φ(x')]`, with terminal successors contributing zero.
    pub next_features: Vec<T>,
}

pub trait Environment<T: Scalar>: Sync {
    type State: Clone + Eq + Hash + Send + Sync;

    fn discount(&self) -> T;

    fn num_features(&self) -> usize;

    fn features(&self, state: &Self::State) -> Vec<T>;

    /// Rows for every action in index order; empty at terminal states.
    fn action_rows(&self, state: &Self::State) -> Vec<ActionRow<T>>;
}

/// Episodic simulation used to sample states under a fixed policy.
pub trait Simulator: Sync {
    type State: Clone + Send + Sync;

    fn initial_state<R: Rng>(&self, rng: &mut R) -> Self::State;

    /// Next state after `action`, or `None` when the episode ends.
    fn step<R: Rng>(&self, state: &Self::State, action: usize, rng: &mut R) -> Option<Self::State>;
}

/// `g(x, a) + α E[φ(x')]ᵀ r` for every action of `row`.
pub fn action_values<T: Scalar>(rows: &[ActionRow<T>], discount: T, r: &[T]) -> Vec<T> {
    rows.iter().map(|row| row.cost + discount * dot(&row.next_features, r)).collect()
}

fn argmin<T: Scalar>(values: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.map_or(true, |(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Action minimizing `g(x, a) + α E[Φr(x')]`; lowest index among ties.
pub fn greedy_from_weights<T: Scalar, E: Environment<T>>(r: &[T], env: &E, state: &E::State) -> Result<usize> {
    if r.len() != env.num_features() {
        return Err(SalpError::Dimension(format!("weights have {} entries, K = {}", r.len(), env.num_features())));
    }
    let rows = env.action_rows(state);
    argmin(&action_values(&rows, env.discount(), r)).ok_or(SalpError::TerminalState)
}

/// Explicit MDP paired with a basis. Episodes start from `initial` and never
/// terminate on their own.
#[derive(Debug, Clone)]
pub struct ExplicitEnv<'a, T> {
    model: &'a MdpModel<T>,
    basis: &'a BasisMatrix<T>,
    initial: StateDistribution<T>,
}

impl<'a, T: Scalar> ExplicitEnv<'a, T> {
    pub fn new(model: &'a MdpModel<T>, basis: &'a BasisMatrix<T>, initial: StateDistribution<T>) -> Result<Self> {
        if basis.n_states() != model.n_states() || initial.len() != model.n_states() {
            return Err(SalpError::Dimension("model, basis and initial distribution disagree on n".into()));
        }
        Ok(Self { model, basis, initial })
    }

    pub fn model(&self) -> &MdpModel<T> {
        self.model
    }

    pub fn basis(&self) -> &BasisMatrix<T> {
        self.basis
    }
}

/// Inverse-CDF draw from a probability vector.
pub(crate) fn draw_index<T: Scalar, R: Rng + ?Sized>(weights: &[T], rng: &mut R) -> usize {
    let u = rng.gen::<f64>();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w.to_f64_lossy();
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|w| *w > T::zero()).unwrap_or(weights.len() - 1)
}

impl<T: Scalar> Environment<T> for ExplicitEnv<'_, T> {
    type State = usize;

    fn discount(&self) -> T {
        self.model.discount()
    }

    fn num_features(&self) -> usize {
        self.basis.k()
    }

    fn features(&self, state: &usize) -> Vec<T> {
        self.basis.features(*state).to_vec()
    }

    fn action_rows(&self, state: &usize) -> Vec<ActionRow<T>> {
        let phi = self.basis.matrix();
        (0..self.model.n_actions())
            .map(|a| {
                let p = self.model.transition(a).row(*state);
                let mut next = vec![T::zero(); phi.cols()];
                for (y, &pxy) in p.iter().enumerate() {
                    if pxy != T::zero() {
                        for (n, &f) in next.iter_mut().zip(phi.row(y)) {
                            *n += pxy * f;
                        }
                    }
                }
                ActionRow { cost: self.model.cost(*state, a), next_features: next }
            })
            .collect()
    }
}

impl<T: Scalar> Simulator for ExplicitEnv<'_, T> {
    type State = usize;

    fn initial_state<R: Rng>(&self, rng: &mut R) -> usize {
        draw_index(&self.initial, rng)
    }

    fn step<R: Rng>(&self, state: &usize, action: usize, rng: &mut R) -> Option<usize> {
        Some(draw_index(self.model.transition(action).row(*state), rng))
    }
}
