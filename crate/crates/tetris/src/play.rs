use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use salp::sampling::episode_rng;
use sha2::{Digest, Sha256};

use crate::board::{Board, Placement, NUM_FEATURES};
use crate::error::TetrisError;
use crate::piece::Piece;
use crate::state::{random_piece, TetrisEnv, TetrisState};

/// Chooses one of the legal placements (given in index order).
pub trait PlacementPolicy: Sync {
    fn choose(&self, state: &TetrisState, moves: &[Placement], rng: &mut ChaCha8Rng) -> usize;
}

/// Minimizes `−lines + α E[Φr(x')]`, lowest index among ties.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyPolicy {
    env: TetrisEnv,
    weights: Vec<f64>,
}

impl GreedyPolicy {
    pub fn new(weights: Vec<f64>, env: TetrisEnv) -> Result<Self, TetrisError> {
        if weights.len() != NUM_FEATURES || weights.iter().any(|w| !w.is_finite()) {
            return Err(TetrisError::Parse(format!("need {NUM_FEATURES} finite weights, got {}", weights.len())));
        }
        Ok(Self { env, weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl PlacementPolicy for GreedyPolicy {
    fn choose(&self, state: &TetrisState, moves: &[Placement], _rng: &mut ChaCha8Rng) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, &m) in moves.iter().enumerate() {
            let v = self.env.successor_expectation(state, m, &self.weights).expect("legal placement");
            if v < best.1 {
                best = (i, v);
            }
        }
        best.0
    }
}

/// Uniformly random placement.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomPolicy;

impl PlacementPolicy for RandomPolicy {
    fn choose(&self, _state: &TetrisState, moves: &[Placement], rng: &mut ChaCha8Rng) -> usize {
        rng.gen_range(0..moves.len())
    }
}

/// Hand-set cost-to-go weights for the sampling policy: a negative constant
/// with penalties on bumpiness, maximum height and holes. Averages about
/// 110 lines per game.
pub const BASELINE_WEIGHTS: [f64; NUM_FEATURES] = [
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
    0.6, 0.6, 0.6, 0.6, 0.6, 0.6, 0.6, 0.6, 0.6, //
    1.0, 2.0, -10.0,
];

pub fn baseline_policy(env: TetrisEnv) -> GreedyPolicy {
    GreedyPolicy::new(BASELINE_WEIGHTS.to_vec(), env).expect("baseline weights are valid")
}

/// The piece sequence of one game, reproducible from `(seed, game)`.
#[derive(Debug, Clone)]
pub struct PieceStream(ChaCha8Rng);

impl PieceStream {
    pub fn new(seed: u64, game: u64) -> Self {
        Self(episode_rng(seed, game))
    }

    pub fn next_piece(&mut self) -> Piece {
        random_piece(&mut self.0)
    }
}

pub const DIGEST_PIECES: usize = 256;

/// SHA-256 of the first [`DIGEST_PIECES`] pieces of game `game`.
pub fn piece_digest(seed: u64, game: u64) -> String {
    let mut stream = PieceStream::new(seed, game);
    let letters: String = (0..DIGEST_PIECES).map(|_| stream.next_piece().letter()).collect();
    Sha256::digest(letters.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

const POLICY_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Randomness for the policy itself, independent of the pieces.
pub fn policy_rng(seed: u64, game: u64) -> ChaCha8Rng {
    episode_rng(seed ^ POLICY_SALT, game)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeOutcome {
    pub lines: u64,
    pub steps: u64,
    /// `false` when the game was cut off at the step cap.
    pub terminated: bool,
}

/// Plays from the empty board until no placement fits or `max_steps`
/// pieces have been placed.
pub fn play_game<P: PlacementPolicy + ?Sized>(
    policy: &P,
    pieces: &mut PieceStream,
    rng: &mut ChaCha8Rng,
    max_steps: u64,
) -> EpisodeOutcome {
    let mut state = TetrisState::new(Board::empty(), pieces.next_piece());
    let mut lines = 0;
    for step in 0..max_steps {
        let moves = state.legal_placements();
        if moves.is_empty() {
            return EpisodeOutcome { lines, steps: step, terminated: true };
        }
        let choice = policy.choose(&state, &moves, rng);
        let (board, cleared) = state.board.apply_placement(state.piece, moves[choice]).expect("legal placement");
        lines += cleared as u64;
        state = TetrisState::new(board, pieces.next_piece());
    }
    let terminated = state.is_terminal();
    EpisodeOutcome { lines, steps: max_steps, terminated }
}

/// One game with pieces from stream 0 of `seed`.
pub fn play_episode<P: PlacementPolicy + ?Sized>(policy: &P, seed: u64, max_steps: u64) -> Result<EpisodeOutcome, TetrisError> {
    if max_steps == 0 {
        return Err(TetrisError::Parse("max_steps must be at least 1".into()));
    }
    Ok(play_game(policy, &mut PieceStream::new(seed, 0), &mut policy_rng(seed, 0), max_steps))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameRecord {
    pub game: u64,
    pub lines: u64,
    pub steps: u64,
    pub terminated: bool,
    pub piece_digest: String,
}

/// Games `0..games` in parallel; game `g` uses piece stream `(master_seed, g)`
/// whatever the policy, so policies compared under one seed see the same
/// pieces.
pub fn play_games<P: PlacementPolicy + ?Sized>(policy: &P, games: u64, master_seed: u64, max_steps: u64) -> Vec<GameRecord> {
    (0..games)
        .into_par_iter()
        .map(|g| {
            let out = play_game(policy, &mut PieceStream::new(master_seed, g), &mut policy_rng(master_seed, g), max_steps);
            GameRecord {
                game: g,
                lines: out.lines,
                steps: out.steps,
                terminated: out.terminated,
                piece_digest: piece_digest(master_seed, g),
            }
        })
        .collect()
}
