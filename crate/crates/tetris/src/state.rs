use rand::Rng;
use salp::env::{ActionRow, Environment, Simulator};
use salp::sampling::StateCodec;
use salp::{Result as SalpResult, SalpError};

use crate::board::{Board, Placement, NUM_FEATURES};
use crate::error::TetrisError;
use crate::piece::Piece;

/// The board together with the piece about to fall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TetrisState {
    pub board: Board,
    pub piece: Piece,
}

impl TetrisState {
    pub fn new(board: Board, piece: Piece) -> Self {
        Self { board, piece }
    }

    pub fn legal_placements(&self) -> Vec<Placement> {
        self.board.legal_placements(self.piece)
    }

    pub fn is_terminal(&self) -> bool {
        !self.board.accepts(self.piece)
    }
}

pub const DEFAULT_DISCOUNT: f64 = 0.9;

/// Tetris as a discounted MDP: cost `−lines` per placement, next piece
/// uniform over the seven shapes, value zero once the piece cannot be placed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TetrisEnv {
    pub discount: f64,
}

impl Default for TetrisEnv {
    fn default() -> Self {
        Self { discount: DEFAULT_DISCOUNT }
    }
}

/// Cost and `E[φ(x')]` for one placement; successors that cannot place
/// their piece contribute nothing.
fn successor(board: &Board, piece: Piece, placement: Placement) -> std::result::Result<(f64, [f64; NUM_FEATURES], f64), TetrisError> {
    let (next, lines) = board.apply_placement(piece, placement)?;
    let alive = next.accepted_pieces() as f64 / 7.0;
    Ok((-(lines as f64), next.features(), alive))
}

impl TetrisEnv {
    pub fn new(discount: f64) -> std::result::Result<Self, TetrisError> {
        if !(0.0..1.0).contains(&discount) {
            return Err(TetrisError::Parse(format!("discount {discount} outside [0, 1)")));
        }
        Ok(Self { discount })
    }

    /// `g + α (1/7) Σ_p Φr(board', p)` with terminal successors valued 0.
    pub fn successor_expectation(
        &self,
        state: &TetrisState,
        placement: Placement,
        r: &[f64],
    ) -> std::result::Result<f64, TetrisError> {
        let (cost, phi, alive) = successor(&state.board, state.piece, placement)?;
        let v: f64 = phi.iter().zip(r).map(|(a, b)| a * b).sum();
        Ok(cost + self.discount * alive * v)
    }
}

impl Environment<f64> for TetrisEnv {
    type State = TetrisState;

    fn discount(&self) -> f64 {
        self.discount
    }

    fn num_features(&self) -> usize {
        NUM_FEATURES
    }

    fn features(&self, state: &TetrisState) -> Vec<f64> {
        state.board.features().to_vec()
    }

    fn action_rows(&self, state: &TetrisState) -> Vec<ActionRow<f64>> {
        state
            .legal_placements()
            .into_iter()
            .map(|p| {
                let (cost, phi, alive) = successor(&state.board, state.piece, p).expect("legal placement");
                ActionRow { cost, next_features: phi.iter().map(|v| v * alive).collect() }
            })
            .collect()
    }
}

pub fn random_piece<R: Rng + ?Sized>(rng: &mut R) -> Piece {
    Piece::ALL[rng.gen_range(0..7)]
}

impl Simulator for TetrisEnv {
    type State = TetrisState;

    fn initial_state<R: Rng>(&self, rng: &mut R) -> TetrisState {
        TetrisState::new(Board::empty(), random_piece(rng))
    }

    fn step<R: Rng>(&self, state: &TetrisState, action: usize, rng: &mut R) -> Option<TetrisState> {
        let placement = *state.legal_placements().get(action)?;
        let (board, _) = state.board.apply_placement(state.piece, placement).ok()?;
        Some(TetrisState::new(board, random_piece(rng)))
    }
}

/// `<20 comma-separated hex rows, bottom first> <piece letter>`.
impl StateCodec for TetrisState {
    fn encode(&self) -> String {
        format!("{} {}", self.board.to_hex(), self.piece)
    }

    fn decode(text: &str) -> SalpResult<Self> {
        let parse = |e: TetrisError| SalpError::Parse(e.to_string());
        let (board, piece) = text
            .trim()
            .split_once(' ')
            .ok_or_else(|| SalpError::Parse(format!("expected `<board> <piece>`, got `{text}`")))?;
        Ok(Self::new(Board::from_hex(board).map_err(parse)?, piece.parse().map_err(parse)?))
    }
}
