use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use salp::env::Simulator;
use salp_tetris::play::{play_games, RandomPolicy};
use salp_tetris::{baseline_policy, Board, GreedyPolicy, Piece, PlacementPolicy, TetrisEnv, TetrisState, BASELINE_WEIGHTS, COLS};

/// Shapes written out by hand, one orientation each.
fn base_shape(p: Piece) -> Vec<(i32, i32)> {
    match p {
        Piece::I => vec![(0, 0), (1, 0), (2, 0), (3, 0)],
        Piece::O => vec![(0, 0), (1, 0), (0, 1), (1, 1)],
        Piece::T => vec![(0, 1), (1, 1), (2, 1), (1, 0)],
        Piece::S => vec![(0, 0), (1, 0), (1, 1), (2, 1)],
        Piece::Z => vec![(0, 1), (1, 1), (1, 0), (2, 0)],
        Piece::J => vec![(0, 0), (0, 1), (1, 1), (2, 1)],
        Piece::L => vec![(0, 1), (1, 1), (2, 1), (2, 0)],
    }
}

fn normalize(cells: &[(i32, i32)]) -> BTreeSet<(i32, i32)> {
    let mx = cells.iter().map(|c| c.0).min().unwrap();
    let my = cells.iter().map(|c| c.1).min().unwrap();
    cells.iter().map(|&(x, y)| (x - mx, y - my)).collect()
}

/// Distinct orientations times horizontal positions on an empty board.
fn oracle_count(p: Piece) -> usize {
    let mut shape = base_shape(p);
    let mut seen = BTreeSet::new();
    for _ in 0..4 {
        seen.insert(normalize(&shape));
        shape = shape.iter().map(|&(x, y)| (y, -x)).collect();
    }
    seen.iter()
        .map(|s| {
            let width = s.iter().map(|c| c.0).max().unwrap() as usize + 1;
            COLS + 1 - width
        })
        .sum()
}

#[test]
fn empty_board_placements_match_enumeration() {
    let board = Board::empty();
    for p in Piece::ALL {
        assert_eq!(board.legal_placements(p).len(), oracle_count(p), "{p}");
    }
    let counts: Vec<usize> = Piece::ALL.iter().map(|&p| board.legal_placements(p).len()).collect();
    assert_eq!(counts, [17, 9, 34, 17, 17, 34, 34]);
}

#[test]
fn random_placements_conserve_cells() {
    let env = TetrisEnv::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut state = env.initial_state(&mut rng);
    let mut done = 0;
    while done < 100_000 {
        let moves = state.legal_placements();
        if moves.is_empty() {
            state = env.initial_state(&mut rng);
            continue;
        }
        let m = moves[rng.gen_range(0..moves.len())];
        let (next, lines) = state.board.apply_placement(state.piece, m).unwrap();
        assert_eq!(next.filled_cells() + 10 * lines, state.board.filled_cells() + 4);
        assert!(next.rows().iter().all(|&r| r != (1 << COLS) - 1));
        state = TetrisState::new(next, Piece::ALL[rng.gen_range(0..7)]);
        done += 1;
    }
}

#[test]
fn random_policy_games_terminate() {
    let records = play_games(&RandomPolicy, 1000, 11, 10_000);
    assert_eq!(records.len(), 1000);
    assert!(records.iter().all(|r| r.terminated && r.steps < 10_000));
}

#[test]
fn baseline_policy_clears_about_a_hundred_lines() {
    let records = play_games(&baseline_policy(TetrisEnv::default()), 1000, 7, 100_000);
    let mean = records.iter().map(|r| r.lines as f64).sum::<f64>() / records.len() as f64;
    assert!((100.0..=150.0).contains(&mean), "mean {mean}");
}

/// Shifting the constant weight moves every successor value by the same
/// amount unless some successor is terminal, so the greedy choice stays optimal
/// at states where every placement leaves a live board.
#[test]
fn constant_shift_keeps_greedy_choice() {
    let env = TetrisEnv::default();
    let base = GreedyPolicy::new(BASELINE_WEIGHTS.to_vec(), env).unwrap();
    let mut shifted = BASELINE_WEIGHTS;
    shifted[21] += 37.5;
    let shifted = GreedyPolicy::new(shifted.to_vec(), env).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut checked = 0;
    let mut state = env.initial_state(&mut rng);
    while checked < 2000 {
        let moves = state.legal_placements();
        if moves.is_empty() {
            state = env.initial_state(&mut rng);
            continue;
        }
        let all_live = moves.iter().all(|&m| state.board.apply_placement(state.piece, m).unwrap().0.accepted_pieces() == 7);
        let a = base.choose(&state, &moves, &mut rng);
        if all_live {
            // Rounding can reorder exact ties, so compare values.
            let b = shifted.choose(&state, &moves, &mut rng);
            let value = |i: usize| env.successor_expectation(&state, moves[i], &BASELINE_WEIGHTS).unwrap();
            assert!((value(a) - value(b)).abs() <= 1e-9, "{} vs {}", value(a), value(b));
            checked += 1;
        }
        let pick = if rng.gen_bool(0.3) { rng.gen_range(0..moves.len()) } else { a };
        state = env.step(&state, pick, &mut rng).unwrap();
    }
}
