use std::fmt;
use std::str::FromStr;

use crate::error::TetrisError;
use crate::piece::{Orientation, Piece};

pub const ROWS: usize = 20;
pub const COLS: usize = 10;
pub const NUM_FEATURES: usize = 22;
const FULL: u16 = (1 << COLS) - 1;

/// A 20 × 10 grid; `rows[0]` is the bottom row and bit `c` is column `c`.
/// Full rows never persist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Board {
    rows: [u16; ROWS],
}

/// Rotation index into [`Piece::orientations`] and the leftmost column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Placement {
    pub rotation: u8,
    pub column: u8,
}

impl Board {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_rows(rows: [u16; ROWS]) -> Result<Self, TetrisError> {
        if let Some(i) = rows.iter().position(|&r| r > FULL) {
            return Err(TetrisError::InvalidBoard(format!("row {i} has bits beyond column {}", COLS - 1)));
        }
        if let Some(i) = rows.iter().position(|&r| r == FULL) {
            return Err(TetrisError::InvalidBoard(format!("row {i} is full")));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[u16; ROWS] {
        &self.rows
    }

    pub fn cell(&self, column: usize, row: usize) -> bool {
        self.rows[row] >> column & 1 == 1
    }

    pub fn filled_cells(&self) -> u32 {
        self.rows.iter().map(|r| r.count_ones()).sum()
    }

    /// Row index of the highest filled cell plus one, per column.
    pub fn column_heights(&self) -> [u8; COLS] {
        let mut h = [0u8; COLS];
        for (i, &row) in self.rows.iter().enumerate().rev() {
            if row == 0 {
                continue;
            }
            for (c, hc) in h.iter_mut().enumerate() {
                if *hc == 0 && row >> c & 1 == 1 {
                    *hc = i as u8 + 1;
                }
            }
        }
        h
    }

    /// Row of the orientation's bottom edge after a gravity drop, if the
    /// piece ends up inside the board.
    fn landing(heights: &[u8; COLS], o: &Orientation, column: usize) -> Option<usize> {
        if column + o.width as usize > COLS {
            return None;
        }
        let y = (0..o.width as usize)
            .map(|dx| heights[column + dx].saturating_sub(o.bottom[dx]))
            .max()
            .unwrap_or(0) as usize;
        (y + o.height as usize <= ROWS).then_some(y)
    }

    /// Every gravity drop that fits, by rotation then column.
    pub fn legal_placements(&self, piece: Piece) -> Vec<Placement> {
        let heights = self.column_heights();
        let mut out = Vec::with_capacity(34);
        for (rot, o) in piece.orientations().iter().enumerate() {
            for col in 0..=COLS - o.width as usize {
                if Self::landing(&heights, o, col).is_some() {
                    out.push(Placement { rotation: rot as u8, column: col as u8 });
                }
            }
        }
        out
    }

    /// Whether `piece` has at least one legal placement.
    pub fn accepts(&self, piece: Piece) -> bool {
        self.accepts_with(&self.column_heights(), piece)
    }

    fn accepts_with(&self, heights: &[u8; COLS], piece: Piece) -> bool {
        piece
            .orientations()
            .iter()
            .any(|o| (0..=COLS - o.width as usize).any(|col| Self::landing(heights, o, col).is_some()))
    }

    /// Number of pieces that could still be placed on this board.
    pub fn accepted_pieces(&self) -> usize {
        let heights = self.column_heights();
        Piece::ALL.iter().filter(|&&p| self.accepts_with(&heights, p)).count()
    }

    /// Drops the piece and clears full rows; returns the new board and the
    /// number of lines cleared.
    pub fn apply_placement(&self, piece: Piece, placement: Placement) -> Result<(Board, u32), TetrisError> {
        let illegal = || TetrisError::IllegalPlacement {
            rotation: placement.rotation as usize,
            column: placement.column as usize,
        };
        let o = piece.orientations().get(placement.rotation as usize).ok_or_else(illegal)?;
        let col = placement.column as usize;
        let y = Self::landing(&self.column_heights(), o, col).ok_or_else(illegal)?;
        let mut rows = self.rows;
        for &(dx, dy) in &o.cells {
            rows[y + dy as usize] |= 1 << (col + dx as usize);
        }
        let mut out = [0u16; ROWS];
        let mut n = 0;
        for &r in rows.iter().filter(|&&r| r != FULL) {
            out[n] = r;
            n += 1;
        }
        Ok((Board { rows: out }, (ROWS - n) as u32))
    }

    /// Column heights, absolute neighbour height differences, maximum
    /// height, holes and a constant.
    pub fn features(&self) -> [f64; NUM_FEATURES] {
        let h = self.column_heights();
        let mut f = [0.0; NUM_FEATURES];
        for c in 0..COLS {
            f[c] = h[c] as f64;
        }
        for c in 0..COLS - 1 {
            f[COLS + c] = (h[c + 1] as f64 - h[c] as f64).abs();
        }
        f[2 * COLS - 1] = h.iter().copied().max().unwrap_or(0) as f64;
        f[2 * COLS] = self.holes() as f64;
        f[2 * COLS + 1] = 1.0;
        f
    }

    /// Empty cells with a filled cell somewhere above them.
    pub fn holes(&self) -> u32 {
        let h = self.column_heights();
        (0..COLS)
            .map(|c| {
                let filled = (0..h[c] as usize).filter(|&r| self.cell(c, r)).count() as u32;
                h[c] as u32 - filled
            })
            .sum()
    }

    /// Twenty 3-digit hex rows, bottom first, separated by `,`.
    pub fn to_hex(&self) -> String {
        self.rows.iter().map(|r| format!("{r:03x}")).collect::<Vec<_>>().join(",")
    }

    pub fn from_hex(text: &str) -> Result<Self, TetrisError> {
        let parts: Vec<&str> = text.trim().split(',').collect();
        if parts.len() != ROWS {
            return Err(TetrisError::Parse(format!("expected {ROWS} hex rows, found {}", parts.len())));
        }
        let mut rows = [0u16; ROWS];
        for (slot, part) in rows.iter_mut().zip(&parts) {
            *slot = u16::from_str_radix(part, 16).map_err(|e| TetrisError::Parse(format!("row `{part}`: {e}")))?;
        }
        Self::from_rows(rows)
    }
}

/// Twenty lines of ten `#`/`.` characters, top row first.
impl fmt::Display for Board {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in (0..ROWS).rev() {
            let line: String = (0..COLS).map(|c| if self.cell(c, row) { '#' } else { '.' }).collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

impl FromStr for Board {
    type Err = TetrisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lines: Vec<&str> = s.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        if lines.len() != ROWS {
            return Err(TetrisError::Parse(format!("expected {ROWS} lines, found {}", lines.len())));
        }
        let mut rows = [0u16; ROWS];
        for (i, line) in lines.iter().enumerate() {
            if line.chars().count() != COLS {
                return Err(TetrisError::Parse(format!("line {}: expected {COLS} cells", i + 1)));
            }
            let mut bits = 0u16;
            for (c, ch) in line.chars().enumerate() {
                match ch {
                    '#' => bits |= 1 << c,
                    '.' => {}
                    other => return Err(TetrisError::Parse(format!("line {}: unexpected `{other}`", i + 1))),
                }
            }
            rows[ROWS - 1 - i] = bits;
        }
        Self::from_rows(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Physical drop: start fully above the board, move down one row at a
    /// time until the next row would collide or hit the floor.
    fn simulate_drop(board: &Board, o: &Orientation, column: usize) -> Option<usize> {
        if column + o.width as usize > COLS {
            return None;
        }
        let occupied = |x: usize, y: usize| y < ROWS && board.cell(x, y);
        let collides = |y: usize| o.cells.iter().any(|&(dx, dy)| occupied(column + dx as usize, y + dy as usize));
        let mut y = ROWS;
        while y > 0 && !collides(y - 1) {
            y -= 1;
        }
        (y + o.height as usize <= ROWS).then_some(y)
    }

    fn oracle_placements(board: &Board, piece: Piece) -> Vec<Placement> {
        let mut out = Vec::new();
        for (rot, o) in piece.orientations().iter().enumerate() {
            for col in 0..COLS {
                if simulate_drop(board, o, col).is_some() {
                    out.push(Placement { rotation: rot as u8, column: col as u8 });
                }
            }
        }
        out
    }

    fn board(text: &str) -> Board {
        let pad = ROWS - text.lines().filter(|l| !l.trim().is_empty()).count();
        let full: String = std::iter::repeat("..........\n").take(pad).collect::<String>() + text;
        full.parse().unwrap()
    }

    #[test]
    fn empty_board_placement_counts() {
        let counts: Vec<usize> = Piece::ALL.iter().map(|&p| Board::empty().legal_placements(p).len()).collect();
        // I: 7 + 10, O: 9, T/J/L: 8 + 9 + 8 + 9, S/Z: 8 + 9.
        assert_eq!(counts, [17, 9, 34, 17, 17, 34, 34]);
        for p in Piece::ALL {
            assert_eq!(Board::empty().legal_placements(p), oracle_placements(&Board::empty(), p));
        }
    }

    /// Rows `0..n` each missing the cell in column `row % 10`.
    fn staircase(n: usize) -> Board {
        let mut r = [0u16; ROWS];
        for (i, row) in r.iter_mut().enumerate().take(n) {
            *row = FULL ^ (1 << (i % COLS));
        }
        Board::from_rows(r).unwrap()
    }

    #[test]
    fn tall_stacks_end_the_game() {
        // Nine columns reach the ceiling and the tenth stops one short.
        let capped = staircase(ROWS);
        assert_eq!(capped.column_heights().iter().filter(|&&h| h == 20).count(), 9);
        for p in Piece::ALL {
            assert!(capped.legal_placements(p).is_empty(), "{p}");
            assert!(oracle_placements(&capped, p).is_empty(), "{p}");
        }
        assert_eq!(capped.accepted_pieces(), 0);

        // One free row on top: a horizontal I fits over any four columns.
        let nineteen = staircase(ROWS - 1);
        let i_moves = nineteen.legal_placements(Piece::I);
        assert_eq!(i_moves.len(), 7);
        assert!(i_moves.iter().all(|m| m.rotation == 0));
        for p in Piece::ALL {
            assert_eq!(nineteen.legal_placements(p), oracle_placements(&nineteen, p), "{p}");
        }
    }

    #[test]
    fn vertical_i_clears_one_line() {
        let b = board("######.###\n");
        let (after, lines) = b.apply_placement(Piece::I, Placement { rotation: 1, column: 6 }).unwrap();
        assert_eq!(lines, 1);
        assert_eq!(after.to_string(), board("......#...\n......#...\n......#...\n").to_string());
        assert_eq!(after.filled_cells(), b.filled_cells() + 4 - 10);
    }

    #[test]
    fn two_lines_at_once() {
        let b = board("#.########\n#.########\n");
        let (after, lines) = b.apply_placement(Piece::I, Placement { rotation: 1, column: 1 }).unwrap();
        assert_eq!(lines, 2);
        assert_eq!(after, board(".#........\n.#........\n"));
    }

    #[test]
    fn illegal_placements_are_rejected() {
        let b = Board::empty();
        assert!(b.apply_placement(Piece::I, Placement { rotation: 0, column: 7 }).is_err());
        assert!(b.apply_placement(Piece::O, Placement { rotation: 1, column: 0 }).is_err());
        assert!(staircase(ROWS).apply_placement(Piece::O, Placement { rotation: 0, column: 4 }).is_err());
    }

    #[test]
    fn feature_examples() {
        let f = Board::empty().features();
        assert!(f[..21].iter().all(|&v| v == 0.0));
        assert_eq!(f[21], 1.0);
        let (b, _) = Board::empty().apply_placement(Piece::O, Placement { rotation: 0, column: 0 }).unwrap();
        let f = b.features();
        assert_eq!(&f[..10], &[2.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(&f[10..19], &[0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!((f[19], f[20], f[21]), (2.0, 0.0, 1.0));
        let single = board("...#......\n..........\n..........\n");
        assert_eq!(single.column_heights()[3], 3);
        assert_eq!(single.holes(), 2);
        assert_eq!(single.features()[20], 2.0);
    }

    #[test]
    fn text_and_hex_round_trip() {
        let b = board("..##......\n#.##.#...#\n");
        assert_eq!(b.to_string().parse::<Board>().unwrap(), b);
        assert_eq!(Board::from_hex(&b.to_hex()).unwrap(), b);
        assert!("#".parse::<Board>().is_err());
        assert!(Board::from_hex("3ff").is_err());
        assert!(Board::from_rows([FULL; ROWS]).is_err());
        assert!(Board::from_rows([0x400; ROWS]).is_err());
    }

    #[test]
    fn placements_match_physical_drops_on_rough_boards() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..300 {
            let mut rows = [0u16; ROWS];
            let height = rng.gen_range(0..=ROWS);
            for r in rows.iter_mut().take(height) {
                *r = rng.gen_range(0..FULL);
            }
            let b = Board::from_rows(rows).unwrap();
            for p in Piece::ALL {
                let legal = b.legal_placements(p);
                assert_eq!(legal, oracle_placements(&b, p));
                assert_eq!(legal.is_empty(), !b.accepts(p));
                for pl in legal {
                    let (after, lines) = b.apply_placement(p, pl).unwrap();
                    assert_eq!(after.filled_cells() + 10 * lines, b.filled_cells() + 4);
                }
            }
        }
    }
}
