use std::fmt;
use std::str::FromStr;

use crate::error::TetrisError;

/// One of the seven tetrominoes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Piece {
    I,
    O,
    T,
    S,
    Z,
    J,
    L,
}

/// Orientation as four `(column, row)` offsets from its bottom-left corner.
pub type Cells = [(u8, u8); 4];

const I_ROT: &[Cells] = &[[(0, 0), (1, 0), (2, 0), (3, 0)], [(0, 0), (0, 1), (0, 2), (0, 3)]];
const O_ROT: &[Cells] = &[[(0, 0), (1, 0), (0, 1), (1, 1)]];
const T_ROT: &[Cells] = &[
    [(0, 0), (1, 0), (2, 0), (1, 1)],
    [(1, 0), (1, 1), (1, 2), (0, 1)],
    [(1, 0), (0, 1), (1, 1), (2, 1)],
    [(0, 0), (0, 1), (0, 2), (1, 1)],
];
const S_ROT: &[Cells] = &[[(0, 0), (1, 0), (1, 1), (2, 1)], [(1, 0), (1, 1), (0, 1), (0, 2)]];
const Z_ROT: &[Cells] = &[[(1, 0), (2, 0), (0, 1), (1, 1)], [(0, 0), (0, 1), (1, 1), (1, 2)]];
const J_ROT: &[Cells] = &[
    [(0, 0), (1, 0), (1, 1), (1, 2)],
    [(2, 0), (0, 1), (1, 1), (2, 1)],
    [(0, 0), (0, 1), (0, 2), (1, 2)],
    [(0, 0), (1, 0), (2, 0), (0, 1)],
];
const L_ROT: &[Cells] = &[
    [(0, 0), (1, 0), (0, 1), (0, 2)],
    [(0, 0), (1, 0), (2, 0), (2, 1)],
    [(1, 0), (1, 1), (1, 2), (0, 2)],
    [(0, 0), (0, 1), (1, 1), (2, 1)],
];

/// Column profile of an orientation, precomputed for drops.
#[derive(Debug, Clone, Copy)]
pub struct Orientation {
    pub cells: Cells,
    pub width: u8,
    pub height: u8,
    /// Lowest occupied row offset in each of the `width` columns.
    pub bottom: [u8; 4],
}

impl Orientation {
    const fn from_cells(cells: Cells) -> Self {
        let mut width = 0;
        let mut height = 0;
        let mut bottom = [u8::MAX; 4];
        let mut i = 0;
        while i < 4 {
            let (x, y) = cells[i];
            if x + 1 > width {
                width = x + 1;
            }
            if y + 1 > height {
                height = y + 1;
            }
            if y < bottom[x as usize] {
                bottom[x as usize] = y;
            }
            i += 1;
        }
        Self { cells, width, height, bottom }
    }
}

macro_rules! orientations {
    ($table:expr, $n:literal) => {{
        let mut out = [Orientation::from_cells($table[0]); $n];
        let mut i = 1;
        while i < $n {
            out[i] = Orientation::from_cells($table[i]);
            i += 1;
        }
        out
    }};
}

static I_OR: [Orientation; 2] = orientations!(I_ROT, 2);
static O_OR: [Orientation; 1] = orientations!(O_ROT, 1);
static T_OR: [Orientation; 4] = orientations!(T_ROT, 4);
static S_OR: [Orientation; 2] = orientations!(S_ROT, 2);
static Z_OR: [Orientation; 2] = orientations!(Z_ROT, 2);
static J_OR: [Orientation; 4] = orientations!(J_ROT, 4);
static L_OR: [Orientation; 4] = orientations!(L_ROT, 4);

impl Piece {
    pub const ALL: [Piece; 7] = [Piece::I, Piece::O, Piece::T, Piece::S, Piece::Z, Piece::J, Piece::L];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self, TetrisError> {
        Self::ALL.get(i).copied().ok_or(TetrisError::PieceIndex(i))
    }

    /// Distinct orientations in rotation order.
    pub fn orientations(self) -> &'static [Orientation] {
        match self {
            Piece::I => &I_OR,
            Piece::O => &O_OR,
            Piece::T => &T_OR,
            Piece::S => &S_OR,
            Piece::Z => &Z_OR,
            Piece::J => &J_OR,
            Piece::L => &L_OR,
        }
    }

    pub fn letter(self) -> char {
        ['I', 'O', 'T', 'S', 'Z', 'J', 'L'][self.index()]
    }
}

impl fmt::Display for Piece {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for Piece {
    type Err = TetrisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.trim().chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Self::ALL
                .iter()
                .copied()
                .find(|p| p.letter() == c.to_ascii_uppercase())
                .ok_or_else(|| TetrisError::Parse(format!("unknown piece `{s}`"))),
            _ => Err(TetrisError::Parse(format!("unknown piece `{s}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn normalize(cells: impl IntoIterator<Item = (i32, i32)>) -> BTreeSet<(i32, i32)> {
        let cells: Vec<_> = cells.into_iter().collect();
        let mx = cells.iter().map(|c| c.0).min().unwrap();
        let my = cells.iter().map(|c| c.1).min().unwrap();
        cells.into_iter().map(|(x, y)| (x - mx, y - my)).collect()
    }

    fn as_set(o: &Orientation) -> BTreeSet<(i32, i32)> {
        o.cells.iter().map(|&(x, y)| (x as i32, y as i32)).collect()
    }

    #[test]
    fn rotation_counts_and_cells() {
        let counts: Vec<usize> = Piece::ALL.iter().map(|p| p.orientations().len()).collect();
        assert_eq!(counts, [2, 1, 4, 2, 2, 4, 4]);
        for p in Piece::ALL {
            let sets: Vec<_> = p.orientations().iter().map(as_set).collect();
            for (o, set) in p.orientations().iter().zip(&sets) {
                assert_eq!(set.len(), 4);
                assert_eq!(normalize(set.iter().copied()), *set, "{p} not anchored at origin");
                assert_eq!(o.width as i32, set.iter().map(|c| c.0).max().unwrap() + 1);
            }
            let distinct: BTreeSet<_> = sets.iter().cloned().collect();
            assert_eq!(distinct.len(), sets.len(), "{p} repeats an orientation");
            // Closed under quarter turns, and the next entry is the next turn.
            for (i, set) in sets.iter().enumerate() {
                let turned = normalize(set.iter().map(|&(x, y)| (-y, x)));
                assert_eq!(turned, sets[(i + 1) % sets.len()], "{p} rotation {i}");
            }
        }
    }

    #[test]
    fn mirrored_pieces_are_distinct_shapes() {
        let shapes = |p: Piece| p.orientations().iter().map(as_set).collect::<BTreeSet<_>>();
        assert!(shapes(Piece::J).is_disjoint(&shapes(Piece::L)));
        assert!(shapes(Piece::S).is_disjoint(&shapes(Piece::Z)));
    }

    #[test]
    fn letters_round_trip() {
        for p in Piece::ALL {
            assert_eq!(p.letter().to_string().parse::<Piece>().unwrap(), p);
            assert_eq!(Piece::from_index(p.index()).unwrap(), p);
        }
        assert!("X".parse::<Piece>().is_err());
        assert!(Piece::from_index(7).is_err());
    }
}
