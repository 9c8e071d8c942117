//! Binary dump of an assembled [`StructuredSalpLp`] for debugging.
//!
//! Little-endian layout:
//!
//! ```text
//! magic        8 bytes   "SALPLP01"
//! K, S, |A|    3 × u64   |A| is the largest number of rows sharing a slack
//! rows         u64
//! mode         u8        0 = budget, 1 = penalty
//! parameter    f64       θ (may be +∞) or the penalty coefficient
//! objective    K × f64
//! lower, upper K × f64 each
//! measure      S × f64
//! rhs          rows × f64
//! A11          rows × K × f64, row-major
//! A12 nnz      u64
//! A12 entries  nnz × (u64 row, u64 col, f64 value)
//! ```

use std::io::{Read, Write};

use crate::error::{Result, SalpError};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

use super::{SlackMode, StructuredSalpLp};

const MAGIC: &[u8; 8] = b"SALPLP01";

pub fn write_structured<T: Scalar, W: Write>(lp: &StructuredSalpLp<T>, mut out: W) -> Result<()> {
    let u = |out: &mut W, v: usize| out.write_all(&(v as u64).to_le_bytes());
    let f = |out: &mut W, v: T| out.write_all(&v.to_f64_lossy().to_le_bytes());
    out.write_all(MAGIC)?;
    u(&mut out, lp.k())?;
    u(&mut out, lp.n_slacks())?;
    u(&mut out, lp.max_actions())?;
    u(&mut out, lp.n_rows())?;
    let (tag, param) = match lp.mode() {
        SlackMode::Budget { theta } => (0u8, theta),
        SlackMode::Penalty { coefficient } => (1u8, coefficient),
    };
    out.write_all(&[tag])?;
    f(&mut out, param)?;
    let (lower, upper) = lp.bounds();
    for v in lp.objective().iter().chain(lower).chain(upper).chain(lp.slack_measure()).chain(lp.rhs()) {
        f(&mut out, *v)?;
    }
    for &v in lp.a11().as_slice() {
        f(&mut out, v)?;
    }
    u(&mut out, lp.n_rows())?;
    for (i, &j) in lp.slack_of_row().iter().enumerate() {
        u(&mut out, i)?;
        u(&mut out, j)?;
        out.write_all(&(-1.0f64).to_le_bytes())?;
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| SalpError::Parse(format!("truncated LP dump: {e}")))?;
        Ok(buf)
    }

    fn count(&mut self) -> Result<usize> {
        usize::try_from(u64::from_le_bytes(self.bytes()?)).map_err(|_| SalpError::Parse("count overflows usize".into()))
    }

    fn real<T: Scalar>(&mut self) -> Result<T> {
        Ok(T::lit(f64::from_le_bytes(self.bytes()?)))
    }

    fn reals<T: Scalar>(&mut self, n: usize) -> Result<Vec<T>> {
        (0..n).map(|_| self.real()).collect()
    }
}

pub fn read_structured<T: Scalar, R: Read>(input: R) -> Result<StructuredSalpLp<T>> {
    let mut r = Reader { inner: input };
    if &r.bytes::<8>()? != MAGIC {
        return Err(SalpError::Parse("not a structured LP dump".into()));
    }
    let k = r.count()?;
    let s = r.count()?;
    let _max_actions = r.count()?;
    let rows = r.count()?;
    let [tag] = r.bytes::<1>()?;
    let param: T = r.real()?;
    let mode = match tag {
        0 => SlackMode::Budget { theta: param },
        1 => SlackMode::Penalty { coefficient: param },
        t => return Err(SalpError::Parse(format!("unknown slack mode tag {t}"))),
    };
    let objective = r.reals(k)?;
    let lower = r.reals(k)?;
    let upper = r.reals(k)?;
    let measure = r.reals(s)?;
    let rhs = r.reals(rows)?;
    let a11 = Matrix::from_row_major(rows, k, r.reals(rows * k)?)?;
    let nnz = r.count()?;
    let mut slack_of_row = vec![usize::MAX; rows];
    for _ in 0..nnz {
        let (i, j) = (r.count()?, r.count()?);
        let v: f64 = r.real()?;
        if i >= rows || slack_of_row[i] != usize::MAX || v != -1.0 {
            return Err(SalpError::Parse(format!("malformed A12 entry ({i}, {j}, {v})")));
        }
        slack_of_row[i] = j;
    }
    if slack_of_row.contains(&usize::MAX) {
        return Err(SalpError::Parse("A12 row without an entry".into()));
    }
    StructuredSalpLp::new(a11, slack_of_row, rhs, objective, measure, mode)?.with_bounds(lower, upper)
}
