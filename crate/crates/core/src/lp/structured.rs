//! Block-structured interior-point solver for sampled smoothed ALPs.
//!
//! The LP has weight variables `r ∈ R^K` and one slack per sampled state
//! `s ∈ R^S`:
//!
//! ```text
//!     maximize    cᵀr − κ dᵀs                    (penalty mode, κ > 0)
//!     or          cᵀr   with  dᵀs ≤ θ            (budget mode)
//!     subject to  A11 r + A12 s ≤ b,  s ≥ 0,  l ≤ r ≤ u
//! ```
//!
//! Every row of `A12` holds a single `−1` in the column of its state, so the
//! slack block of the barrier Hessian is diagonal plus the rank-one term
//! contributed by the budget row. Eliminating `Δs` with Sherman–Morrison
//! leaves a `K × K` Schur complement, and a Newton step costs
//! `O(K² S + K³)`.

use crate::error::{Result, SalpError};
use crate::formulation::{SalpSolution, WeightVector};
use crate::linalg::{Cholesky, Matrix};
use crate::scalar::{dot, Scalar};

use super::ipm::{self, IpmIterate, NormalSystem};
use super::{DenseLp, LpOptions, SolverReport};

/// Default half-width of the box on `r`; wide enough never to bind.
pub const DEFAULT_WEIGHT_BOUND: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlackMode<T> {
    /// `dᵀs ≤ θ`; an infinite budget drops the row.
    Budget { theta: T },
    /// Objective term `−κ dᵀs`.
    Penalty { coefficient: T },
}

#[derive(Debug, Clone)]
pub struct StructuredSalpLp<T> {
    a11: Matrix<T>,
    slack_of_row: Vec<usize>,
    rhs: Vec<T>,
    objective: Vec<T>,
    slack_measure: Vec<T>,
    mode: SlackMode<T>,
    lower: Vec<T>,
    upper: Vec<T>,
    max_actions: usize,
}

impl<T: Scalar> StructuredSalpLp<T> {
    /// `slack_of_row[i]` names the slack column holding the `−1` of row `i`;
    /// `slack_measure` is `d`.
    pub fn new(
        a11: Matrix<T>,
        slack_of_row: Vec<usize>,
        rhs: Vec<T>,
        objective: Vec<T>,
        slack_measure: Vec<T>,
        mode: SlackMode<T>,
    ) -> Result<Self> {
        let k = a11.cols();
        let s = slack_measure.len();
        if objective.len() != k {
            return Err(SalpError::Dimension(format!("objective has {} entries, K = {k}", objective.len())));
        }
        if slack_of_row.len() != a11.rows() || rhs.len() != a11.rows() {
            return Err(SalpError::Dimension("one slack index and rhs entry per constraint row".into()));
        }
        let mut rows_per_slack = vec![0usize; s];
        for &j in &slack_of_row {
            if j >= s {
                return Err(SalpError::Dimension(format!("slack index {j} out of range for S = {s}")));
            }
            rows_per_slack[j] += 1;
        }
        if let Some(j) = rows_per_slack.iter().position(|&c| c == 0) {
            return Err(SalpError::InvalidArgument(format!("slack {j} is not referenced by any constraint")));
        }
        if slack_measure.iter().any(|&d| !(d >= T::zero()) || !d.is_finite()) {
            return Err(SalpError::InvalidArgument("slack measure must be nonnegative and finite".into()));
        }
        match mode {
            SlackMode::Budget { theta } if !(theta >= T::zero()) => {
                return Err(SalpError::InvalidArgument(format!("budget {theta} must be nonnegative")))
            }
            SlackMode::Penalty { coefficient } if !(coefficient > T::zero()) || !coefficient.is_finite() => {
                return Err(SalpError::InvalidArgument("penalty coefficient must be positive".into()))
            }
            _ => {}
        }
        let finite = |v: &[T]| v.iter().all(|x| x.is_finite());
        if !finite(a11.as_slice()) || !finite(&rhs) || !finite(&objective) {
            return Err(SalpError::InvalidArgument("LP data must be finite".into()));
        }
        let max_actions = rows_per_slack.iter().copied().max().unwrap_or(0);
        let bound = T::lit(DEFAULT_WEIGHT_BOUND);
        Ok(Self {
            a11,
            slack_of_row,
            rhs,
            objective,
            slack_measure,
            mode,
            lower: vec![-bound; k],
            upper: vec![bound; k],
            max_actions,
        })
    }

    pub fn with_bounds(mut self, lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        let k = self.k();
        if lower.len() != k || upper.len() != k {
            return Err(SalpError::Dimension("box bounds need K entries".into()));
        }
        if lower.iter().zip(&upper).any(|(&l, &u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(SalpError::InvalidArgument("box bounds must be finite with lower < upper".into()));
        }
        self.lower = lower;
        self.upper = upper;
        Ok(self)
    }

    pub fn with_mode(&self, mode: SlackMode<T>) -> Result<Self> {
        Self::new(
            self.a11.clone(),
            self.slack_of_row.clone(),
            self.rhs.clone(),
            self.objective.clone(),
            self.slack_measure.clone(),
            mode,
        )?
        .with_bounds(self.lower.clone(), self.upper.clone())
    }

    pub fn k(&self) -> usize {
        self.a11.cols()
    }

    pub fn n_slacks(&self) -> usize {
        self.slack_measure.len()
    }

    pub fn n_rows(&self) -> usize {
        self.a11.rows()
    }

    pub fn max_actions(&self) -> usize {
        self.max_actions
    }

    pub fn a11(&self) -> &Matrix<T> {
        &self.a11
    }

    pub fn slack_of_row(&self) -> &[usize] {
        &self.slack_of_row
    }

    pub fn rhs(&self) -> &[T] {
        &self.rhs
    }

    pub fn objective(&self) -> &[T] {
        &self.objective
    }

    pub fn slack_measure(&self) -> &[T] {
        &self.slack_measure
    }

    pub fn mode(&self) -> SlackMode<T> {
        self.mode
    }

    pub fn bounds(&self) -> (&[T], &[T]) {
        (&self.lower, &self.upper)
    }

    fn has_budget_row(&self) -> bool {
        matches!(self.mode, SlackMode::Budget { theta } if theta.is_finite())
    }

    /// Objective of `(r, s)` in the maximization sense.
    pub fn objective_value(&self, r: &[T], s: &[T]) -> T {
        let base = dot(&self.objective, r);
        match self.mode {
            SlackMode::Budget { .. } => base,
            SlackMode::Penalty { coefficient } => base - coefficient * dot(&self.slack_measure, s),
        }
    }

    /// Largest violation of any constraint at `(r, s)`.
    pub fn max_violation(&self, r: &[T], s: &[T]) -> T {
        let mut worst = T::zero();
        for i in 0..self.n_rows() {
            let lhs = dot(self.a11.row(i), r) - s[self.slack_of_row[i]];
            worst = worst.max(lhs - self.rhs[i]);
        }
        if let SlackMode::Budget { theta } = self.mode {
            if theta.is_finite() {
                worst = worst.max(dot(&self.slack_measure, s) - theta);
            }
        }
        for &sj in s {
            worst = worst.max(-sj);
        }
        for k in 0..self.k() {
            worst = worst.max(r[k] - self.upper[k]).max(self.lower[k] - r[k]);
        }
        worst
    }

    /// The same program as a [`DenseLp`] over `(r, s)`, for cross-checking.
    pub fn to_dense(&self) -> Result<DenseLp<T>> {
        let (k, s) = (self.k(), self.n_slacks());
        let budget = self.has_budget_row();
        let m = self.n_rows() + usize::from(budget) + 2 * k;
        let mut a = Matrix::zeros(m, k + s);
        let mut b = self.rhs.clone();
        for i in 0..self.n_rows() {
            a.row_mut(i)[..k].copy_from_slice(self.a11.row(i));
            a[(i, k + self.slack_of_row[i])] = -T::one();
        }
        let mut c = self.objective.clone();
        match self.mode {
            SlackMode::Budget { theta } => {
                c.extend(std::iter::repeat(T::zero()).take(s));
                if budget {
                    a.row_mut(self.n_rows())[k..].copy_from_slice(&self.slack_measure);
                    b.push(theta);
                }
            }
            SlackMode::Penalty { coefficient } => c.extend(self.slack_measure.iter().map(|&d| -coefficient * d)),
        }
        let base = self.n_rows() + usize::from(budget);
        for j in 0..k {
            a[(base + 2 * j, j)] = T::one();
            b.push(self.upper[j]);
            a[(base + 2 * j + 1, j)] = -T::one();
            b.push(-self.lower[j]);
        }
        DenseLp::new(c, a, b)?.with_lower_bounds((0..k + s).map(|j| (j >= k).then_some(T::zero())).collect())
    }

    /// Barrier Hessian `Gᵀ diag(d) G` in block form for row weights `d`,
    /// ordered as (constraint rows, budget row if any, `s ≥ 0` rows, upper
    /// box rows, lower box rows).
    pub fn assemble_hessian(&self, d: &[T], reg: T) -> StructuredHessian<T> {
        let (k, s, m1) = (self.k(), self.n_slacks(), self.n_rows());
        let mut h11 = Matrix::zeros(k, k);
        let mut h12 = Matrix::zeros(k, s);
        let mut diag = vec![reg; s];
        for i in 0..m1 {
            let row = self.a11.row(i);
            let di = d[i];
            let j = self.slack_of_row[i];
            for a in 0..k {
                let ga = row[a] * di;
                if ga == T::zero() {
                    continue;
                }
                let hrow = h11.row_mut(a);
                for b in 0..=a {
                    hrow[b] += ga * row[b];
                }
                h12[(a, j)] -= ga;
            }
            diag[j] += di;
        }
        let mut next = m1;
        let mut rank_one = vec![T::zero(); s];
        if self.has_budget_row() {
            let root = d[next].sqrt();
            for (u, &dj) in rank_one.iter_mut().zip(&self.slack_measure) {
                *u = root * dj;
            }
            next += 1;
        }
        for (j, dj) in diag.iter_mut().enumerate() {
            *dj += d[next + j];
        }
        next += s;
        for a in 0..k {
            h11[(a, a)] += d[next + a] + d[next + k + a] + reg;
            for b in 0..a {
                h11[(b, a)] = h11[(a, b)];
            }
        }
        StructuredHessian { h11, h12, diag, rank_one }
    }
}

/// `H = [[H11, H12], [H12ᵀ, diag + u uᵀ]]`.
#[derive(Debug, Clone)]
pub struct StructuredHessian<T> {
    pub h11: Matrix<T>,
    pub h12: Matrix<T>,
    pub diag: Vec<T>,
    pub rank_one: Vec<T>,
}

struct FactoredHessian<T> {
    h12: Matrix<T>,
    diag_inv: Vec<T>,
    /// `Λ⁻¹ u`
    lu: Vec<T>,
    /// `1 + uᵀ Λ⁻¹ u`
    denom: T,
    rank_one: Vec<T>,
    schur: Cholesky<T>,
}

impl<T: Scalar> StructuredHessian<T> {
    fn factor(self) -> Result<FactoredHessian<T>> {
        let (k, s) = (self.h11.rows(), self.diag.len());
        if self.h12.rows() != k || self.h12.cols() != s || self.rank_one.len() != s || self.h11.cols() != k {
            return Err(SalpError::Dimension("inconsistent Hessian blocks".into()));
        }
        if let Some(j) = self.diag.iter().position(|&v| !(v > T::zero())) {
            return Err(SalpError::NotPositiveDefinite(format!("H22 diagonal entry {j} is {}", self.diag[j])));
        }
        let diag_inv: Vec<T> = self.diag.iter().map(|&v| T::one() / v).collect();
        let lu: Vec<T> = self.rank_one.iter().zip(&diag_inv).map(|(&u, &di)| u * di).collect();
        let denom = T::one() + dot(&self.rank_one, &lu);

        // Schur complement H11 − H12 H22⁻¹ H12ᵀ with
        // H22⁻¹ = Λ⁻¹ − (Λ⁻¹u)(Λ⁻¹u)ᵀ / (1 + uᵀΛ⁻¹u).
        let mut schur = self.h11.clone();
        let mut scaled = vec![T::zero(); s];
        for a in 0..k {
            let ra = self.h12.row(a);
            for (sc, (&h, &di)) in scaled.iter_mut().zip(ra.iter().zip(&diag_inv)) {
                *sc = h * di;
            }
            for b in 0..=a {
                let v = dot(&scaled, self.h12.row(b));
                schur[(a, b)] -= v;
            }
        }
        let p = self.h12.mul_vec(&lu);
        for a in 0..k {
            for b in 0..=a {
                schur[(a, b)] += p[a] * p[b] / denom;
            }
        }
        let schur = Cholesky::factor(&schur)?;
        Ok(FactoredHessian { h12: self.h12, diag_inv, lu, denom, rank_one: self.rank_one, schur })
    }
}

impl<T: Scalar> FactoredHessian<T> {
    fn h22_solve(&self, v: &[T]) -> Vec<T> {
        let coef = dot(&self.rank_one, &v.iter().zip(&self.diag_inv).map(|(&a, &b)| a * b).collect::<Vec<_>>())
            / self.denom;
        v.iter()
            .zip(&self.diag_inv)
            .zip(&self.lu)
            .map(|((&vi, &di), &li)| vi * di - li * coef)
            .collect()
    }

    fn solve(&self, rhs: &[T]) -> Vec<T> {
        let k = self.h12.rows();
        let (rr, rs) = rhs.split_at(k);
        let t = self.h22_solve(rs);
        let h12t = self.h12.mul_vec(&t);
        let reduced: Vec<T> = rr.iter().zip(&h12t).map(|(&a, &b)| a - b).collect();
        let dr = self.schur.solve(&reduced);
        let h12_dr = self.h12.tr_mul_vec(&dr);
        let rest: Vec<T> = rs.iter().zip(&h12_dr).map(|(&a, &b)| a - b).collect();
        let ds = self.h22_solve(&rest);
        let mut out = dr;
        out.extend(ds);
        out
    }
}

/// Solves `H [Δr; Δs] = −g` by eliminating `Δs` (Sherman–Morrison on
/// `H22`) and factoring the `K × K` Schur complement.
pub fn newton_step_structured<T: Scalar>(hessian: &StructuredHessian<T>, g: &[T]) -> Result<Vec<T>> {
    let n = hessian.h11.rows() + hessian.diag.len();
    if g.len() != n {
        return Err(SalpError::Dimension(format!("gradient has {} entries, expected {n}", g.len())));
    }
    let f = hessian.clone().factor()?;
    let neg: Vec<T> = g.iter().map(|&v| -v).collect();
    Ok(f.solve(&neg))
}

/// Which inequality rows the interior-point method sees. A zero budget
/// pins every slack with positive measure at zero; pinned slacks keep their
/// column but lose their `s ≥ 0` row, and the budget row is dropped.
#[derive(Debug, Clone, PartialEq)]
struct RowLayout {
    k: usize,
    m1: usize,
    budget: bool,
    pinned: Vec<bool>,
    /// Row offset of each unpinned slack's sign row.
    sign_row: Vec<Option<usize>>,
    n_free: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RowKey {
    Constraint(usize),
    Budget,
    Sign(usize),
    Upper(usize),
    Lower(usize),
}

impl RowLayout {
    fn of<T: Scalar>(lp: &StructuredSalpLp<T>) -> Self {
        let zero_budget = matches!(lp.mode, SlackMode::Budget { theta } if theta == T::zero());
        let pinned: Vec<bool> = lp.slack_measure.iter().map(|&d| zero_budget && d > T::zero()).collect();
        let mut n_free = 0;
        let sign_row = pinned
            .iter()
            .map(|&p| {
                (!p).then(|| {
                    n_free += 1;
                    n_free - 1
                })
            })
            .collect();
        Self { k: lp.k(), m1: lp.n_rows(), budget: lp.has_budget_row() && !zero_budget, pinned, sign_row, n_free }
    }

    fn sign_base(&self) -> usize {
        self.m1 + usize::from(self.budget)
    }

    fn box_base(&self) -> usize {
        self.sign_base() + self.n_free
    }

    fn n_rows(&self) -> usize {
        self.box_base() + 2 * self.k
    }

    fn index(&self, key: RowKey) -> Option<usize> {
        match key {
            RowKey::Constraint(i) => Some(i),
            RowKey::Budget => self.budget.then_some(self.m1),
            RowKey::Sign(j) => self.sign_row[j].map(|q| self.sign_base() + q),
            RowKey::Upper(a) => Some(self.box_base() + a),
            RowKey::Lower(a) => Some(self.box_base() + self.k + a),
        }
    }

    fn keys(&self) -> impl Iterator<Item = RowKey> + '_ {
        (0..self.m1)
            .map(RowKey::Constraint)
            .chain(self.budget.then_some(RowKey::Budget))
            .chain((0..self.pinned.len()).filter(|&j| !self.pinned[j]).map(RowKey::Sign))
            .chain((0..self.k).map(RowKey::Upper))
            .chain((0..self.k).map(RowKey::Lower))
    }
}

struct StructuredSystem<'a, T> {
    lp: &'a StructuredSalpLp<T>,
    layout: RowLayout,
    f: Vec<T>,
    h: Vec<T>,
    /// Constraint rows grouped by slack: `rows[offsets[j]..offsets[j + 1]]`.
    offsets: Vec<usize>,
    rows: Vec<usize>,
    factored: Option<FactoredHessian<T>>,
}

impl<'a, T: Scalar> StructuredSystem<'a, T> {
    fn new(lp: &'a StructuredSalpLp<T>) -> Self {
        let (k, s) = (lp.k(), lp.n_slacks());
        let layout = RowLayout::of(lp);
        let mut f: Vec<T> = lp.objective.iter().map(|&c| -c).collect();
        match lp.mode {
            SlackMode::Penalty { coefficient } => f.extend(lp.slack_measure.iter().map(|&d| coefficient * d)),
            SlackMode::Budget { .. } => f.extend(std::iter::repeat(T::zero()).take(s)),
        }
        let mut h = lp.rhs.clone();
        if let SlackMode::Budget { theta } = lp.mode {
            if layout.budget {
                h.push(theta);
            }
        }
        h.extend(std::iter::repeat(T::zero()).take(layout.n_free));
        h.extend(lp.upper.iter().copied());
        h.extend(lp.lower.iter().map(|&l| -l));
        debug_assert_eq!(f.len(), k + s);
        debug_assert_eq!(h.len(), layout.n_rows());
        let mut offsets = vec![0usize; s + 1];
        for &j in &lp.slack_of_row {
            offsets[j + 1] += 1;
        }
        for j in 0..s {
            offsets[j + 1] += offsets[j];
        }
        let mut fill = offsets.clone();
        let mut rows = vec![0; lp.n_rows()];
        for (i, &j) in lp.slack_of_row.iter().enumerate() {
            rows[fill[j]] = i;
            fill[j] += 1;
        }
        Self { lp, layout, f, h, offsets, rows, factored: None }
    }

    /// Factors the barrier Hessian without forming `H11` and subtracting.
    /// Eliminating slack `j` from the rows `i` that share it leaves
    /// `Σ dᵢ (aᵢ − ā)(aᵢ − ā)ᵀ + (D e / (D + e)) ā āᵀ`, where `D = Σ dᵢ`,
    /// `ā` is the `d`-weighted mean row and `e` the weight of `sⱼ ≥ 0`;
    /// both terms are positive semidefinite, so large `dᵢ` cannot cancel.
    /// A pinned slack behaves as `e = ∞` and is decoupled from `r`.
    fn factor_grouped(&self, d: &[T], reg: T) -> Result<FactoredHessian<T>> {
        let lp = self.lp;
        let layout = &self.layout;
        let (k, s) = (lp.k(), lp.n_slacks());
        let box_row = layout.box_base();
        let mut schur = Matrix::zeros(k, k);
        let mut h12 = Matrix::zeros(k, s);
        let mut diag = vec![T::zero(); s];
        let mut mean = vec![T::zero(); k];
        let mut centered = vec![T::zero(); k];
        for j in 0..s {
            let group = &self.rows[self.offsets[j]..self.offsets[j + 1]];
            let total: T = group.iter().map(|&i| d[i]).sum();
            mean.iter_mut().for_each(|v| *v = T::zero());
            for &i in group {
                for (m, &a) in mean.iter_mut().zip(lp.a11.row(i)) {
                    *m += d[i] * a;
                }
            }
            let pinned = layout.pinned[j];
            if !pinned {
                for a in 0..k {
                    h12[(a, j)] = -mean[a];
                }
            }
            if total > T::zero() {
                mean.iter_mut().for_each(|v| *v /= total);
            }
            for &i in group {
                for ((c, &a), &m) in centered.iter_mut().zip(lp.a11.row(i)).zip(&mean) {
                    *c = a - m;
                }
                for a in 0..k {
                    let ca = d[i] * centered[a];
                    if ca == T::zero() {
                        continue;
                    }
                    let row = schur.row_mut(a);
                    for b in 0..=a {
                        row[b] += ca * centered[b];
                    }
                }
            }
            let w = match layout.index(RowKey::Sign(j)) {
                Some(q) => {
                    let e = d[q] + reg;
                    diag[j] = total + e;
                    total * e / diag[j]
                }
                None => {
                    diag[j] = T::one();
                    total
                }
            };
            for a in 0..k {
                let wa = w * mean[a];
                let row = schur.row_mut(a);
                for b in 0..=a {
                    row[b] += wa * mean[b];
                }
            }
        }
        let diag_inv: Vec<T> = diag.iter().map(|&v| T::one() / v).collect();
        let mut rank_one = vec![T::zero(); s];
        if let Some(bi) = layout.index(RowKey::Budget) {
            let root = d[bi].sqrt();
            for (u, &dj) in rank_one.iter_mut().zip(&lp.slack_measure) {
                *u = root * dj;
            }
        }
        let lu: Vec<T> = rank_one.iter().zip(&diag_inv).map(|(&u, &di)| u * di).collect();
        let denom = T::one() + dot(&rank_one, &lu);
        let p = h12.mul_vec(&lu);
        for a in 0..k {
            schur[(a, a)] += d[box_row + a] + d[box_row + k + a] + reg;
            for b in 0..=a {
                schur[(a, b)] += p[a] * p[b] / denom;
            }
        }
        for a in 0..k {
            for b in 0..a {
                schur[(b, a)] = schur[(a, b)];
            }
        }
        let schur = Cholesky::factor(&schur)?;
        Ok(FactoredHessian { h12, diag_inv, lu, denom, rank_one, schur })
    }
}

impl<T: Scalar> NormalSystem<T> for StructuredSystem<'_, T> {
    fn n_vars(&self) -> usize {
        self.lp.k() + self.lp.n_slacks()
    }

    fn n_rows(&self) -> usize {
        self.h.len()
    }

    fn objective(&self) -> &[T] {
        &self.f
    }

    fn rhs(&self) -> &[T] {
        &self.h
    }

    fn mul(&self, x: &[T], out: &mut [T]) {
        let lp = self.lp;
        let layout = &self.layout;
        let (k, m1) = (lp.k(), lp.n_rows());
        let (r, sl) = x.split_at(k);
        for i in 0..m1 {
            let j = lp.slack_of_row[i];
            let sj = if layout.pinned[j] { T::zero() } else { sl[j] };
            out[i] = dot(lp.a11.row(i), r) - sj;
        }
        if let Some(bi) = layout.index(RowKey::Budget) {
            out[bi] = dot(&lp.slack_measure, sl);
        }
        let base = layout.sign_base();
        for (j, q) in layout.sign_row.iter().enumerate() {
            if let Some(q) = q {
                out[base + q] = -sl[j];
            }
        }
        let next = layout.box_base();
        for a in 0..k {
            out[next + a] = r[a];
            out[next + k + a] = -r[a];
        }
    }

    fn tr_mul(&self, z: &[T], out: &mut [T]) {
        let lp = self.lp;
        let layout = &self.layout;
        let (k, m1) = (lp.k(), lp.n_rows());
        out.iter_mut().for_each(|o| *o = T::zero());
        let (or, os) = out.split_at_mut(k);
        for i in 0..m1 {
            let zi = z[i];
            if zi == T::zero() {
                continue;
            }
            for (o, &a) in or.iter_mut().zip(lp.a11.row(i)) {
                *o += a * zi;
            }
            os[lp.slack_of_row[i]] -= zi;
        }
        if let Some(bi) = layout.index(RowKey::Budget) {
            let zb = z[bi];
            for (o, &d) in os.iter_mut().zip(&lp.slack_measure) {
                *o += zb * d;
            }
        }
        let base = layout.sign_base();
        for (j, q) in layout.sign_row.iter().enumerate() {
            match q {
                Some(q) => os[j] -= z[base + q],
                None => os[j] = T::zero(),
            }
        }
        let next = layout.box_base();
        for a in 0..k {
            or[a] += z[next + a] - z[next + k + a];
        }
    }

    fn factor(&mut self, d: &[T], reg: T) -> Result<()> {
        self.factored = Some(self.factor_grouped(d, reg)?);
        Ok(())
    }

    fn solve(&self, rhs: &[T]) -> Vec<T> {
        self.factored.as_ref().expect("factor before solve").solve(rhs)
    }
}

fn extract_solution<T: Scalar>(
    lp: &StructuredSalpLp<T>,
    iterate: IpmIterate<T>,
    snapshot: Option<IpmIterate<T>>,
) -> SalpSolution<T> {
    let k = lp.k();
    let r = iterate.x[..k].to_vec();
    let slacks: Vec<T> = iterate.x[k..].iter().map(|&v| v.max(T::zero())).collect();
    let objective = lp.objective_value(&r, &slacks);
    let budget_used = dot(&lp.slack_measure, &slacks);
    let theta = match lp.mode {
        SlackMode::Budget { theta } => Some(theta),
        SlackMode::Penalty { .. } => None,
    };
    SalpSolution {
        weights: WeightVector(r),
        slacks,
        objective,
        budget_used,
        theta,
        warm: Some(iterate),
        warm_mid: snapshot,
    }
}

/// Solves a structured sampled SALP from a cold start.
pub fn solve_salp_structured<T: Scalar>(
    lp: &StructuredSalpLp<T>,
    opts: &LpOptions<T>,
) -> Result<(SalpSolution<T>, SolverReport<T>)> {
    solve_from(lp, opts, None)
}

fn solve_from<T: Scalar>(
    lp: &StructuredSalpLp<T>,
    opts: &LpOptions<T>,
    warm: Option<IpmIterate<T>>,
) -> Result<(SalpSolution<T>, SolverReport<T>)> {
    let mut sys = StructuredSystem::new(lp);
    let out = ipm::solve(&mut sys, opts, warm)?;
    Ok((extract_solution(lp, out.iterate, out.snapshot), out.report))
}

/// Re-solves `lp` at budget `theta` starting from the optimal iterate of a
/// previous budget.
pub fn warm_start_resolve<T: Scalar>(
    lp: &StructuredSalpLp<T>,
    previous: &SalpSolution<T>,
    theta: T,
    opts: &LpOptions<T>,
) -> Result<(SalpSolution<T>, SolverReport<T>)> {
    let old_theta = match (lp.mode, previous.theta) {
        (SlackMode::Budget { .. }, Some(t)) => t,
        _ => return Err(SalpError::InvalidArgument("warm starts apply to budget-mode problems".into())),
    };
    if theta < old_theta {
        return Err(SalpError::InvalidArgument(format!("new budget {theta} is below previous {old_theta}")));
    }
    let target = lp.with_mode(SlackMode::Budget { theta })?;
    // Same budget: the final iterate is already optimal. Otherwise the
    // mid-solve snapshot is better centred for the shifted problem.
    let seed = if theta == old_theta { previous.warm.as_ref() } else { previous.warm_mid.as_ref().or(previous.warm.as_ref()) };
    let Some(prev) = seed else {
        return solve_salp_structured(&target, opts);
    };
    let from = RowLayout::of(&lp.with_mode(SlackMode::Budget { theta: old_theta })?);
    let to = RowLayout::of(&target);
    if prev.w.len() != from.n_rows() || prev.x.len() != lp.k() + lp.n_slacks() {
        return Err(SalpError::Dimension("previous solution belongs to a different problem".into()));
    }
    // Rows new to this budget start at unit slack and multiplier; the
    // interior-point warm start recomputes slacks from `x` anyway.
    let (w, z): (Vec<T>, Vec<T>) = to
        .keys()
        .map(|key| from.index(key).map_or((T::one(), T::one()), |i| (prev.w[i], prev.z[i])))
        .unzip();
    let start = IpmIterate { x: prev.x.clone(), w, z };
    solve_from(&target, opts, Some(start))
}
