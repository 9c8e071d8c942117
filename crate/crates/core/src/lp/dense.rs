use crate::error::{Result, SalpError};
use crate::linalg::{Cholesky, Matrix};
use crate::scalar::{dot, norm_inf, Scalar};

use super::ipm::{self, IpmIterate, NormalSystem};
use super::{DenseLp, LpOptions, SolverReport};

/// Inequality form of a [`DenseLp`] with per-row sparsity patterns so that
/// `Gᵀ D G` costs `Σ_i nnz_i²` rather than `m n²`.
struct DenseSystem<T> {
    g: Matrix<T>,
    nonzeros: Vec<Vec<usize>>,
    f: Vec<T>,
    h: Vec<T>,
    chol: Option<Cholesky<T>>,
}

impl<T: Scalar> DenseSystem<T> {
    fn from_lp(lp: &DenseLp<T>) -> Self {
        let n = lp.n_vars();
        let bounded: Vec<(usize, T)> = lp
            .lower_bounds
            .iter()
            .enumerate()
            .filter_map(|(j, l)| l.map(|l| (j, l)))
            .collect();
        let m = lp.n_constraints() + bounded.len();
        let mut g = Matrix::zeros(m, n);
        let mut h = Vec::with_capacity(m);
        for i in 0..lp.n_constraints() {
            g.row_mut(i).copy_from_slice(lp.constraints.row(i));
            h.push(lp.rhs[i]);
        }
        for (k, &(j, l)) in bounded.iter().enumerate() {
            g[(lp.n_constraints() + k, j)] = -T::one();
            h.push(-l);
        }
        let nonzeros = (0..m)
            .map(|i| (0..n).filter(|&j| g[(i, j)] != T::zero()).collect())
            .collect();
        let f = lp.objective.iter().map(|&c| -c).collect();
        Self { g, nonzeros, f, h, chol: None }
    }

    fn gram(&self, rows: impl Iterator<Item = (usize, T)>, reg: T) -> Matrix<T> {
        let n = self.g.cols();
        let mut hm = Matrix::zeros(n, n);
        for (i, di) in rows {
            let row = self.g.row(i);
            let nz = &self.nonzeros[i];
            for (p, &a) in nz.iter().enumerate() {
                let ga = row[a] * di;
                for &b in &nz[..=p] {
                    hm[(a.max(b), a.min(b))] += ga * row[b];
                }
            }
        }
        for j in 0..n {
            hm[(j, j)] += reg;
        }
        hm
    }
}

impl<T: Scalar> NormalSystem<T> for DenseSystem<T> {
    fn n_vars(&self) -> usize {
        self.g.cols()
    }

    fn n_rows(&self) -> usize {
        self.g.rows()
    }

    fn objective(&self) -> &[T] {
        &self.f
    }

    fn rhs(&self) -> &[T] {
        &self.h
    }

    fn mul(&self, x: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.g.row(i);
            *o = self.nonzeros[i].iter().fold(T::zero(), |acc, &j| acc + row[j] * x[j]);
        }
    }

    fn tr_mul(&self, z: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
        for (i, &zi) in z.iter().enumerate() {
            if zi == T::zero() {
                continue;
            }
            let row = self.g.row(i);
            for &j in &self.nonzeros[i] {
                out[j] += row[j] * zi;
            }
        }
    }

    fn factor(&mut self, d: &[T], reg: T) -> Result<()> {
        let hm = self.gram(d.iter().copied().enumerate(), reg);
        self.chol = Some(Cholesky::factor(&hm)?);
        Ok(())
    }

    fn solve(&self, rhs: &[T]) -> Vec<T> {
        self.chol.as_ref().expect("factor before solve").solve(rhs)
    }
}

/// Moves `x` onto the affine hull of its (strictly complementary) active
/// rows. Accepted only when it does not degrade feasibility or objective.
fn polish<T: Scalar>(sys: &DenseSystem<T>, it: &IpmIterate<T>, tol: T) -> Option<Vec<T>> {
    let m = sys.n_rows();
    let active: Vec<usize> = (0..m).filter(|&i| it.w[i] < it.z[i]).collect();
    if active.is_empty() {
        return None;
    }
    let mut gx = vec![T::zero(); m];
    sys.mul(&it.x, &mut gx);
    let violation = |gx: &[T]| {
        gx.iter().zip(&sys.h).fold(T::zero(), |acc, (&a, &b)| acc.max(a - b))
    };
    let base_violation = violation(&gx);
    let base_obj = dot(&sys.f, &it.x);

    let mut x = it.x.clone();
    let ones_active = active.iter().map(|&i| (i, T::one()));
    let gram = sys.gram(ones_active, T::zero());
    let trace = (0..gram.rows()).fold(T::zero(), |s, j| s + gram[(j, j)]);
    let mut reg_gram = gram.clone();
    let reg = T::epsilon() * T::lit(1e2) * (T::one() + trace);
    for j in 0..reg_gram.rows() {
        reg_gram[(j, j)] += reg;
    }
    let chol = Cholesky::factor(&reg_gram).ok()?;
    for _ in 0..3 {
        sys.mul(&x, &mut gx);
        let mut res = vec![T::zero(); m];
        for &i in &active {
            res[i] = sys.h[i] - gx[i];
        }
        let mut rhs = vec![T::zero(); sys.n_vars()];
        sys.tr_mul(&res, &mut rhs);
        let dx = chol.solve(&rhs);
        x.iter_mut().zip(&dx).for_each(|(a, &b)| *a += b);
    }
    sys.mul(&x, &mut gx);
    let scale = T::one() + norm_inf(&sys.h);
    let new_violation = violation(&gx);
    let new_obj = dot(&sys.f, &x);
    let feasible = new_violation <= base_violation.max(T::epsilon() * T::lit(1e3) * scale);
    let no_worse = new_obj <= base_obj + tol * (T::one() + base_obj.abs());
    (feasible && no_worse && x.iter().all(|v| v.is_finite())).then_some(x)
}

/// Solves a [`DenseLp`] with the primal-dual interior-point method.
///
/// The returned solution has relative duality gap at most `opts.tol` and
/// constraint violation at most `opts.tol · (1 + ‖b‖∞)`.
pub fn solve_dense_lp<T: Scalar>(lp: &DenseLp<T>, opts: &LpOptions<T>) -> Result<(Vec<T>, SolverReport<T>)> {
    if !(opts.tol > T::zero()) {
        return Err(SalpError::InvalidArgument("tolerance must be positive".into()));
    }
    let mut sys = DenseSystem::from_lp(lp);
    let out = ipm::solve(&mut sys, opts, None)?;
    let mut report = out.report;
    let x = if opts.polish {
        match polish(&sys, &out.iterate, opts.tol) {
            Some(x) => {
                report.objective = lp.objective_value(&x);
                x
            }
            None => out.iterate.x,
        }
    } else {
        out.iterate.x
    };
    Ok((x, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::SolverStatus;

    fn lp(c: Vec<f64>, a: Vec<Vec<f64>>, b: Vec<f64>) -> DenseLp<f64> {
        DenseLp::new(c, Matrix::from_rows(&a).unwrap(), b).unwrap()
    }

    #[test]
    fn one_variable() {
        let p = lp(vec![1.0], vec![vec![1.0]], vec![1.0]);
        let (x, rep) = solve_dense_lp(&p, &LpOptions::default()).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert_eq!(rep.status, SolverStatus::Optimal);
        assert!(rep.duality_gap <= 1e-8);
    }

    #[test]
    fn textbook_two_variable() {
        // max 3x + 5y s.t. x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18, x,y ≥ 0 → (2, 6), 36
        let p = lp(
            vec![3.0, 5.0],
            vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            vec![4.0, 12.0, 18.0],
        )
        .with_lower_bound(0, 0.0)
        .with_lower_bound(1, 0.0);
        let (x, rep) = solve_dense_lp(&p, &LpOptions::default()).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-10 && (x[1] - 6.0).abs() < 1e-10, "{x:?}");
        assert!((rep.objective - 36.0).abs() < 1e-9);
    }

    #[test]
    fn unbounded_is_reported() {
        let p = lp(vec![1.0], vec![vec![-1.0]], vec![0.0]);
        assert!(matches!(solve_dense_lp(&p, &LpOptions::default()), Err(SalpError::Unbounded)));
    }

    #[test]
    fn infeasible_is_reported() {
        let p = lp(vec![1.0], vec![vec![1.0], vec![-1.0]], vec![-1.0, 0.0]);
        assert!(matches!(solve_dense_lp(&p, &LpOptions::default()), Err(SalpError::Infeasible)));
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(DenseLp::new(vec![1.0, 2.0], Matrix::zeros(1, 1), vec![0.0]).is_err());
        assert!(DenseLp::new(vec![1.0], Matrix::zeros(2, 1), vec![0.0]).is_err());
    }
}
