//! Linear architectures: basis matrices over explicit state spaces and the
//! weight vectors that combine them.

use std::ops::Deref;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SalpError};
use crate::linalg::{Cholesky, Matrix};
use crate::scalar::{dot, Scalar};

/// Weights `r` of a linear approximation `Φr`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector<T>(pub Vec<T>);

impl<T: Scalar> WeightVector<T> {
    pub fn new(r: Vec<T>) -> Result<Self> {
        if r.iter().any(|v| !v.is_finite()) {
            return Err(SalpError::InvalidArgument("weights must be finite".into()));
        }
        Ok(Self(r))
    }

    pub fn zeros(k: usize) -> Self {
        Self(vec![T::zero(); k])
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> Deref for WeightVector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

/// Basis functions over an explicit state space, stored as the columns of
/// `Φ ∈ R^{n × K}`.
#[derive(Debug, Clone)]
pub struct BasisMatrix<T> {
    phi: Matrix<T>,
    /// Coefficients `c` with `Φc = 1`, when the constant function is in the span.
    constant: Option<Vec<T>>,
}

impl<T: Scalar> BasisMatrix<T> {
    pub fn new(phi: Matrix<T>) -> Result<Self> {
        if phi.rows() == 0 || phi.cols() == 0 {
            return Err(SalpError::Dimension("basis needs at least one state and one function".into()));
        }
        if phi.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(SalpError::InvalidArgument("basis evaluations must be finite".into()));
        }
        let constant = constant_coefficients(&phi);
        Ok(Self { phi, constant })
    }

    /// One indicator per state.
    pub fn identity(n: usize) -> Self {
        Self::new(Matrix::identity(n)).expect("identity basis is valid")
    }

    pub fn constant(n: usize) -> Self {
        Self::new(Matrix::from_fn(n, 1, |_, _| T::one())).expect("constant basis is valid")
    }

    /// Constant column followed by `k − 1` columns uniform in `[-1, 1)`.
    pub fn random<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Self> {
        if k == 0 {
            return Err(SalpError::InvalidArgument("basis needs at least one function".into()));
        }
        Self::new(Matrix::from_fn(n, k, |_, j| {
            if j == 0 {
                T::one()
            } else {
                T::lit(rng.gen_range(-1.0..1.0))
            }
        }))
    }

    pub fn n_states(&self) -> usize {
        self.phi.rows()
    }

    pub fn k(&self) -> usize {
        self.phi.cols()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.phi
    }

    pub fn features(&self, state: usize) -> &[T] {
        self.phi.row(state)
    }

    pub fn has_constant(&self) -> bool {
        self.constant.is_some()
    }

    /// Coefficients `c` with `Φc = 1`.
    pub fn constant_coefficients(&self) -> Option<&[T]> {
        self.constant.as_deref()
    }

    pub fn require_constant(&self) -> Result<()> {
        if self.has_constant() {
            Ok(())
        } else {
            Err(SalpError::InvalidArgument("the constant function is not in the span of the basis".into()))
        }
    }

    /// `Φr`.
    pub fn evaluate(&self, r: &[T]) -> Result<Vec<T>> {
        if r.len() != self.k() {
            return Err(SalpError::Dimension(format!("weights have {} entries, K = {}", r.len(), self.k())));
        }
        Ok(self.phi.mul_vec(r))
    }

    /// `Φᵀv`.
    pub fn project(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.n_states() {
            return Err(SalpError::Dimension(format!("vector has {} entries, n = {}", v.len(), self.n_states())));
        }
        Ok(self.phi.tr_mul_vec(v))
    }
}

/// Least-squares fit of `1` by the columns of `Φ`; accepted when the residual
/// is at rounding level.
fn constant_coefficients<T: Scalar>(phi: &Matrix<T>) -> Option<Vec<T>> {
    let (n, k) = (phi.rows(), phi.cols());
    let scale = phi.as_slice().iter().fold(T::zero(), |m, v| m.max(v.abs())).max(T::one());
    let mut gram = phi.transpose().mul(phi);
    let ridge = T::epsilon() * T::from_usize_lossy(n) * scale * scale;
    for a in 0..k {
        gram[(a, a)] += ridge;
    }
    let rhs = phi.tr_mul_vec(&vec![T::one(); n]);
    let c = Cholesky::factor(&gram).ok()?.solve(&rhs);
    let tol = T::lit(1e-6).max(T::epsilon().sqrt());
    let fits = (0..n).all(|x| (dot(phi.row(x), &c) - T::one()).abs() <= tol);
    fits.then_some(c)
}
