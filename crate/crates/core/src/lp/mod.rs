//! Linear programming: a dense reference interior-point solver and the
//! block-structured solver for sampled smoothed ALPs.

mod dense;
pub mod dump;
mod ipm;
mod structured;

use std::time::Instant;

use serde::Serialize;

use crate::error::{Result, SalpError};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

pub use dense::solve_dense_lp;
pub use ipm::IpmIterate;
pub use structured::{
    newton_step_structured, solve_salp_structured, warm_start_resolve, SlackMode,
    StructuredHessian, StructuredSalpLp, DEFAULT_WEIGHT_BOUND,
};

/// `maximize cᵀx  s.t.  A x ≤ b,  x_j ≥ l_j` for the bounded coordinates.
#[derive(Debug, Clone)]
pub struct DenseLp<T> {
    objective: Vec<T>,
    constraints: Matrix<T>,
    rhs: Vec<T>,
    lower_bounds: Vec<Option<T>>,
}

impl<T: Scalar> DenseLp<T> {
    pub fn new(objective: Vec<T>, constraints: Matrix<T>, rhs: Vec<T>) -> Result<Self> {
        if constraints.cols() != objective.len() {
            return Err(SalpError::Dimension(format!(
                "constraint matrix has {} columns, objective has {} entries",
                constraints.cols(),
                objective.len()
            )));
        }
        if constraints.rows() != rhs.len() {
            return Err(SalpError::Dimension(format!(
                "constraint matrix has {} rows, rhs has {} entries",
                constraints.rows(),
                rhs.len()
            )));
        }
        let finite = |v: &[T]| v.iter().all(|x| x.is_finite());
        if !finite(&objective) || !finite(&rhs) || !finite(constraints.as_slice()) {
            return Err(SalpError::InvalidArgument("LP data must be finite".into()));
        }
        let n = objective.len();
        Ok(Self { objective, constraints, rhs, lower_bounds: vec![None; n] })
    }

    pub fn with_lower_bound(mut self, var: usize, bound: T) -> Self {
        self.lower_bounds[var] = Some(bound);
        self
    }

    pub fn with_lower_bounds(mut self, bounds: Vec<Option<T>>) -> Result<Self> {
        if bounds.len() != self.objective.len() {
            return Err(SalpError::Dimension("one lower bound entry per variable".into()));
        }
        self.lower_bounds = bounds;
        Ok(self)
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.rhs.len()
    }

    pub fn objective(&self) -> &[T] {
        &self.objective
    }

    pub fn constraints(&self) -> &Matrix<T> {
        &self.constraints
    }

    pub fn rhs(&self) -> &[T] {
        &self.rhs
    }

    pub fn lower_bounds(&self) -> &[Option<T>] {
        &self.lower_bounds
    }

    pub fn objective_value(&self, x: &[T]) -> T {
        crate::scalar::dot(&self.objective, x)
    }

    /// Largest violation of `A x ≤ b` and the lower bounds at `x`.
    pub fn max_violation(&self, x: &[T]) -> T {
        let ax = self.constraints.mul_vec(x);
        let rows = ax.iter().zip(&self.rhs).fold(T::zero(), |m, (&a, &b)| m.max(a - b));
        self.lower_bounds
            .iter()
            .zip(x)
            .filter_map(|(l, &xi)| l.map(|l| l - xi))
            .fold(rows, T::max)
    }
}

#[derive(Debug, Clone)]
pub struct LpOptions<T> {
    /// Relative duality gap and scaled residual tolerance.
    pub tol: T,
    pub max_iter: usize,
    /// Snap the dense solution onto its active constraints after convergence.
    pub polish: bool,
}

impl<T: Scalar> Default for LpOptions<T> {
    fn default() -> Self {
        Self { tol: T::lit(1e-8), max_iter: 200, polish: true }
    }
}

impl<T: Scalar> LpOptions<T> {
    pub fn with_tol(tol: T) -> Self {
        Self { tol, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverStatus {
    Optimal,
    MaxIter,
    NumericalFailure,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverReport<T> {
    pub iterations: usize,
    pub duality_gap: T,
    pub primal_residual: T,
    pub dual_residual: T,
    /// Objective in the maximization sense of the caller.
    pub objective: T,
    pub wall_time_s: f64,
    pub status: SolverStatus,
}

impl<T: Scalar> SolverReport<T> {
    fn new(
        iterations: usize,
        gap: &T,
        primal: T,
        dual: T,
        min_objective: T,
        start: Instant,
        status: SolverStatus,
    ) -> Self {
        Self {
            iterations,
            duality_gap: gap.max(T::zero()),
            primal_residual: primal,
            dual_residual: dual,
            objective: -min_objective,
            wall_time_s: start.elapsed().as_secs_f64(),
            status,
        }
    }
}
