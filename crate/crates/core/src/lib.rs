//! Smoothed approximate linear programming for discounted-cost MDPs.
//!
//! The crate is generic over the scalar type (`f32` or `f64`); the aliases
//! at the root fix it to `f64`.

pub mod basis;
pub mod bounds;
pub mod env;
pub mod error;
pub mod formulation;
pub mod linalg;
pub mod lp;
pub mod mdp;
pub mod sampling;
pub mod scalar;

pub use error::{Result, SalpError};
pub use scalar::Scalar;

pub type Mdp = mdp::MdpModel<f64>;
pub type Basis = basis::BasisMatrix<f64>;
pub type Weights = basis::WeightVector<f64>;
pub type Distribution = mdp::StateDistribution<f64>;
pub type Values = mdp::ValueFunction<f64>;
pub type Solution = formulation::SalpSolution<f64>;
pub type StructuredLp = lp::StructuredSalpLp<f64>;
pub type Report = lp::SolverReport<f64>;
