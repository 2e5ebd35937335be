//! Asymptotic mean value formulas for fully nonlinear elliptic operators.
//!
//! The crate evaluates Pucci, eigenvalue, truncated Laplacian, k-Hessian,
//! Monge–Ampère and Isaacs-wrapped operators in closed form, realizes the same
//! operators as extrema of ball averages over coefficient families, measures
//! how fast the normalized mean value increments converge, and solves
//! Dirichlet problems by iterating the mean value formula.

pub mod cli;
pub mod error;
pub mod expansion;
pub mod expr;
pub mod families;
pub mod heisenberg;
pub mod operators;
pub mod quadrature;
pub mod solver;
pub mod symmat;
pub mod textform;

pub use error::{Error, Result};
