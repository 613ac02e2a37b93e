//! Regularized two-phase Stefan system with a mushy region and Neumann
//! boundary control of the terminal mushy set.
//!
//! The state `y` solves `y_t - div(H_lambda(y) grad y) = 0` with flux data
//! `H_lambda(y) grad y . nu = u` on the boundary, where `H_lambda` is a
//! space–time mollification of a smoothed conductivity. Controls are found
//! by penalizing the distance of `y(T)` to the band `[-mu, rho + mu]` on a
//! target set and iterating over frozen coefficients.

pub mod enthalpy;
pub mod error;
pub mod forward;
pub mod grid;
pub mod linsolve;
pub mod manufactured;
pub mod mushy;
pub mod adjoint;
pub mod artifacts;
pub mod baselines;
pub mod config;
pub mod control;
pub mod quadrature;
pub mod runner;

pub use error::{Error, Result};
