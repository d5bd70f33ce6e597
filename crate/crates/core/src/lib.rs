//! Numerical lab for generalized porous-medium and nonlinear
//! Fokker–Planck equations viewed as gradient flows on probability
//! densities.

// `!(x > 0.0)` is used on purpose so that NaN is rejected along with the bound
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// axis loops index several parallel arrays at once
#![allow(clippy::needless_range_loop)]

pub mod analytic;
pub mod config;
pub mod driver;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod laws;
pub mod quad;
pub mod solver;
pub mod verify;

pub use energy::{EnergyFunctional, EnergyMode};
pub use error::{Error, Result};
pub use grid::{DensityField, Grid, VectorFieldSample};
pub use laws::{Potential, ScalarLaw};
