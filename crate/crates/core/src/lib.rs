//! Finite-dimensional approximation of the compressible Navier-Stokes system
//! with anisotropic viscosity, together with audits of its energy and relative
//! entropy structure.
//!
//! The pipeline is [`continuity`] (ε-regularized density step) feeding
//! [`momentum`] (Galerkin projection onto the lowest eigenmodes of the
//! anisotropic Lamé operator from [`grid`]); [`energy`] and [`relent`] evaluate
//! the energy budget, Jensen-gap defects and relative entropy of the resulting
//! trajectories.

pub mod continuity;
pub mod energy;
pub mod error;
pub mod grid;
mod linalg;
pub mod momentum;
pub mod relent;
pub mod thermo;
pub mod visc;

pub use error::{Error, Result};
