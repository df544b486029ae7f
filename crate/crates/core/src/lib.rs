//! Bloch-band Gaussian beam superposition for the semiclassical Schrödinger
//! equation with a lattice potential `V(x/ε)` and a smooth external
//! potential `V_e(x)`, in one space dimension.

pub mod beam_dynamics;
pub mod cell_spectral;
pub mod error;
pub mod harness;
pub mod reference_solver;
pub mod wavefield;

pub use error::{ConfigIssue, Error, Result};
