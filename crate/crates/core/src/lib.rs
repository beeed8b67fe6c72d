//! Spectral computations for a planar waveguide with two distant perturbations:
//! discretization, limiting spectra, the reduced coupling matrix and the
//! asymptotic predictions for the tunneling splitting, plus a harness that
//! compares them with direct eigensolves.

pub mod cli;
pub mod coupling;
pub mod eigensolve;
pub mod harness;
pub mod error;
pub mod modes;
pub mod stripgrid;
pub mod transverse;

pub use error::{Error, Result};
