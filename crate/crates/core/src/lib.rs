//! Coarse-grained quantum thermodynamics.
//!
//! Thermal states and free energies of finite-dimensional systems, coarse
//! graining of a Hamiltonian into energy slots of width `δε`, two-point
//! measurement work statistics at finite resolution, and the fluctuation
//! relations and work bounds that survive the coarse graining.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(feature = "cli")]
pub mod cli;
pub mod coarse;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod infothermo;
pub mod linalg;
pub mod numfmt;
pub mod plot;
pub mod random;
pub mod suites;
pub mod thermo;
pub mod tpm;

pub use error::{Error, Result};
