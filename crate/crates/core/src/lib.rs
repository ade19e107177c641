//! Quantum and classical statistical mechanics of a particle in a potential:
//! spectra, partition sums, mean energies and entropies, checks of the
//! inequalities between them, and the energy-entropy game whose optimum is
//! the Gibbs distribution.
//!
//! See `examples/` for one runnable program per capability.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod numeric;
pub mod potential;
pub mod ensemble;
pub mod game;
pub mod spectrum;
pub mod verify;

pub use error::{Error, Result};
