//! Radial solver and analysis toolkit for the Müller density-matrix
//! functional of atoms.
//!
//! The crate works in Hartree atomic units. Orbitals are radial functions
//! `u(r) = r R(r)` on a one-dimensional grid, grouped by angular momentum
//! channel with degeneracy `q(2ℓ+1)`.

pub mod error;
pub mod kernel_oracle;
pub mod minimizer;
pub mod mueller_energy;
pub mod radial_core;
pub mod regularity_probe;
pub mod spectral_analysis;
pub mod cli;

pub use error::{Error, Result};
