//! Modelling and fitting of on-chip electron spin resonance measurements of
//! dilute surface spins coupled to a superconducting microwave resonator.
//!
//! The crate is organised bottom-up:
//!
//! * [`spin_levels`] diagonalises the spin Hamiltonians (free doublet,
//!   hydrogen-like hyperfine doublet, triplet) and maps transitions to
//!   resonance fields and thermal polarisation factors.
//! * [`lineshape`] holds the Faddeeva function, Lorentzian/Voigt ensemble
//!   responses and the resonator transmission forward model.
//! * [`geometry`] evaluates the coplanar two-strip single-photon field,
//!   the power-to-field conversion factor and the spin-density estimate.
//! * [`fitting`] contains the Levenberg–Marquardt engine and every
//!   estimator built on top of it.
//! * [`synth`] generates seeded synthetic datasets from the forward models.
//! * [`io`] reads and writes the CSV formats shared by `synth` and the CLI.

pub mod constants;
pub mod error;
pub mod fitting;
pub mod geometry;
pub mod io;
pub mod lineshape;
pub mod par;
pub mod quad;
pub mod spin_levels;
pub mod synth;

pub use error::{Error, Result};
