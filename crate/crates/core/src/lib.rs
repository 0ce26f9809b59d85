//! Slow-fast analysis of the two-dimensional Tyson-Hong-Thron-Novak (THTN)
//! circadian oscillator.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] defines the parameter spaces, the nullcline functions
//!   `psi1`, `psi2` with their closed-form derivatives, and the three vector
//!   fields (original 3D, dimensionless 2D, Liénard-like).
//! * [`poly`] is exact real-root isolation for the polynomial substitutions.
//! * [`equilibria`] finds and classifies equilibria and the S-shape of the
//!   critical manifold.
//! * [`gspt`] computes fold-point normal-form constants, Hopf and canard
//!   curves, the saddle-node coefficient and singular slow-fast cycles.
//! * [`integrate`] is an adaptive three-stage Radau IIA integrator.
//! * [`flow`] detects, classifies and continues limit cycles.
//! * [`cli`] implements the `canard-lab` command line.

pub mod cli;
pub mod equilibria;
pub mod error;
pub mod flow;
pub mod gspt;
pub mod integrate;
pub mod model;
pub mod poly;
pub mod svg;
pub mod taxonomy;

pub use error::{Error, Result};
