//! Chapman-Kolmogorov preserving smearing distributions.
//!
//! * [`family`]: smearing families, Laplace images and identity checkers
//! * [`laplace`]: Post inversion with jet derivatives
//! * [`propagator`]: smeared transition densities two ways and CKE checks
//! * [`km`]: the ω-process kernel and Kramers-Moyal coefficients
//! * [`sim`]: Monte Carlo of the coupled (x, v) system and the Heston reduction
//! * [`pricing`]: European options by Fourier density and by Monte Carlo

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod expr;
pub mod family;
pub mod jet;
pub mod km;
pub mod laplace;
pub mod manifest;
pub mod pricing;
pub mod propagator;
pub mod quad;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
