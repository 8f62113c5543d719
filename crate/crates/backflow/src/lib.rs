//! Numerical estimation of the quantum backflow constant.
//!
//! The backflow constant is the supremum of the spectrum of the projected
//! backflow operator `Π B_T Π` on positive-momentum states. This crate applies
//! that operator matrix-free (free evolution, FFTs and a half-line position
//! projection), runs power iteration on the shifted operator `Π B Π + id`,
//! extrapolates over grid refinements, and post-processes the resulting
//! approximate maximizer (density, current, half-space probability, Bohmian
//! flow lines, norm convergence).
//!
//! Units are the rescaled ones in which free evolution multiplies momentum
//! amplitudes by `exp(-i k² t)`.

pub mod dynamics;
pub mod error;
pub mod operators;
pub mod quadrature;
pub mod spectral;
pub mod transforms;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use operators::{BackflowOperator, DenseKernel, LinearOperator, Route};
pub use spectral::{ExtrapolationResult, PowerOptions, PowerResult};
pub use transforms::{MomentumGrid, StateVector};
