//! Additive Schwarz methods for composite convex problems `min F(u) + G(u)`.
//!
//! The crate is organised bottom-up:
//!
//! - [`framework`]: the energy contract every model implements, plus the
//!   generic quantities (energy, Bregman distance, gradient checks).
//! - [`grid`] and [`tv`]: structured P1 meshes, sparse assembly, coarse
//!   interpolation and the forward-difference TV operators.
//! - [`decomposition`]: overlapping one- and two-level space decompositions,
//!   subspace colouring and the derived step size `tau0`.
//! - [`algorithms`]: the plain, backtracking and momentum drivers.
//! - [`problems`]: the s-Laplace, obstacle and dual-TV model problems and a
//!   small dense quadratic used throughout the tests.
//! - [`harness`]: experiment configuration, reference energies and trace output.

// `!(x > 0.0)` is used on purpose so that NaN fails the test.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod algorithms;
pub mod decomposition;
pub mod error;
pub mod framework;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod problems;
pub mod tv;

pub use error::{Error, Result};
pub use framework::{Coefficients, EnergyModel, ProblemInstance};
