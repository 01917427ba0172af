//! Simulation and Wigner-function tomography of Gaussian microwave states
//! measured through a homodyne-assisted bolometer.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bolometry;
pub mod error;
pub mod fock;
pub mod gaussian;
pub mod grid;
pub mod lm;
pub mod modelfit;
pub mod pipeline;
pub mod rng;
pub mod sparse;
pub mod tomography;

pub use error::{Error, Result};
pub use gaussian::{GaussianParams, MomentSet, QuadratureStats, SqueezeParam};
pub use grid::WignerGrid;
