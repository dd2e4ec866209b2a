//! Discrete exterior calculus for Witten Laplacian spectra.
//!
//! Cochains live on simplicial meshes or on products of circles and
//! intervals. The Witten Laplacian `d̃δ̃ + δ̃d̃` with `d̃ = e^{-φ} d e^{φ}` is
//! assembled either in the twisted gauge or, equivalently, as the plain
//! coboundary with the measure `e^{-2φ} dv`, and its spectrum is split into
//! harmonic, exact and coexact parts.

pub mod cholesky;
pub mod cohomology;
pub mod complex;
pub mod deform;
pub mod dense;
pub mod eigen;
pub mod error;
pub mod experiments;
pub mod expr;
pub mod model1d;
pub mod rank;
pub mod sparse;
pub mod spectral;
pub mod witten_ops;

pub use error::{Error, Result};
