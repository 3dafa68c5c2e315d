//! Numerical laboratory for the Neumann-Poincare operator on planar curves.
//!
//! The pipeline is curve -> mesh -> dense operators (K, K*, S) -> spectra in the
//! single-layer energy inner product, with parity splitting under reflection
//! symmetry, essential-spectrum prediction from corner angles, and detection of
//! embedded eigenvalues.

pub mod curves;
pub mod error;
pub mod geom;
pub mod lab;
pub mod mesh;
pub mod operators;
pub mod quadrature;
pub mod spectral;

pub use error::{Error, Result};
