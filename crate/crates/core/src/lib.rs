//! Numerical laboratory for the Neumann–Poincaré operator on planar domains
//! with one corner.

pub mod bem;
pub mod certificate;
pub mod dispersion;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod parse;
pub mod quad;
pub mod sector;
pub mod weyl;

pub use error::{Error, Result};
