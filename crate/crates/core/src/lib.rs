//! Lipschitz-free space computations on rasterized planar domains.

pub mod domain;
pub mod error;
pub mod fields;
pub mod flows;
pub mod geometry;
pub mod mcf;
pub mod potential;
pub mod transport;

pub use error::{Error, Result};
