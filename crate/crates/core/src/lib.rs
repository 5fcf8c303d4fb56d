pub mod band;
pub mod bernstein;
pub mod domain;
pub mod error;
pub mod green;
pub mod lattice;
pub mod mc;
pub mod quadrature;
pub mod special;
pub mod subordination;

pub use error::{Error, Result};
