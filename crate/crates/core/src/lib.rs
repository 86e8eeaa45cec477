pub mod acceptance;
pub mod cli;
pub mod config;
pub mod error;
pub mod harmonic;
pub mod jacobi;
mod jet;
pub mod mesh;
pub mod mobius;
pub mod qdiff;
pub mod quadrature;
pub mod sparse;
pub mod surface;
pub mod variation;
pub mod wolf;

pub use error::{LabError, Result};
