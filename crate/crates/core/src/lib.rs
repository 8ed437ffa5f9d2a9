//! Coefficient-tensor algebra, spectral operators and a reference solver for
//! dispersive fourth-order Schrödinger systems on the circle.

pub mod diagnostics;
pub mod error;
pub mod operators;
pub mod report;
pub mod solver;
pub mod spectral;
pub mod system;
pub mod tensor;

pub use error::{Error, Result};
