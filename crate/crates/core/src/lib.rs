//! Piecewise-constant weights whose degenerate elliptic problems break
//! Calderón–Zygmund estimates, with exact arithmetic and certification.

pub mod checks;
pub mod certify;
pub mod construct;
pub mod error;
pub mod geometry;
pub mod json;
pub mod muckenhoupt;
pub mod planar;
pub mod positive;
pub mod scalar;
pub mod sequences;
pub mod whitney;

pub use error::{Error, Result};
