pub mod cutoff;
pub mod error;
pub mod hierarchy;
pub mod linalg;
pub mod io;
pub mod operator;
pub mod pattern;
pub mod quadrature;
pub mod solver;
pub mod wavelet;

pub use error::{Error, Result};
