//! Slice-wise convolutional measurement operators for full-matrix-capture
//! imaging, basis-filter compression of their kernel banks, and unrolled
//! sparse-recovery networks built on top of them.

pub mod compress;
pub mod error;
pub mod eval;
pub mod io;
pub mod linalg;
pub mod model;
pub mod parallel;
pub mod rng;
pub mod solver;
pub mod train;

pub use error::{Error, Result};
