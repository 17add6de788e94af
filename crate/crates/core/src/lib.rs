pub mod benchmarks;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod reduction;
pub mod simulate;
pub mod solvers;
pub mod system;
pub mod tables;

pub use error::{Error, Result};
