pub mod cli;
pub mod dynamics;
pub mod error;
pub mod estimates;
pub mod gates;
pub mod hilbert;
pub mod linalg;
pub mod perturbation;
pub mod report;

pub use error::{Error, Result};
