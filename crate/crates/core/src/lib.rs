//! Detection of abrupt changes in a MIMO channel covariance matrix.

pub mod cli;
pub mod config;
pub mod covest;
pub mod detectors;
pub mod error;
pub mod harness;
pub mod hermitian;
pub mod likelihood;
pub mod onering;

pub use error::{Error, Result};
