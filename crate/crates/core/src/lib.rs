//! Collective spectral density estimation for panels of stationary time
//! series, with baseline estimators, Ward clustering, evaluation metrics and
//! an AR(3) simulation harness.

pub mod baselines;
pub mod basis;
pub mod clustering;
pub mod config;
pub mod engine;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod simulate;
pub mod spectral;

pub use error::{Error, Result};
