//! System identification of dephasing N-level quantum systems from
//! stroboscopic population measurements.

pub mod error;
pub mod estimator;
pub mod harness;
pub mod model;
pub mod reconstructor;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
