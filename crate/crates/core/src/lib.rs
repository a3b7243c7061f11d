//! DSRC/V2X channel simulation and genetic-algorithm calibration.
//!
//! A vehicle trace is replayed against a roadside unit; every BSM and SPaT
//! packet goes through a free-space / Lognormal / Nakagami cascade and a
//! sensitivity + SNR reception test. The resulting PDR-vs-distance curve
//! can be fitted to an observed curve by a GA over ten channel parameters.

pub mod calibration;
pub mod cli;
pub mod config;
pub mod dataio;
pub mod error;
pub mod propagation;
pub mod simulator;

pub use error::{Error, Result};
