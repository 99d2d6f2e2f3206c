//! Voltage-stability certificates for AC power-flow networks.

pub mod admittance;
pub mod certificate;
pub mod cli;
pub mod error;
pub mod fixed_point;
pub mod limits;
pub mod linalg;
pub mod net_model;
pub mod oracle;
pub mod stress;
pub mod study;

pub use error::{Error, Result};
