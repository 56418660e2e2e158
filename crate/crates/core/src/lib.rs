//! Learning-based inverse kinematics for soft robots.

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod ik;
pub mod neural;
pub mod robot;

pub use error::{Error, Result};
