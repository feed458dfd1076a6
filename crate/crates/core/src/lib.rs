//! Predictor feedback for control-affine systems with distributed input delays.

pub mod cli;
pub mod config;
pub mod delay_system;
pub mod error;
pub mod feedback;
pub mod linear_ref;
pub mod predictor;
pub mod reduction;
pub mod sampling;
pub mod scenarios;
pub mod simulator;

pub use error::{Error, Result};
