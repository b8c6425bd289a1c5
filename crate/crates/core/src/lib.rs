pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod kinematics;
pub mod optimizer;
pub mod pattern;
pub mod regression;
pub mod scoring;
pub mod tracefile;
pub mod tracegen;

pub use error::{Error, Result};
