//! File formats, dataset handling and the command line for `resgs-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod imageio;
pub mod manifest;
pub mod metrics;
pub mod ply;
pub mod synth;

pub use error::{Error, Result};
