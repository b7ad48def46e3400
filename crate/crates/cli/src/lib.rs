//! Command-line pipeline: simulate sessions, train charts and fingerprinting
//! baselines, align, evaluate and sweep.

pub mod commands;
pub mod config;
pub mod dataset;
mod error;
pub mod pipeline;
pub mod plot;

pub use config::{Profile, RunConfig};
pub use dataset::{Bundle, Manifest};
pub use error::{CliError, Result};
pub use pipeline::{Mode, Sessions, TrainedModel};
