//! Config-driven front end for the `ensemble` binary: experiment configs,
//! built-in presets and the `synthesize`, `verify`, `convergence` and
//! `spectrum` commands.

pub mod config;
pub mod error;
pub mod presets;
pub mod run;

pub use config::ExperimentConfig;
pub use error::{exit, CliError, CliResult};
