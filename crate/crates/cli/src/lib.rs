//! Library side of the `probseg` command-line tool: array file formats,
//! pipeline configuration, rendering and the subcommand implementations.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod npy;
pub mod render;

pub use config::PipelineConfig;
pub use error::{CliError, Result};
