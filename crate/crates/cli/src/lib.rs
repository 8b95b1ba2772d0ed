//! The `pulse` command-line pipeline: stage orchestration, run manifests,
//! SVG charts and the synthetic fixture generator.

pub mod charts;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod stages;
pub mod synth;

pub use cli::{execute, Cli};
pub use error::CliError;
