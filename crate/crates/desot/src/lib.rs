//! File formats, run configuration, manifests and the stage commands behind
//! the `desot` CLI.

pub mod config;
pub mod error;
pub mod format;
pub mod manifest;
pub mod pipeline;
pub mod report;

pub use config::{Overrides, RunConfig};
pub use error::{CliError, CliResult};
pub use manifest::Manifest;
