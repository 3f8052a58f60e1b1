//! Configuration loading and report writing for the `exchange-sim` binary.

pub mod config;
pub mod manifest;
mod output;
pub mod run;

pub use config::{load_config, parse_config, read_config, BoundOptions, ConfigError, LoadedConfig, RunConfig, VerifyOptions};
pub use manifest::{Command, Format, Overrides, RunManifest};
pub use run::{execute, run, RunError, EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION};
