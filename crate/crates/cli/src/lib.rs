//! Configuration, orchestration and file output for the `swarmkin` binary.

pub mod config;
pub mod io;
pub mod run;

pub use config::{parse_config, Command, ConfigError, ExperimentConfig};
pub use run::{run_command, RunManifest, MANIFEST_FILE};
