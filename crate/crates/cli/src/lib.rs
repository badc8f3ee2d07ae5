//! Configuration loading and experiment dispatch behind the `wmmf` binary.

// `!(x > 0.0)` is how validation rejects NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{dispatch, CliError, Outcome, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_OK, REPORT_SCHEMA_VERSION};
pub use config::{load_config, load_with, parse_config, ConfigError, ExperimentKind, Overrides, RunConfig};
pub use output::{write_artifacts, Artifact};
