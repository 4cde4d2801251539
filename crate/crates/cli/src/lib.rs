//! Configuration and command runner behind the `narrowfd` binary.

pub mod config;
pub mod run;

pub use config::{Command, ConfigError, RunConfig};
pub use run::{run, RunError, RunOutcome};
