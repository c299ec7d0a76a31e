//! Scenario configuration and runner behind the `vfsim` binary.

pub mod config;
pub mod runner;

pub use config::{ConfigError, ScenarioConfig, ScenarioKind};
pub use runner::{run, RunError, RunOptions, RunReport};
