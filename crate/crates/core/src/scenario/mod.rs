//! Scenario files, the simulation loop, run logs and metrics.

pub mod config;
pub mod generate;
pub mod log;
pub mod runner;
pub mod summary;

pub use config::{parse_config, validate, ConfigError, ErrorCode, ScenarioConfig};
pub use runner::{run, write_outputs, RunOptions, RunOutput, Simulation};
pub use summary::{summarize, summarize_dir, MetricsSummary};
