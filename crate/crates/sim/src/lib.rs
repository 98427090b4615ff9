//! Experiment runner for the `adaptml-core` update laws: TOML experiment
//! configs, CSV trajectories, analysis reports and scenario presets.

pub mod config;
pub mod output;
pub mod report;
pub mod scenario;

pub use config::{ConfigError, ExperimentConfig, Issue, Mode};
pub use report::{run_config, AnalysisReport, RunError, RunResult};
pub use scenario::{Overrides, Scenario, ScenarioError, ScenarioOutcome};
