//! Scenario runner: JSON configs in, `results.csv` and `metadata.json` out.

pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use config::{load, Experiment, ScenarioConfig};
pub use error::{exit, CliError, CliResult};
pub use output::{write_artifacts, Artifacts, FORMAT};
pub use run::{run, RunOptions};
