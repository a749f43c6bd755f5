//! Configuration, scenario sweeps, artifact output and the acceptance suite for `evoshift-core`.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use config::{load_config, parse_config, Mode, RunConfig};
pub use error::RunError;
pub use output::{emit_results, RunSummary, ScenarioResult};
pub use run::run;
