//! Declarative experiment runner for ipslab.

pub mod config;
pub mod experiments;
pub mod output;
pub mod plots;
pub mod validate;

pub use config::{load_config, parse_config, Config, ConfigError, ExperimentKind, Format};
pub use experiments::run_experiment;
pub use output::{write_outputs, RunOutput, Status};
pub use validate::{has_errors, validate, Diagnostic, Severity};
