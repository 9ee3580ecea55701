//! Experiment harness for `advlin`: JSON configuration, experiment runners,
//! CSV result tables and SVG charts.

pub mod config;
pub mod error;
pub mod experiments;
pub mod matrices;
pub mod svg;
pub mod table;

pub use config::{default_lambda_grid, ExperimentConfig, ExperimentKind};
pub use error::{CliError, CliResult};
pub use experiments::{chart_for, run_experiment};
pub use matrices::generate_conditioned_matrix;
pub use table::ResultTable;
