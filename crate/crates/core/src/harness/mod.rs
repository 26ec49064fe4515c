//! Configuration-driven experiment runner: sample, propagate, estimate, repeat, emit.

pub mod config;
pub mod output;
pub mod run;
pub mod scenarios;

pub use config::{BlowUpPolicy, ExperimentConfig, ResolvedConfig};
pub use output::{emit_results, parse_results, OutputFormat, ResultRow, ResultsTable};
pub use run::{default_workers, run_experiment, run_resolved, RunOutput, WORKERS_ENV};
pub use scenarios::{reproduce_figure, Scenario};
