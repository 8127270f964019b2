//! Config-driven experiment runner: builds a model, runs the requested
//! algorithms from `mu = 0, sigma2 = sigma_y2` and writes CSV traces plus a
//! `key=value` summary.

mod config;
mod runner;

pub use config::{Algorithm, BiasSource, DataSource, ExperimentConfig, ModelSource, PartitionSource};
pub use runner::{
    build_experiment, oracle, run, trace_csv, with_threads, AlgorithmReport, Experiment, OracleReport, RunReport,
    CSV_HEADER, ORACLE_FILE, SUMMARY_FILE,
};
