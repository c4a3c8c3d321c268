//! Monte Carlo harness: scenario generation, single trials, repeated
//! experiments, metrics and export.

mod config;
mod experiment;
mod export;
mod scenario;
mod trial;

pub use config::{Method, ScenarioConfig};
pub use experiment::{
    aggregate, repetition_seed, run_bias_experiment, run_experiment, trial_seed, Aggregate,
    BiasRow, BiasTable, ExperimentRun, Metric, MetricsTable, RepetitionMetrics, RunOptions,
};
pub use export::{export_results, Manifest};
pub use scenario::{generate_scenario_data, generate_scenario_data_with};
pub use trial::{run_trial, TrialRecord, TrialStats};
