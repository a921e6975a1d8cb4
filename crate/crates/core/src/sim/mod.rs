//! Experiment driver: configuration, round orchestration, metrics export and figure presets.
//!
//! A round draws `K` candidates uniformly, allocates resources for every (sub-channel,
//! candidate) pair, assigns sub-channels, prunes infeasible pairs and aggregates the surviving
//! gradients. A shadow model trained with every device each round runs alongside, so weight
//! divergence can be measured directly.

pub mod config;
pub mod engine;
pub mod experiment;
pub mod export;
pub mod presets;

pub use config::{
    load_config, parse_config, AggregationMode, AssignmentMode, ExperimentConfig, OutputFormat, SelectionMode,
};
pub use engine::{DeviceRecord, RoundRecord, RoundTable, Simulation};
pub use experiment::{run_experiment, summarize, ExperimentResult, RoundSummary, RunResult, Summary};
pub use export::{export_metrics, read_csv, validate_json, write_csv, write_json, CsvRow};
