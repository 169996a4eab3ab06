//! Experiment orchestration: configuration, CSV data, metrics, repetition
//! loop and report emission.

pub mod config;
pub mod experiment;
pub mod io;
pub mod metrics;

pub use config::{
    ExperimentConfig, Method, OutputConfig, OutputFormat, Source, Splits, SyntheticSource, Target,
};
pub use experiment::{
    repetition_data, run_experiment, run_repetition, sweep, write_sweep_csv, ExperimentReport,
    RepData, RepRecord, ReportRow, SweepParam, SweepPoint, RECORD_COLUMNS,
};
pub use io::{load_csv_dataset, read_csv_dataset, save_csv_dataset, write_csv_dataset, CsvSchema};
pub use metrics::{coverage, mean_width, MeanStd, WidthSummary};
