//! Configuration-driven experiments: build a dataset, pick seeds with every
//! requested method for each budget, estimate influence, and write
//! plot-ready reports.

mod config;
mod report;
mod run;

pub use config::{AttributeSpec, DatasetSpec, ExperimentConfig, Filter, Method};
pub use report::{
    emit_report, read_rows, recompute_aggregates, write_aggregate, write_rows, AGGREGATE_FILE,
    MANIFEST_FILE, ROWS_FILE, TIMINGS_FILE,
};
pub use run::{
    aggregate, build_dataset, run_experiment, AggregateRow, ExperimentReport, Provenance,
    ReportRow, StageTiming, TrialError,
};
