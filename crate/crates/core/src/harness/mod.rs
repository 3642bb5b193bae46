//! Training loop, experiment grid and CSV reporting.

mod experiment;
mod report;
mod train;

pub use experiment::{
    derive_seed, run_experiment, run_grid, ExperimentConfig, ExperimentResult, RunOutcome,
    VariantRun,
};
pub use report::{
    epoch_csv_name, read_epoch_csv, summary_rows, write_epoch_csv, write_report, SummaryRow,
    EPOCH_CSV_HEADER, SUMMARY_CSV_HEADER,
};
pub use train::{epochs_to_threshold, evaluate, median_epoch_time, train_epoch, EpochRecord};
