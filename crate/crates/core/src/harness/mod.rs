//! Experiment orchestration: grid search, selection, multi-seed evaluation
//! and report tables.

mod data;
mod grid;
mod protocol;
mod report;
mod runner;
mod store;

pub use data::{generate_dataset, load_dataset, pseudo_real_tasks, save_dataset, DatasetSpec, TaskSource, TaskSpec};
pub use grid::{published_grid, GridSpec};
pub use protocol::{
    run_protocol, select_for_scorers, selections_from_records, table_from_records, ProtocolConfig, ProtocolOutcome,
    Selection, DEFAULT_SEEDS,
};
pub use report::{emit_report, load_report, mean_std, Cell, GapSummary, ReportRow, ReportTable, AVG_COLUMN};
pub use runner::{evaluate_selected, run_grid, selected_accuracies};
pub use store::{record_key, run_key, RecordStore};
