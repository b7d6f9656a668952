//! End-to-end strategy comparisons: per seed, split, fit the teacher and
//! density model, build each strategy's training set, fit and select
//! students, and score everything once on the test fold.

mod config;
mod latency;
mod report;
mod run;
mod stats;

pub use config::{DatasetSpec, DensityOverrides, ExperimentConfig, KnowSettings, LatencySettings, Strategy, TeacherSettings};
pub use latency::{cycle_rows, measure_latency};
pub use report::{content_hash, emit_report, load_report, report_csv, LATENCY_JSON, REPORT_CSV, REPORT_JSON};
pub use run::{
    load_dataset, run_experiment, CellReport, DensityFitReport, LatencyEntry, LatencyReport, LoadedData, RankRow,
    RunOutput, RunReport, SelectedReport, SummaryRow, TeacherReport, VersusBase,
};
pub use stats::{descending_ranks, mean_stderr, wilcoxon_greater, SignedRankTest};
