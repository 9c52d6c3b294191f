//! Monte-Carlo benchmark driver: configuration, orchestration, median
//! tables and plot-data exports.

mod bench;
mod config;
mod export;
mod stats;
mod table;

pub use bench::{
    read_records_csv, rerun_system, run_arm, run_benchmark, run_benchmark_timed, summarize, system_spec,
    trace_seed, write_records_csv, ArmRun, ArmSummary, BenchmarkReport, Medians, SystemRecord, Timing,
};
pub use config::{parse_arms, Arm, BenchmarkConfig};
pub use export::{export_spectrum, export_trace_figure_data, TraceFigurePoint};
pub use stats::{median, ranks, spearman};
pub use table::{emit_table, format_sig2, read_table_csv, Table, TABLE_ROWS};
