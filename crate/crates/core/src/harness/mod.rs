//! Experiment harness: replications, statistics, file formats and the CLI.

pub mod cli;
pub mod csv;
pub mod metadata;
pub mod run;
pub mod stats;

pub use cli::{run_cli, EXIT_FAILURE, EXIT_OK, EXIT_USAGE};
pub use csv::{
    export_stats_csv, export_trace_csv, format_real, parse_real, parse_stats_csv, parse_trace_csv, read_stats_csv,
    read_trace_csv, stats_to_csv, trace_to_csv, StatsCsvRow, TraceRow, STATS_HEADER, TRACE_HEADER,
};
pub use metadata::KeyValues;
pub use run::{trace_file_name, AffineProblemSpec, ProblemSpec, RunReport, RunSpec, METADATA_FILE, STATS_FILE};
pub use stats::{
    run_replications, run_replications_in_order, summarize_traces, t_quantile_975, Metric, ReplicationFailure,
    ReplicationOutcome, ReplicationStats, StatsRow, Summary,
};
