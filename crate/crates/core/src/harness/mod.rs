//! Experiment configuration, runners, CSV/JSON output and the complexity benchmark.

mod bench;
mod compare;
mod experiment;
mod output;

pub use bench::{
    benchmark_complexity, write_complexity_report, BenchmarkConfig, ComplexityReport, ComplexityRow, ComplexitySlope,
};
pub use compare::{compare_methods, write_compare_csv, CompareConfig, CompareRow, NOT_REACHED};
pub use experiment::{
    check_method, final_metrics, initial_point, run_single, BuiltProblem, ExperimentConfig, FinalMetrics,
    Initialization, Method, OutputConfig, ProblemSpec, RunId,
};
pub use output::{
    provenance_header, read_trace_csv, run_experiment, summary_path, trace_columns, trace_csv, trace_path,
    write_atomic, ExperimentSummary, MeanStd, RunSummary, TraceFile,
};

use crate::error::ForumError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_CAPABILITY: i32 = 4;

/// Process exit code for an error.
pub fn exit_code(err: &ForumError) -> i32 {
    match err {
        ForumError::Config(_) | ForumError::Json(_) | ForumError::Dimension { .. } => EXIT_CONFIG,
        ForumError::Divergence { .. } | ForumError::LowerLevelDivergence { .. } => EXIT_DIVERGENCE,
        ForumError::Capability { .. } => EXIT_CAPABILITY,
        ForumError::Io { .. } | ForumError::Csv(_) => EXIT_OTHER,
    }
}
