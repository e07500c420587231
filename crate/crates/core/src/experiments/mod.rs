//! Convergence studies: configuration, drivers and report files.

mod config;
mod report;
mod runners;

pub use config::{
    check_h4, h4_exponent_bound, Competitor, DeltaRule, ExperimentConfig, ExperimentKind, LabelSpec, SolverSettings,
    CONFIG_SCHEMA_VERSION, H4_MARGIN,
};
pub use report::{
    columns, read_rows_csv, summarize, write_rows_csv, ColumnStats, ConvergenceReport, NSummary, ReportRow, Summary,
    REPORT_SCHEMA_VERSION,
};
pub use runners::{
    competitor_reference, log_correction, mean_identity_reference, run, run_gamma_sweep, run_mean_identity,
    run_minimizer_study, run_transport_scaling, with_thread_pool, THREADS_ENV,
};
