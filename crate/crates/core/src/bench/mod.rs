//! Monte-Carlo comparison of reliability estimators on simulated
//! structured-covariance data.
//!
//! Each replication draws multivariate normal data from a known
//! `Σ = Σ σ_g G_g`, and every method estimates the reliability of a single
//! variable: the covariance-structure fit reads it off the error component,
//! while KR20 (on items dichotomized at the true mean) and ω (one-factor
//! EFA) estimate the reliability of the `d`-variable composite, which is
//! stepped down to one variable with the Spearman-Brown relation.

mod config;
mod report;
mod run;

pub use config::{
    read_matrix_csv, BasisSpec, BenchMethod, BenchPlan, ScenarioConfig, CONFIG_VERSION,
};
pub use report::{
    emit_report, emit_trace_plot, parse_csv_table, render_report, render_trace_svg, BenchRow,
    BenchTable, ReportFormat,
};
pub(crate) use report::write_output;
pub use run::{
    aggregate, dichotomize, generate_scenario, run_benchmark, MethodOutcome, ReplicationOutcome,
    RunManifest, Scenario,
};
