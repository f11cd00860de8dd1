//! Validation harness: `L^q` error estimation, convergence studies, the
//! conditional-expectation identity, oracle cross-checks and report output.

mod config;
mod convergence;
mod harness;
mod identity;
mod kalman;
mod lemma;
mod oracle;
mod report;
mod selftest;

pub use config::{ConstantsConfig, ExperimentConfig, GridConfig, USolver};
pub use convergence::{convergence_study, ConvergenceReport, RunMetadata};
pub use harness::{
    lq_error_at, run_horizon, sup_error_ball, ErrorRecord, HorizonSummary, Setup, SolverDiagnostics,
};
pub use identity::{remark_identity_test, IdentityBin, IdentityConfig, IdentityReport};
pub use kalman::{kalman_bucy, kalman_validation, KalmanConfig, KalmanPathResult, KalmanReport, KalmanState};
pub use lemma::{lemma_mc_check, lemma_sweep, LemmaMcReport, LemmaSweepReport};
pub use oracle::{oracle_triangle, OracleConfig, OracleReport, OracleRow};
pub use report::{emit_reports, read_report, records_csv, ReportFiles};
pub use selftest::{selftest, SelfCheck};
