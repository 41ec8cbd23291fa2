//! Metrics, baseline policies, simulated A/B runs, budget sweeps and the
//! monotonicity check.

mod ab;
mod metrics;
mod monotone;
mod policy;

pub use ab::{
    budget_sweep, render_reports, render_sweep, run_ab, validate_paid_menu, write_reports_csv, write_sweep_csv,
    AbOutcome, ExperimentConfig, RunReport, SweepRow, REPORT_HEADER, SWEEP_HEADER,
};
pub use metrics::{auc, increment_cost, logloss};
pub use monotone::{monotonicity_report, write_monotonicity_csv, MonotonicityReport, MONOTONE_TOLERANCE};
pub use policy::{score_arrivals, uplift_policy, GroundTruth, MenuScorer, PolicyKind, DEFAULT_ALPHA_MIN};
