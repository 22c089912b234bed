//! Experiment harness: scenario configs, simulation sweeps with confidence
//! intervals, closed-form comparison and CSV export.

mod analytic;
mod config;
mod reference;
mod runner;
mod validate;

pub use analytic::{
    analytic_sweep, measured_t_v, published_t_v, write_analytic_csv, AnalyticRow, BLOCK_LIMITS, PUBLISHED_T_V,
};
pub use config::{load_configs, parse_configs, ScenarioConfig, DEFAULT_T_B, FINGERPRINT_HEADER};
pub use reference::{build_reference_workload, reference_workload, REFERENCE_SEED};
pub use runner::{
    closed_form_gains, run_cell, run_sweep, CellReport, Estimate, MinerSummary, SweepReport, WorkloadCache,
    RESULTS_HEADER,
};
pub use validate::{validate_cell, Estimator, ValidationRow};
