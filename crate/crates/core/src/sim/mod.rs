//! Monte Carlo harness: scenario generators, replication engine, reports.

mod engine;
mod report;
mod scenario;

pub use engine::{
    region_recovery_experiment, region_recovery_with_threads, run_monte_carlo, run_monte_carlo_with_threads,
    run_replication, threads_from_env, RecoveryRow, RepOutcome,
};
pub use report::{
    export_report, report_rows, write_csv, write_manifest, EstimatorSummary, Manifest, ReportFormat,
    SimulationReport, CSV_HEADER, MANIFEST_SCHEMA, REPORT_SCHEMA,
};
pub use scenario::{
    generate, generate_covariates, generate_labeled, prediction_function, reference_value, registered_predictor,
    regression_function, scenario1_categories, truth, Estimator, GeneratedData, PredictionId, ScenarioId,
    ScenarioSpec, Target, Truth, REFERENCE_ROWS, REFERENCE_SEED,
};
