use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scenario::{Estimator, ScenarioSpec, REFERENCE_ROWS, REFERENCE_SEED};
use crate::error::{FppiError, Result};

pub const REPORT_SCHEMA: &str = "fppi.simulation-report/v1";
pub const MANIFEST_SCHEMA: &str = "fppi.manifest/v1";

/// Aggregates over the successful replications of one estimator. Metrics
/// are absent when no replication succeeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    pub successes: usize,
    pub failures: usize,
    pub mean_estimate: Vec<f64>,
    /// Mean of `‖θ̂ − θ*‖²`.
    pub mse: Option<f64>,
    /// Monte Carlo standard error of `mse`.
    pub mse_se: Option<f64>,
    /// Summed per-coordinate variance (1/R normalization, so that
    /// `mse = variance + bias_sq`).
    pub variance: Option<f64>,
    pub bias_sq: Option<f64>,
    /// Fraction of (replication, coordinate) intervals covering θ*.
    pub coverage: Option<f64>,
    /// Fraction of replications whose estimated region equals the oracle one.
    pub recovery_rate: Option<f64>,
    pub mean_lambda: Option<f64>,
}

impl EstimatorSummary {
    /// Flat `(metric, value)` pairs in a fixed order.
    pub fn metrics(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        let mut push = |name: &str, v: Option<f64>| {
            if let Some(v) = v {
                out.push((name.to_string(), v));
            }
        };
        push("mse", self.mse);
        push("mse_se", self.mse_se);
        push("variance", self.variance);
        push("bias_sq", self.bias_sq);
        push("coverage", self.coverage);
        push("recovery_rate", self.recovery_rate);
        push("mean_lambda", self.mean_lambda);
        push("successes", Some(self.successes as f64));
        push("failures", Some(self.failures as f64));
        if self.mean_estimate.len() == 1 {
            out.push(("mean_estimate".into(), self.mean_estimate[0]));
        } else {
            for (k, v) in self.mean_estimate.iter().enumerate() {
                out.push((format!("mean_estimate_{}", k + 1), *v));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub schema: String,
    pub spec: ScenarioSpec,
    pub theta_star: Vec<f64>,
    pub estimators: Vec<EstimatorSummary>,
    /// Wall-clock seconds; kept out of exported files so they stay
    /// byte-identical across runs.
    #[serde(skip)]
    pub wall_time_secs: f64,
    /// Per estimator, per replication squared error (NaN for failures).
    #[serde(skip)]
    pub squared_errors: Vec<Vec<f64>>,
}

impl SimulationReport {
    pub fn summary(&self, estimator: Estimator) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|s| s.estimator == estimator)
    }

    /// Mean and standard error of `err(a) − err(b)` over replications where
    /// both succeeded; positive means `b` is more accurate.
    pub fn paired_difference(&self, a: Estimator, b: Estimator) -> Option<(f64, f64)> {
        let ia = self.estimators.iter().position(|s| s.estimator == a)?;
        let ib = self.estimators.iter().position(|s| s.estimator == b)?;
        let d: Vec<f64> = self.squared_errors.get(ia)?
            .iter()
            .zip(self.squared_errors.get(ib)?)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| x - y)
            .collect();
        if d.len() < 2 {
            return None;
        }
        let r = d.len() as f64;
        let mean = d.iter().sum::<f64>() / r;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
        Some((mean, (var / r).sqrt()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = FppiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(FppiError::invalid(format!("unknown format `{other}` (expected csv or json)"))),
        }
    }
}

pub const CSV_HEADER: [&str; 7] = ["scenario", "prediction", "estimator", "n", "N", "metric", "value"];

/// One flat row per (estimator, metric), optionally restricted to a metric subset.
pub fn report_rows(report: &SimulationReport, metrics: Option<&[&str]>) -> Vec<[String; 7]> {
    let spec = &report.spec;
    let mut rows = Vec::new();
    for est in &report.estimators {
        for (name, value) in est.metrics() {
            if metrics.is_some_and(|m| !m.contains(&name.as_str())) {
                continue;
            }
            rows.push([
                spec.scenario.to_string(),
                spec.prediction.to_string(),
                est.estimator.to_string(),
                spec.n.to_string(),
                spec.big_n.to_string(),
                name,
                value.to_string(),
            ]);
        }
    }
    rows
}

pub fn write_csv<W: Write>(report: &SimulationReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in report_rows(report, None) {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_report(report: &SimulationReport, format: ReportFormat, path: &Path) -> Result<()> {
    let mut file = File::create(path)?;
    match format {
        ReportFormat::Csv => write_csv(report, &mut file)?,
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut file, report)?;
            file.write_all(b"\n")?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub package: String,
    pub version: String,
    pub spec: ScenarioSpec,
    pub theta_star: Vec<f64>,
    pub reference_seed: u64,
    pub reference_rows: usize,
    pub report_file: String,
}

/// Writes the scenario settings and code version next to a report.
pub fn write_manifest(report: &SimulationReport, report_path: &Path, manifest_path: &Path) -> Result<()> {
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.into(),
        package: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        spec: report.spec.clone(),
        theta_star: report.theta_star.clone(),
        reference_seed: REFERENCE_SEED,
        reference_rows: REFERENCE_ROWS,
        report_file: report_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let mut file = File::create(manifest_path)?;
    serde_json::to_writer_pretty(&mut file, &manifest)?;
    file.write_all(b"\n")?;
    Ok(())
}
