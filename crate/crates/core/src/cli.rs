//! Command-line front end. `run` parses arguments, dispatches, and maps
//! errors to the exit-status contract of [`FppiError::exit_code`].

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::csvio::{load_labeled, load_unlabeled, write_labeled, write_unlabeled};
use crate::data::{LabeledDataset, Region, SemiSupervised, UnlabeledDataset};
use crate::error::{FppiError, Result};
use crate::glm::{algorithm2_from_mle, glm_mle, glm_with_region, GlmFamily, GlmFppiResult, OptimizerOptions, WeightRule};
use crate::mean::{
    algorithm1_estimate, algorithm1_split_estimate, classical_mean, confidence_interval, ppi_plusplus_mean,
    ppi_plusplus_plugin, MeanFppiResult,
};
use crate::normal::two_sided_z;
use crate::oracles::OracleSpec;
use crate::sim::{
    export_report, generate, region_recovery_experiment, registered_predictor, run_monte_carlo, write_manifest,
    Estimator, PredictionId, ReportFormat, ScenarioId, ScenarioSpec, Target,
};

pub const MEAN_SCHEMA: &str = "fppi.estimate-mean/v1";
pub const GLM_SCHEMA: &str = "fppi.estimate-glm/v1";
pub const ERROR_SCHEMA: &str = "fppi.error/v1";

#[derive(Debug, Parser)]
#[command(name = "fppi", version, about = "Filtered prediction-powered estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate a population mean from labeled/unlabeled CSV files.
    EstimateMean(MeanArgs),
    /// Estimate GLM coefficients from labeled/unlabeled CSV files.
    EstimateGlm(GlmArgs),
    /// Run a Monte Carlo scenario and write a report.
    Simulate(SimulateArgs),
    /// Region recovery rate (or mis-recovery probability) over a grid of n.
    Recovery(RecoveryArgs),
    /// Write one generated replication of a scenario as CSV files.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
struct InputArgs {
    #[arg(long)]
    labeled: PathBuf,
    #[arg(long)]
    unlabeled: PathBuf,
    /// Name of the prediction column.
    #[arg(long, default_value = "f")]
    pred_col: String,
    /// Registered prediction function (e.g. `scenario1:f3`) used instead of a column.
    #[arg(long)]
    predictor: Option<String>,
    #[arg(long, default_value = "knn:15")]
    oracle: OracleSpec,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MeanArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "fppi")]
    estimator: Estimator,
    /// Share of labeled rows used to fit the region (`fppi-split`).
    #[arg(long, default_value_t = 0.5)]
    split: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct GlmArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "fppi")]
    estimator: Estimator,
    #[arg(long, default_value = "gaussian")]
    family: GlmFamily,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 5000)]
    max_iter: usize,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value = "f3")]
    pred: PredictionId,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `mean` or `glm`; defaults to the scenario's natural target.
    #[arg(long)]
    target: Option<Target>,
    #[arg(long)]
    oracle: Option<OracleSpec>,
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
}

impl ScenarioArgs {
    fn spec(&self, n: usize, big_n: usize) -> Result<ScenarioSpec> {
        let scenario: ScenarioId = self.scenario.parse()?;
        let mut spec = ScenarioSpec::new(scenario, self.pred, n, big_n).with_seed(self.seed);
        if let Some(t) = self.target {
            spec.target = t;
        }
        if let Some(o) = self.oracle {
            spec.oracle = o;
        }
        spec.noise_sd = self.noise_sd.or(spec.noise_sd);
        if let Some(t) = self.threshold {
            spec.threshold = t;
        }
        Ok(spec)
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long)]
    n: usize,
    #[arg(long = "N")]
    big_n: usize,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    /// Comma-separated estimator list.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<Estimator>>,
    /// Fixed weight for ppi++/fppi instead of the plug-in.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    split: Option<f64>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// `csv` or `json`; inferred from the extension of `--out` when omitted.
    #[arg(long)]
    format: Option<String>,
    /// Manifest path; defaults to `<out>.manifest.json`.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RecoveryArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, value_delimiter = ',', default_value = "50,100,200,400,800")]
    n_grid: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 10_000)]
    probe: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long)]
    n: usize,
    #[arg(long = "N")]
    big_n: usize,
    /// Replication index to draw.
    #[arg(long, default_value_t = 0)]
    rep: u64,
    #[arg(long)]
    labeled_out: PathBuf,
    #[arg(long)]
    unlabeled_out: PathBuf,
    /// Leave out the prediction column.
    #[arg(long)]
    no_predictions: bool,
}

/// Entry point shared by the binary and the tests; returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let start = Instant::now();
    let outcome = match cli.command {
        Command::EstimateMean(a) => estimate_mean(&a),
        Command::EstimateGlm(a) => estimate_glm(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Recovery(a) => recovery(&a),
        Command::Generate(a) => generate_files(&a),
    };
    eprintln!("wall time: {:.3}s", start.elapsed().as_secs_f64());
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            if let FppiError::NonConvergence {
                iterations,
                grad_norm,
                last_iterate,
            } = &e
            {
                let body = serde_json::json!({
                    "schema": ERROR_SCHEMA,
                    "error": "non_convergence",
                    "message": e.to_string(),
                    "iterations": iterations,
                    "grad_norm": grad_norm,
                    "last_iterate": last_iterate,
                });
                println!("{}", serde_json::to_string_pretty(&body).unwrap_or_default());
            }
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Inputs {
    labeled: LabeledDataset,
    unlabeled: UnlabeledDataset,
    f_labeled: Vec<f64>,
    f_unlabeled: Vec<f64>,
    rows: RowCounts,
}

#[derive(Debug, Serialize)]
struct RowCounts {
    labeled: usize,
    unlabeled: usize,
    dropped_labeled: usize,
    dropped_unlabeled: usize,
}

fn load_inputs(a: &InputArgs) -> Result<Inputs> {
    let l = load_labeled(&a.labeled, &a.pred_col)?;
    let u = load_unlabeled(&a.unlabeled, &a.pred_col)?;
    let (f_labeled, f_unlabeled) = match &a.predictor {
        Some(name) => {
            let f = registered_predictor(name)?;
            (
                l.data.x().row_iter().map(|r| f(r)).collect(),
                u.data.x().row_iter().map(|r| f(r)).collect(),
            )
        }
        None => match (l.predictions, u.predictions) {
            (Some(fl), Some(fu)) => (fl, fu),
            _ => {
                return Err(FppiError::invalid(format!(
                    "both files need a `{}` column, or pass --predictor",
                    a.pred_col
                )))
            }
        },
    };
    Ok(Inputs {
        rows: RowCounts {
            labeled: l.data.len(),
            unlabeled: u.data.len(),
            dropped_labeled: l.dropped_rows,
            dropped_unlabeled: u.dropped_rows,
        },
        labeled: l.data,
        unlabeled: u.data,
        f_labeled,
        f_unlabeled,
    })
}

fn emit<T: Serialize>(value: &T, output: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match output {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{text}")?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct Interval {
    level: f64,
    lower: f64,
    upper: f64,
}

#[derive(Debug, Serialize)]
struct RegionInfo {
    description: String,
    degenerate: bool,
    labeled_in_region: usize,
    unlabeled_in_region: usize,
}

#[derive(Debug, Serialize)]
struct MeanOutput {
    schema: &'static str,
    estimator: Estimator,
    point: f64,
    std_error: f64,
    interval: Interval,
    lambda_hat: f64,
    labeled_mean: f64,
    correction_term: f64,
    variance_clamped: bool,
    region: RegionInfo,
    excluded_categories: Vec<Vec<f64>>,
    rows: RowCounts,
}

/// The mean estimate a CLI invocation computes, without any I/O.
pub fn mean_estimate(
    data: &SemiSupervised<'_>,
    estimator: Estimator,
    oracle: &OracleSpec,
    split: f64,
    seed: u64,
) -> Result<MeanFppiResult> {
    match estimator {
        Estimator::Classical => classical_mean(data),
        Estimator::Ppi => ppi_plusplus_mean(data, 1.0),
        Estimator::PpiPlusPlus => ppi_plusplus_plugin(data),
        Estimator::Fppi => algorithm1_estimate(data, oracle),
        Estimator::FppiSplit => algorithm1_split_estimate(data, split, oracle, seed),
    }
}

fn estimate_mean(a: &MeanArgs) -> Result<()> {
    let inp = load_inputs(&a.input)?;
    let data = SemiSupervised::new(&inp.labeled, &inp.unlabeled, &inp.f_labeled, &inp.f_unlabeled)?;
    let r = mean_estimate(&data, a.estimator, &a.input.oracle, a.split, a.seed)?;
    let ci = confidence_interval(&r, a.input.level)?;
    let out = MeanOutput {
        schema: MEAN_SCHEMA,
        estimator: a.estimator,
        point: r.theta_hat,
        std_error: r.std_error,
        interval: Interval {
            level: ci.level,
            lower: ci.lower,
            upper: ci.upper,
        },
        lambda_hat: r.lambda_hat,
        labeled_mean: r.labeled_mean,
        correction_term: r.correction_term,
        variance_clamped: r.diagnostics.variance_clamped,
        region: RegionInfo {
            description: r.region.describe(),
            degenerate: r.diagnostics.degenerate,
            labeled_in_region: r.diagnostics.labeled_in_region,
            unlabeled_in_region: r.diagnostics.unlabeled_in_region,
        },
        excluded_categories: r.diagnostics.excluded_categories.clone(),
        rows: inp.rows,
    };
    emit(&out, a.input.output.as_deref())
}

#[derive(Debug, Serialize)]
struct GlmOutput {
    schema: &'static str,
    estimator: Estimator,
    family: String,
    theta_hat: Vec<f64>,
    theta_mle: Vec<f64>,
    lambda_hat: f64,
    std_errors: Vec<f64>,
    intervals: Vec<Interval>,
    /// Plug-in covariance of θ̂ (already divided by n).
    covariance: Vec<Vec<f64>>,
    amse_estimate: f64,
    convergence: crate::glm::Convergence,
    region: RegionInfo,
    rows: RowCounts,
}

/// The GLM estimate a CLI invocation computes, without any I/O.
pub fn glm_estimate(
    data: &SemiSupervised<'_>,
    estimator: Estimator,
    oracle: &OracleSpec,
    family: GlmFamily,
    opts: &OptimizerOptions,
) -> Result<GlmFppiResult> {
    if estimator == Estimator::FppiSplit {
        return Err(FppiError::Unsupported("fppi-split for GLM targets".into()));
    }
    let mle = glm_mle(data.labeled, family, opts)?;
    match estimator {
        Estimator::Classical => glm_with_region(data, &Region::Empty, &mle, WeightRule::Fixed(0.0), family, opts),
        Estimator::Ppi => glm_with_region(data, &Region::All, &mle, WeightRule::Fixed(1.0), family, opts),
        Estimator::PpiPlusPlus => glm_with_region(data, &Region::All, &mle, WeightRule::Plugin, family, opts),
        Estimator::Fppi => algorithm2_from_mle(data, oracle, &mle, family, opts),
        Estimator::FppiSplit => unreachable!("rejected above"),
    }
}

fn estimate_glm(a: &GlmArgs) -> Result<()> {
    let inp = load_inputs(&a.input)?;
    let data = SemiSupervised::new(&inp.labeled, &inp.unlabeled, &inp.f_labeled, &inp.f_unlabeled)?;
    let opts = OptimizerOptions {
        tol: a.tol,
        max_iter: a.max_iter,
        ..OptimizerOptions::default()
    };
    let r = glm_estimate(&data, a.estimator, &a.input.oracle, a.family, &opts)?;
    let z = two_sided_z(a.input.level)?;
    let se = r.std_errors();
    let intervals = r
        .theta_hat
        .iter()
        .zip(&se)
        .map(|(t, s)| Interval {
            level: a.input.level,
            lower: t - z * s,
            upper: t + z * s,
        })
        .collect();
    let out = GlmOutput {
        schema: GLM_SCHEMA,
        estimator: a.estimator,
        family: a.family.to_string(),
        theta_hat: r.theta_hat.clone(),
        theta_mle: r.theta_mle.clone(),
        lambda_hat: r.lambda_hat,
        std_errors: se,
        intervals,
        covariance: r.covariance.scale(1.0 / r.n as f64).to_rows(),
        amse_estimate: r.amse_estimate,
        convergence: r.convergence,
        region: RegionInfo {
            description: r.region.describe(),
            degenerate: r.degenerate,
            labeled_in_region: r.labeled_in_region,
            unlabeled_in_region: r.unlabeled_in_region,
        },
        rows: inp.rows,
    };
    emit(&out, a.input.output.as_deref())
}

fn report_format(explicit: Option<&str>, out: &Path) -> Result<ReportFormat> {
    match explicit {
        Some(f) => f.parse(),
        None => match out.extension().and_then(|e| e.to_str()) {
            Some("json") => Ok(ReportFormat::Json),
            _ => Ok(ReportFormat::Csv),
        },
    }
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.6e}"))
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut spec = a.scenario.spec(a.n, a.big_n)?.with_replications(a.reps);
    if let Some(e) = &a.estimators {
        spec = spec.with_estimators(e);
    }
    spec.lambda = a.lambda;
    if let Some(s) = a.split {
        spec.split_fraction = s;
    }
    if let Some(l) = a.level {
        spec.level = l;
    }
    let format = report_format(a.format.as_deref(), &a.out)?;
    let report = run_monte_carlo(&spec)?;
    export_report(&report, format, &a.out)?;
    let manifest = a.manifest.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".manifest.json");
        PathBuf::from(p)
    });
    write_manifest(&report, &a.out, &manifest)?;
    let mut out = std::io::stdout().lock();
    for s in &report.estimators {
        writeln!(
            out,
            "{:<10} mse={} mse_se={} variance={} coverage={} lambda={} ok={}/{}",
            s.estimator.as_str(),
            fmt_metric(s.mse),
            fmt_metric(s.mse_se),
            fmt_metric(s.variance),
            fmt_metric(s.coverage),
            fmt_metric(s.mean_lambda),
            s.successes,
            s.successes + s.failures,
        )?;
    }
    eprintln!("simulation time: {:.3}s", report.wall_time_secs);
    Ok(())
}

fn recovery(a: &RecoveryArgs) -> Result<()> {
    let mut spec = a.scenario.spec(a.n_grid.iter().copied().max().unwrap_or(1), 1)?.with_replications(a.reps);
    spec.probe_size = a.probe;
    let rows = region_recovery_experiment(&spec, &a.n_grid)?;
    let mut text = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut text);
        w.write_record(["scenario", "prediction", "n", "replications", "metric", "value", "std_error"])?;
        for r in &rows {
            w.write_record([
                spec.scenario.to_string(),
                spec.prediction.to_string(),
                r.n.to_string(),
                r.replications.to_string(),
                r.metric.to_string(),
                r.value.to_string(),
                r.std_error.to_string(),
            ])?;
        }
        w.flush()?;
    }
    match &a.out {
        Some(p) => std::fs::write(p, &text)?,
        None => std::io::stdout().lock().write_all(&text)?,
    }
    Ok(())
}

fn generate_files(a: &GenerateArgs) -> Result<()> {
    let spec = a.scenario.spec(a.n, a.big_n)?;
    let g = generate(&spec, a.rep)?;
    let (fl, fu) = if a.no_predictions {
        (None, None)
    } else {
        (Some(g.f_labeled.as_slice()), Some(g.f_unlabeled.as_slice()))
    };
    write_labeled(std::fs::File::create(&a.labeled_out)?, &g.labeled, fl)?;
    write_unlabeled(std::fs::File::create(&a.unlabeled_out)?, &g.unlabeled, fu)?;
    Ok(())
}
