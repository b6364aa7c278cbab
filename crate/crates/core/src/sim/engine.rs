use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::report::{EstimatorSummary, SimulationReport, REPORT_SCHEMA};
use super::scenario::{
    generate, generate_covariates, generate_labeled, prediction_function, scenario1_categories, truth,
    Estimator, GeneratedData, ScenarioId, ScenarioSpec, Target, Truth,
};
use crate::data::{Factor, PredictionSource, Region, SemiSupervised};
use crate::error::{FppiError, Result};
use crate::glm::{glm_mle, glm_with_region, GlmFppiResult, OptimizerOptions, WeightRule};
use crate::linalg::{compensated_sum, Matrix};
use crate::mean::{
    algorithm1_split_estimate, classical_mean, confidence_interval, fppi_mean, fppi_mean_plugin,
    ppi_plusplus_mean, ppi_plusplus_plugin, MeanFppiResult,
};
use crate::normal::two_sided_z;
use crate::region::{
    centered_oracle_region, estimate_region_continuous, estimate_region_discrete, estimate_region_glm,
    mis_recovery_probability,
};
use crate::rng::{derive_seed, Purpose, Stream};

/// Thread count from `FPPI_THREADS`; unset or empty means rayon's default.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var("FPPI_THREADS") {
        Ok(v) if !v.trim().is_empty() => match v.trim().parse::<usize>() {
            Ok(0) | Err(_) => Err(FppiError::invalid(format!(
                "FPPI_THREADS must be a positive integer, got `{v}`"
            ))),
            Ok(k) => Ok(Some(k)),
        },
        _ => Ok(None),
    }
}

fn with_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        builder = builder.num_threads(k);
    }
    let pool = builder
        .build()
        .map_err(|e| FppiError::invalid(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(job))
}

/// What one estimator produced on one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct RepOutcome {
    pub estimate: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub lambda: f64,
    pub recovered: Option<bool>,
}

fn threshold_region(t: f64) -> Region {
    let g: Factor = Arc::new(move |x, _| x[0] - t);
    let h: Factor = Arc::new(|_, _| 1.0);
    Region::sign_product(g, h, Some(1), format!("x > {t}"))
}

fn same_categories(a: &Region, b: &Region) -> Result<bool> {
    let cats = Matrix::from_rows(&scenario1_categories())?;
    let preds = [0.0; 4];
    Ok(a.membership_vector(&cats, &preds)? == b.membership_vector(&cats, &preds)?)
}

/// Region used by `fppi` for mean targets.
fn mean_region(spec: &ScenarioSpec, data: &SemiSupervised<'_>) -> Result<(Region, Vec<Vec<f64>>)> {
    match spec.scenario {
        ScenarioId::Example1 | ScenarioId::Example2 => Ok((threshold_region(spec.threshold), Vec::new())),
        ScenarioId::Scenario1 if spec.oracle == crate::oracles::OracleSpec::CategoryMean => {
            let est = estimate_region_discrete(
                data.labeled,
                &scenario1_categories(),
                &PredictionSource::Precomputed(data.f_labeled.to_vec()),
            )?;
            Ok((est.region, est.excluded))
        }
        _ => {
            let m_hat = spec.oracle.fit(data.labeled)?;
            let y = data.labeled.y();
            let y_bar = y.iter().sum::<f64>() / y.len() as f64;
            let region = centered_oracle_region(
                m_hat,
                y_bar,
                &PredictionSource::Precomputed(Vec::new()),
                data.labeled.dim(),
            );
            Ok((region, Vec::new()))
        }
    }
}

fn mean_outcome(r: &MeanFppiResult, spec: &ScenarioSpec, truth: &Truth, recovered: Option<bool>) -> Result<RepOutcome> {
    let ci = confidence_interval(r, spec.level)?;
    let _ = truth;
    Ok(RepOutcome {
        estimate: vec![r.theta_hat],
        std_errors: vec![ci.std_error],
        lambda: r.lambda_hat,
        recovered,
    })
}

fn run_mean_estimator(
    spec: &ScenarioSpec,
    est: Estimator,
    data: &SemiSupervised<'_>,
    truth: &Truth,
    rep: u64,
) -> Result<RepOutcome> {
    let discrete = spec.scenario == ScenarioId::Scenario1;
    match est {
        Estimator::Classical => mean_outcome(&classical_mean(data)?, spec, truth, None),
        Estimator::Ppi => mean_outcome(&ppi_plusplus_mean(data, 1.0)?, spec, truth, None),
        Estimator::PpiPlusPlus => {
            let r = match spec.lambda {
                Some(l) => ppi_plusplus_mean(data, l)?,
                None => ppi_plusplus_plugin(data)?,
            };
            mean_outcome(&r, spec, truth, None)
        }
        Estimator::Fppi => {
            let (region, excluded) = mean_region(spec, data)?;
            let mut r = match spec.lambda {
                Some(l) => fppi_mean(data, &region, l)?,
                None => fppi_mean_plugin(data, &region)?,
            };
            r.diagnostics.excluded_categories = excluded;
            let recovered = if discrete {
                Some(same_categories(&region, &truth.oracle_region)?)
            } else {
                None
            };
            mean_outcome(&r, spec, truth, recovered)
        }
        Estimator::FppiSplit => {
            let r = algorithm1_split_estimate(data, spec.split_fraction, &spec.oracle, derive_seed(spec.seed, rep))?;
            let recovered = if discrete {
                Some(same_categories(&r.region, &truth.oracle_region)?)
            } else {
                None
            };
            mean_outcome(&r, spec, truth, recovered)
        }
    }
}

fn glm_outcome(r: &GlmFppiResult) -> RepOutcome {
    RepOutcome {
        estimate: r.theta_hat.clone(),
        std_errors: r.std_errors(),
        lambda: r.lambda_hat,
        recovered: None,
    }
}

fn run_glm_rep(spec: &ScenarioSpec, data: &SemiSupervised<'_>) -> Vec<Result<RepOutcome>> {
    let family = spec.family().expect("validated GLM target");
    let opts = OptimizerOptions::default();
    let mle = match glm_mle(data.labeled, family, &opts) {
        Ok(m) => m,
        Err(e) => {
            let msg = e.to_string();
            return spec.estimators.iter().map(|_| Err(FppiError::invalid(msg.clone()))).collect();
        }
    };
    let plugin_or_fixed = match spec.lambda {
        Some(l) => WeightRule::Fixed(l),
        None => WeightRule::Plugin,
    };
    spec.estimators
        .iter()
        .map(|est| {
            let r = match est {
                Estimator::Classical => glm_with_region(data, &Region::Empty, &mle, WeightRule::Fixed(0.0), family, &opts),
                Estimator::Ppi => glm_with_region(data, &Region::All, &mle, WeightRule::Fixed(1.0), family, &opts),
                Estimator::PpiPlusPlus => glm_with_region(data, &Region::All, &mle, plugin_or_fixed, family, &opts),
                Estimator::Fppi => spec.oracle.fit(data.labeled).and_then(|m_hat| {
                    let region = estimate_region_glm(
                        data.labeled,
                        m_hat,
                        &PredictionSource::Precomputed(Vec::new()),
                        &mle.theta,
                        family,
                    )?;
                    glm_with_region(data, &region, &mle, plugin_or_fixed, family, &opts)
                }),
                Estimator::FppiSplit => Err(FppiError::Unsupported("fppi-split for GLM targets".into())),
            };
            r.map(|r| glm_outcome(&r))
        })
        .collect()
}

/// Runs every requested estimator on one generated replication.
pub fn run_replication(spec: &ScenarioSpec, rep: u64) -> Result<(GeneratedData, Vec<Result<RepOutcome>>)> {
    let g = generate(spec, rep)?;
    let outcomes = {
        let data = SemiSupervised::new(&g.labeled, &g.unlabeled, &g.f_labeled, &g.f_unlabeled)?;
        match spec.target {
            Target::Mean => spec
                .estimators
                .iter()
                .map(|&e| run_mean_estimator(spec, e, &data, &g.truth, rep))
                .collect(),
            Target::Glm => run_glm_rep(spec, &data),
        }
    };
    Ok((g, outcomes))
}

fn summarize(est: Estimator, outcomes: &[Option<RepOutcome>], theta_star: &[f64], z: f64) -> (EstimatorSummary, Vec<f64>) {
    let ok: Vec<&RepOutcome> = outcomes.iter().flatten().collect();
    let sq_errors: Vec<f64> = outcomes
        .iter()
        .map(|o| match o {
            Some(o) => o.estimate.iter().zip(theta_star).map(|(a, b)| (a - b) * (a - b)).sum(),
            None => f64::NAN,
        })
        .collect();
    let failures = outcomes.len() - ok.len();
    if ok.is_empty() {
        return (
            EstimatorSummary {
                estimator: est,
                successes: 0,
                failures,
                mean_estimate: Vec::new(),
                mse: None,
                mse_se: None,
                variance: None,
                bias_sq: None,
                coverage: None,
                recovery_rate: None,
                mean_lambda: None,
            },
            sq_errors,
        );
    }
    let r = ok.len() as f64;
    let p = theta_star.len();
    let mean_estimate: Vec<f64> = (0..p)
        .map(|k| compensated_sum(ok.iter().map(|o| o.estimate[k])) / r)
        .collect();
    let variance: f64 = (0..p)
        .map(|k| compensated_sum(ok.iter().map(|o| (o.estimate[k] - mean_estimate[k]).powi(2))) / r)
        .sum();
    let bias_sq: f64 = mean_estimate.iter().zip(theta_star).map(|(m, t)| (m - t).powi(2)).sum();
    let errs: Vec<f64> = sq_errors.iter().copied().filter(|v| v.is_finite()).collect();
    let mse = compensated_sum(errs.iter().copied()) / r;
    let mse_se = if ok.len() > 1 {
        (compensated_sum(errs.iter().map(|e| (e - mse).powi(2))) / (r - 1.0) / r).sqrt()
    } else {
        0.0
    };
    let covered = compensated_sum(ok.iter().map(|o| {
        let hits = o
            .estimate
            .iter()
            .zip(&o.std_errors)
            .zip(theta_star)
            .filter(|((e, s), t)| (*e - *t).abs() <= z * *s)
            .count();
        hits as f64 / p as f64
    })) / r;
    let flags: Vec<bool> = ok.iter().filter_map(|o| o.recovered).collect();
    let recovery_rate = (!flags.is_empty())
        .then(|| flags.iter().filter(|&&b| b).count() as f64 / flags.len() as f64);
    (
        EstimatorSummary {
            estimator: est,
            successes: ok.len(),
            failures,
            mean_estimate,
            mse: Some(mse),
            mse_se: Some(mse_se),
            variance: Some(variance),
            bias_sq: Some(bias_sq),
            coverage: Some(covered),
            recovery_rate,
            mean_lambda: Some(compensated_sum(ok.iter().map(|o| o.lambda)) / r),
        },
        sq_errors,
    )
}

pub fn run_monte_carlo(spec: &ScenarioSpec) -> Result<SimulationReport> {
    run_monte_carlo_with_threads(spec, threads_from_env()?)
}

/// Replications run in parallel; each draws from its own keyed streams and
/// results are aggregated in replication order, so the report does not
/// depend on the thread count.
pub fn run_monte_carlo_with_threads(spec: &ScenarioSpec, threads: Option<usize>) -> Result<SimulationReport> {
    spec.validate()?;
    let start = Instant::now();
    let theta_star = truth(spec)?.theta_star;
    let z = two_sided_z(spec.level)?;
    let per_rep: Vec<Result<Vec<Option<RepOutcome>>>> = with_pool(threads, || {
        (0..spec.replications as u64)
            .into_par_iter()
            .map(|rep| {
                let (_, outcomes) = run_replication(spec, rep)?;
                Ok(outcomes.into_iter().map(Result::ok).collect())
            })
            .collect()
    })?;
    let per_rep: Vec<Vec<Option<RepOutcome>>> = per_rep.into_iter().collect::<Result<_>>()?;

    let mut estimators = Vec::new();
    let mut squared_errors = Vec::new();
    for (k, &est) in spec.estimators.iter().enumerate() {
        let column: Vec<Option<RepOutcome>> = per_rep.iter().map(|o| o[k].clone()).collect();
        let (summary, errs) = summarize(est, &column, &theta_star, z);
        estimators.push(summary);
        squared_errors.push(errs);
    }
    Ok(SimulationReport {
        schema: REPORT_SCHEMA.into(),
        spec: spec.clone(),
        theta_star,
        estimators,
        wall_time_secs: start.elapsed().as_secs_f64(),
        squared_errors,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryRow {
    pub n: usize,
    pub replications: usize,
    /// `exact_recovery` (discrete) or `mis_recovery` (continuous).
    pub metric: &'static str,
    pub value: f64,
    pub std_error: f64,
}

fn recovery_one(spec: &ScenarioSpec, truth: &Truth, seed: u64, n: usize, rep: u64) -> Result<f64> {
    let labeled = generate_labeled(spec, &mut Stream::new(seed, Purpose::Labeled, rep), n)?;
    let f = prediction_function(spec.scenario, spec.prediction);
    let source = PredictionSource::Function(Arc::clone(&f));
    if spec.scenario == ScenarioId::Scenario1 {
        let est = estimate_region_discrete(&labeled, &scenario1_categories(), &source)?;
        return Ok(f64::from(u8::from(same_categories(&est.region, &truth.oracle_region)?)));
    }
    let m_hat = spec.oracle.fit(&labeled)?;
    let region = match spec.family() {
        Some(family) => {
            let mle = glm_mle(&labeled, family, &OptimizerOptions::default())?;
            estimate_region_glm(&labeled, m_hat, &source, &mle.theta, family)?
        }
        None => estimate_region_continuous(&labeled, m_hat, &source)?,
    };
    let probe = generate_covariates(spec, &mut Stream::new(seed, Purpose::Probe, rep), spec.probe_size)?;
    let preds: Vec<f64> = probe.x().row_iter().map(|r| f(r)).collect();
    mis_recovery_probability(&region, &truth.oracle_region, &probe, &preds)
}

/// Region recovery as the labeled sample grows: exact-recovery rate for the
/// discrete scenario, mean mis-recovery probability on a fresh probe
/// otherwise. Each `n` uses its own derived seed.
pub fn region_recovery_experiment(spec: &ScenarioSpec, n_grid: &[usize]) -> Result<Vec<RecoveryRow>> {
    region_recovery_with_threads(spec, n_grid, threads_from_env()?)
}

pub fn region_recovery_with_threads(
    spec: &ScenarioSpec,
    n_grid: &[usize],
    threads: Option<usize>,
) -> Result<Vec<RecoveryRow>> {
    spec.validate()?;
    let truth = truth(spec)?;
    let metric = if spec.scenario == ScenarioId::Scenario1 {
        "exact_recovery"
    } else {
        "mis_recovery"
    };
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let seed = derive_seed(spec.seed, n as u64);
        let values: Vec<f64> = with_pool(threads, || {
            (0..spec.replications as u64)
                .into_par_iter()
                .map(|rep| recovery_one(spec, &truth, seed, n, rep))
                .collect::<Result<Vec<f64>>>()
        })??;
        let r = values.len() as f64;
        let mean = compensated_sum(values.iter().copied()) / r;
        let var = if values.len() > 1 {
            compensated_sum(values.iter().map(|v| (v - mean).powi(2))) / (r - 1.0)
        } else {
            0.0
        };
        rows.push(RecoveryRow {
            n,
            replications: values.len(),
            metric,
            value: mean,
            std_error: (var / r).sqrt(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scenario::PredictionId;

    #[test]
    fn single_classical_rep_is_squared_error_of_mean() {
        let spec = ScenarioSpec::new(ScenarioId::Scenario1, PredictionId::F3, 40, 100)
            .with_seed(11)
            .with_replications(1)
            .with_estimators(&[Estimator::Classical]);
        let report = run_monte_carlo_with_threads(&spec, Some(1)).unwrap();
        let g = generate(&spec, 0).unwrap();
        let ybar = g.labeled.y().iter().sum::<f64>() / 40.0;
        assert_eq!(report.estimators[0].mse, Some((ybar - 3.0) * (ybar - 3.0)));
    }

    #[test]
    fn decomposition_and_thread_independence() {
        let spec = ScenarioSpec::new(ScenarioId::Scenario1, PredictionId::F2, 60, 300)
            .with_seed(3)
            .with_replications(40)
            .with_estimators(&[Estimator::Classical, Estimator::Ppi, Estimator::PpiPlusPlus, Estimator::Fppi, Estimator::FppiSplit]);
        let a = run_monte_carlo_with_threads(&spec, Some(1)).unwrap();
        let b = run_monte_carlo_with_threads(&spec, Some(3)).unwrap();
        assert_eq!(a.estimators, b.estimators);
        for s in &a.estimators {
            let (mse, var, b2) = (s.mse.unwrap(), s.variance.unwrap(), s.bias_sq.unwrap());
            assert!((mse - var - b2).abs() <= 1e-12 * mse.max(1.0), "{s:?}");
        }
        assert!(a.summary(Estimator::Fppi).unwrap().recovery_rate.is_some());
    }

    #[test]
    fn noiseless_discrete_recovery_is_exact() {
        let mut spec = ScenarioSpec::new(ScenarioId::Scenario1, PredictionId::F3, 40, 10).with_replications(20);
        spec.noise_sd = Some(0.0);
        // with n = 40 every category is present with overwhelming probability
        let rows = region_recovery_with_threads(&spec, &[40, 80], Some(1)).unwrap();
        assert!(rows.iter().all(|r| r.value == 1.0), "{rows:?}");
    }
}
