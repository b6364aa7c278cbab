//! Synthetic data-generating processes and their ground truth.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, Region, RowFn, UnlabeledDataset};
use crate::error::{FppiError, Result};
use crate::glm::{glm_mle, GlmFamily, OptimizerOptions};
use crate::linalg::{compensated_sum, dot, Matrix};
use crate::oracles::{ols_fit, OracleSpec};
use crate::region::{oracle_region_glm, oracle_region_mean};
use crate::rng::{Purpose, Stream};

/// Seed of the large reference draw used for pseudo-true parameters. Fixed
/// once, independent of any simulation seed.
pub const REFERENCE_SEED: u64 = 1_000_003;
pub const REFERENCE_ROWS: usize = 1_000_000;

macro_rules! string_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(&self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

string_enum!(ScenarioId {
    Example1 => "example1",
    Example2 => "example2",
    Scenario1 => "scenario1",
    Scenario2 => "scenario2",
    Scenario3 => "scenario3",
    MarginSeparation => "margin_separation",
});

string_enum!(PredictionId {
    F1 => "f1",
    F2 => "f2",
    F3 => "f3",
});

string_enum!(Estimator {
    Classical => "classical",
    Ppi => "ppi",
    PpiPlusPlus => "ppi++",
    Fppi => "fppi",
    FppiSplit => "fppi-split",
});

string_enum!(Target {
    Mean => "mean",
    Glm => "glm",
});

impl FromStr for ScenarioId {
    type Err = FppiError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|v| v.as_str() == s.trim())
            .ok_or_else(|| FppiError::UnknownScenario(s.to_string()))
    }
}

impl FromStr for PredictionId {
    type Err = FppiError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|v| v.as_str() == s.trim())
            .ok_or_else(|| FppiError::invalid(format!("unknown prediction `{s}` (expected f1, f2 or f3)")))
    }
}

impl FromStr for Estimator {
    type Err = FppiError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|v| v.as_str() == s.trim())
            .ok_or_else(|| {
                FppiError::invalid(format!(
                    "unknown estimator `{s}` (expected classical, ppi, ppi++, fppi or fppi-split)"
                ))
            })
    }
}

impl FromStr for Target {
    type Err = FppiError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|v| v.as_str() == s.trim())
            .ok_or_else(|| FppiError::invalid(format!("unknown target `{s}` (expected mean or glm)")))
    }
}

/// Everything that determines a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: ScenarioId,
    pub prediction: PredictionId,
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub replications: usize,
    pub seed: u64,
    pub estimators: Vec<Estimator>,
    pub target: Target,
    /// Conditional-mean oracle used for region estimation.
    pub oracle: OracleSpec,
    /// Fixed weight for `ppi++` and `fppi` instead of the plug-in one.
    pub lambda: Option<f64>,
    /// Fraction of labeled rows that fit the region in `fppi-split`.
    pub split_fraction: f64,
    pub level: f64,
    /// Noise standard deviation; `None` keeps the scenario's own value.
    pub noise_sd: Option<f64>,
    /// Filter threshold `x > t` of the single-covariate examples.
    pub threshold: f64,
    /// Inner support bound `c` of the margin-separation fixture.
    pub margin_c: f64,
    /// Density exponent `ℓ` of the margin-separation fixture.
    pub margin_ell: f64,
    /// Probe size for mis-recovery measurements.
    pub probe_size: usize,
}

impl ScenarioSpec {
    /// Defaults that follow the scenario: category means for the discrete
    /// scenario, 15-NN elsewhere, GLM targets for the regression scenarios.
    pub fn new(scenario: ScenarioId, prediction: PredictionId, n: usize, big_n: usize) -> Self {
        let target = match scenario {
            ScenarioId::Scenario2 | ScenarioId::Scenario3 => Target::Glm,
            _ => Target::Mean,
        };
        let oracle = match scenario {
            ScenarioId::Scenario1 => OracleSpec::CategoryMean,
            _ => OracleSpec::Knn { k: 15 },
        };
        Self {
            scenario,
            prediction,
            n,
            big_n,
            replications: 1000,
            seed: 0,
            estimators: vec![Estimator::Classical, Estimator::PpiPlusPlus, Estimator::Fppi],
            target,
            oracle,
            lambda: None,
            split_fraction: 0.5,
            level: 0.95,
            noise_sd: None,
            threshold: 1.0,
            margin_c: 0.5,
            margin_ell: 1.0,
            probe_size: 10_000,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_replications(mut self, reps: usize) -> Self {
        self.replications = reps;
        self
    }

    pub fn with_estimators(mut self, estimators: &[Estimator]) -> Self {
        self.estimators = estimators.to_vec();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.big_n == 0 {
            return Err(FppiError::invalid("n and N must be positive"));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(FppiError::invalid("split fraction must lie in (0, 1)"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(FppiError::invalid("level must lie in (0, 1)"));
        }
        if let Some(s) = self.noise_sd {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(FppiError::invalid("noise standard deviation must be non-negative"));
            }
        }
        if let Some(l) = self.lambda {
            if !l.is_finite() {
                return Err(FppiError::invalid("fixed weight must be finite"));
            }
        }
        if self.scenario == ScenarioId::MarginSeparation
            && !(self.margin_c > 0.0 && self.margin_c < 1.0 && self.margin_ell > 0.0)
        {
            return Err(FppiError::invalid("margin fixture needs 0 < c < 1 and ell > 0"));
        }
        if self.target == Target::Glm {
            if !matches!(self.scenario, ScenarioId::Scenario2 | ScenarioId::Scenario3) {
                return Err(FppiError::Unsupported(format!(
                    "GLM target is only defined for scenario2 and scenario3, not {}",
                    self.scenario
                )));
            }
            if self.estimators.contains(&Estimator::FppiSplit) {
                return Err(FppiError::Unsupported(
                    "fppi-split is only available for mean targets".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn noise(&self) -> f64 {
        self.noise_sd.unwrap_or(match self.scenario {
            ScenarioId::Scenario2 => 2.0,
            _ => 1.0,
        })
    }

    pub fn family(&self) -> Option<GlmFamily> {
        match (self.target, self.scenario) {
            (Target::Glm, ScenarioId::Scenario2) => Some(GlmFamily::gaussian(1.0)),
            (Target::Glm, ScenarioId::Scenario3) => Some(GlmFamily::Bernoulli),
            _ => None,
        }
    }

    pub fn dim(&self) -> usize {
        match self.scenario {
            ScenarioId::Scenario2 | ScenarioId::Scenario3 => 4,
            _ => 1,
        }
    }
}

const S1_M: [f64; 4] = [-2.0, -1.0, 5.0, 10.0];
const S1_F: [[f64; 4]; 3] = [
    [1.0, 1.0, -5.0, 3.0],
    [-1.0, 1.0, -1.0, 1.0],
    [-5.0, 1.0, 1.0, 3.0],
];

fn prediction_index(p: PredictionId) -> usize {
    match p {
        PredictionId::F1 => 0,
        PredictionId::F2 => 1,
        PredictionId::F3 => 2,
    }
}

fn sigmoid(v: f64) -> f64 {
    GlmFamily::Bernoulli.mean(v)
}

fn sum_sin_cos(x: &[f64]) -> (f64, f64) {
    x.iter().fold((0.0, 0.0), |(s, c), &v| (s + v.sin(), c + v.cos()))
}

fn smooth_prediction(p: PredictionId, x: &[f64]) -> f64 {
    let (s, c) = sum_sin_cos(x);
    match p {
        PredictionId::F1 => 2.5 * s - 0.5 * c,
        PredictionId::F2 => 2.25 * s - 0.25 * c,
        PredictionId::F3 => 2.0 * s,
    }
}

/// Conditional mean `E[Y | x]` of the scenario.
pub fn regression_function(scenario: ScenarioId) -> RowFn {
    match scenario {
        ScenarioId::Scenario1 => Arc::new(|x| S1_M[x[0] as usize]),
        ScenarioId::Scenario2 => Arc::new(|x| {
            let (s, c) = sum_sin_cos(x);
            s + c
        }),
        ScenarioId::Scenario3 => Arc::new(|x| {
            let (s, c) = sum_sin_cos(x);
            sigmoid(s + c - 2.0)
        }),
        ScenarioId::Example1 | ScenarioId::Example2 | ScenarioId::MarginSeparation => Arc::new(|x| x[0]),
    }
}

/// The scenario's prediction function.
pub fn prediction_function(scenario: ScenarioId, prediction: PredictionId) -> RowFn {
    let j = prediction_index(prediction);
    match scenario {
        ScenarioId::Scenario1 => Arc::new(move |x| S1_F[j][x[0] as usize]),
        ScenarioId::Scenario2 => Arc::new(move |x| smooth_prediction(prediction, x)),
        ScenarioId::Scenario3 => Arc::new(move |x| sigmoid(smooth_prediction(prediction, x))),
        ScenarioId::Example1 | ScenarioId::Example2 => Arc::new(|x| (x[0] - 1.0).powi(2) - 1.0),
        ScenarioId::MarginSeparation => Arc::new(|_| 1.0),
    }
}

/// `scenarioN:fJ` (or a bare scenario id for single-prediction scenarios).
pub fn registered_predictor(name: &str) -> Result<RowFn> {
    let (scenario, pred) = match name.split_once(':') {
        Some((s, p)) => (s.parse::<ScenarioId>()?, p.parse::<PredictionId>()?),
        None => (name.parse::<ScenarioId>()?, PredictionId::F1),
    };
    Ok(prediction_function(scenario, pred))
}

/// Exact discrete category list of the four-category scenario.
pub fn scenario1_categories() -> Vec<Vec<f64>> {
    (0..4).map(|k| vec![f64::from(k)]).collect()
}

fn draw_x(spec: &ScenarioSpec, s: &mut Stream, row: &mut [f64]) {
    match spec.scenario {
        ScenarioId::Scenario1 => row[0] = s.below(4) as f64,
        ScenarioId::Scenario2 | ScenarioId::Scenario3 => {
            for v in row.iter_mut() {
                *v = s.normal();
            }
        }
        ScenarioId::Example1 | ScenarioId::Example2 => row[0] = 1.0 + s.normal(),
        ScenarioId::MarginSeparation => {
            // inverse CDF of the density ∝ |x|^ℓ on c ≤ |x| ≤ 1, random sign
            let a = spec.margin_ell + 1.0;
            let lo = spec.margin_c.powf(a);
            let mag = (lo + s.uniform() * (1.0 - lo)).powf(1.0 / a);
            row[0] = if s.uniform() < 0.5 { -mag } else { mag };
        }
    }
}

fn draw_y(spec: &ScenarioSpec, m: &RowFn, s: &mut Stream, x: &[f64]) -> f64 {
    match spec.scenario {
        ScenarioId::Scenario3 => f64::from(u8::from(s.bernoulli(m(x)))),
        _ => m(x) + spec.noise() * s.normal(),
    }
}

pub fn generate_labeled(spec: &ScenarioSpec, stream: &mut Stream, n: usize) -> Result<LabeledDataset> {
    let p = spec.dim();
    let m = regression_function(spec.scenario);
    let mut x = vec![0.0; n * p];
    let mut y = Vec::with_capacity(n);
    for row in x.chunks_exact_mut(p) {
        draw_x(spec, stream, row);
        y.push(draw_y(spec, &m, stream, row));
    }
    LabeledDataset::new(Matrix::from_vec(n, p, x)?, y)
}

pub fn generate_covariates(spec: &ScenarioSpec, stream: &mut Stream, rows: usize) -> Result<UnlabeledDataset> {
    let p = spec.dim();
    let mut x = vec![0.0; rows * p];
    for row in x.chunks_exact_mut(p) {
        draw_x(spec, stream, row);
    }
    UnlabeledDataset::new(Matrix::from_vec(rows, p, x)?)
}

/// Ground truth attached to every generated replication.
#[derive(Clone)]
pub struct Truth {
    /// Scalar mean, or the pseudo-true GLM coefficients.
    pub theta_star: Vec<f64>,
    /// The population informative region, where it is known.
    pub oracle_region: Region,
}

impl fmt::Debug for Truth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Truth")
            .field("theta_star", &self.theta_star)
            .field("oracle_region", &self.oracle_region)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub labeled: LabeledDataset,
    pub unlabeled: UnlabeledDataset,
    pub f_labeled: Vec<f64>,
    pub f_unlabeled: Vec<f64>,
    pub truth: Truth,
}

/// One replication: the labeled and unlabeled samples come from their own
/// streams keyed by `(seed, purpose, rep_index)`.
pub fn generate(spec: &ScenarioSpec, rep_index: u64) -> Result<GeneratedData> {
    spec.validate()?;
    let labeled = generate_labeled(spec, &mut Stream::new(spec.seed, Purpose::Labeled, rep_index), spec.n)?;
    let unlabeled = generate_covariates(
        spec,
        &mut Stream::new(spec.seed, Purpose::Unlabeled, rep_index),
        spec.big_n,
    )?;
    let f = prediction_function(spec.scenario, spec.prediction);
    let f_labeled = labeled.x().row_iter().map(|r| f(r)).collect();
    let f_unlabeled = unlabeled.x().row_iter().map(|r| f(r)).collect();
    Ok(GeneratedData {
        labeled,
        unlabeled,
        f_labeled,
        f_unlabeled,
        truth: truth(spec)?,
    })
}

fn population_mean(spec: &ScenarioSpec) -> Result<f64> {
    Ok(match spec.scenario {
        ScenarioId::Scenario1 => S1_M.iter().sum::<f64>() / 4.0,
        ScenarioId::Scenario2 => 4.0 * (-0.5f64).exp(),
        ScenarioId::Scenario3 => reference_value(spec, Target::Mean)?[0],
        ScenarioId::Example1 | ScenarioId::Example2 => 1.0,
        ScenarioId::MarginSeparation => 0.0,
    })
}

pub fn truth(spec: &ScenarioSpec) -> Result<Truth> {
    let f = prediction_function(spec.scenario, spec.prediction);
    let m = regression_function(spec.scenario);
    match spec.target {
        Target::Mean => {
            let mean = population_mean(spec)?;
            let oracle_region = match spec.scenario {
                ScenarioId::Scenario1 => {
                    let cats: Vec<Vec<f64>> = scenario1_categories()
                        .into_iter()
                        .filter(|c| (m(c) - mean) * f(c) > 0.0)
                        .collect();
                    if cats.is_empty() {
                        Region::Empty
                    } else {
                        Region::DiscreteSet(cats)
                    }
                }
                _ => oracle_region_mean(m, mean, f),
            };
            Ok(Truth {
                theta_star: vec![mean],
                oracle_region,
            })
        }
        Target::Glm => {
            let family = spec
                .family()
                .ok_or_else(|| FppiError::Unsupported(format!("no GLM target for {}", spec.scenario)))?;
            let theta = reference_value(spec, Target::Glm)?;
            let t = theta.clone();
            let mu: RowFn = Arc::new(move |x| family.mean(dot(x, &t)));
            Ok(Truth {
                theta_star: theta,
                oracle_region: oracle_region_glm(m, f, mu),
            })
        }
    }
}

type CacheKey = (ScenarioId, Target, u64);

fn reference_cache() -> &'static Mutex<HashMap<CacheKey, Vec<f64>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Vec<f64>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Population quantities that have no closed form, computed once on the
/// fixed reference draw and cached: the pseudo-true GLM coefficients, and
/// the response mean of the logistic scenario.
pub fn reference_value(spec: &ScenarioSpec, target: Target) -> Result<Vec<f64>> {
    let key = (spec.scenario, target, spec.noise().to_bits());
    if let Some(v) = reference_cache().lock().expect("cache poisoned").get(&key) {
        return Ok(v.clone());
    }
    let value = compute_reference(spec, target)?;
    reference_cache()
        .lock()
        .expect("cache poisoned")
        .insert(key, value.clone());
    Ok(value)
}

fn compute_reference(spec: &ScenarioSpec, target: Target) -> Result<Vec<f64>> {
    let mut s = Stream::new(REFERENCE_SEED, Purpose::Reference, 0);
    match (target, spec.scenario) {
        (Target::Mean, ScenarioId::Scenario3) => {
            let x = generate_covariates(spec, &mut s, REFERENCE_ROWS)?;
            let m = regression_function(spec.scenario);
            let total = compensated_sum(x.x().row_iter().map(|r| m(r)));
            Ok(vec![total / REFERENCE_ROWS as f64])
        }
        (Target::Glm, ScenarioId::Scenario2) => {
            let d = generate_labeled(spec, &mut s, REFERENCE_ROWS)?;
            Ok(ols_fit(&d)?.theta)
        }
        (Target::Glm, ScenarioId::Scenario3) => {
            let d = generate_labeled(spec, &mut s, REFERENCE_ROWS)?;
            let opts = OptimizerOptions {
                tol: 1e-10,
                max_iter: 20_000,
                ..Default::default()
            };
            Ok(glm_mle(&d, GlmFamily::Bernoulli, &opts)?.theta)
        }
        _ => Err(FppiError::Unsupported(format!(
            "no reference quantity for {} with a {} target",
            spec.scenario, target
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for s in ScenarioId::ALL {
            assert_eq!(s.as_str().parse::<ScenarioId>().unwrap(), *s);
        }
        for e in Estimator::ALL {
            assert_eq!(e.as_str().parse::<Estimator>().unwrap(), *e);
        }
        assert!(matches!("scenario9".parse::<ScenarioId>(), Err(FppiError::UnknownScenario(_))));
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = ScenarioSpec::new(ScenarioId::Scenario2, PredictionId::F3, 20, 30)
            .with_seed(5)
            .with_estimators(&[Estimator::Classical]);
        let spec = ScenarioSpec { target: Target::Mean, ..spec };
        let a = generate(&spec, 3).unwrap();
        let b = generate(&spec, 3).unwrap();
        let c = generate(&spec, 4).unwrap();
        assert_eq!(a.labeled.x(), b.labeled.x());
        assert_eq!(a.labeled.y(), b.labeled.y());
        assert_eq!(a.f_unlabeled, b.f_unlabeled);
        assert_ne!(a.labeled.y(), c.labeled.y());
    }

    #[test]
    fn scenario1_truth() {
        for (p, want) in [
            (PredictionId::F1, vec![vec![3.0]]),
            (PredictionId::F2, vec![vec![0.0], vec![3.0]]),
            (PredictionId::F3, vec![vec![0.0], vec![2.0], vec![3.0]]),
        ] {
            let t = truth(&ScenarioSpec::new(ScenarioId::Scenario1, p, 10, 10)).unwrap();
            assert_eq!(t.theta_star, vec![3.0]);
            match t.oracle_region {
                Region::DiscreteSet(c) => assert_eq!(c, want),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn margin_draws_respect_support() {
        let mut spec = ScenarioSpec::new(ScenarioId::MarginSeparation, PredictionId::F1, 10, 10);
        spec.margin_c = 0.3;
        let x = generate_covariates(&spec, &mut Stream::new(1, Purpose::Probe, 0), 5000).unwrap();
        assert!(x.x().as_slice().iter().all(|v| (0.3..=1.0).contains(&v.abs())));
        let pos = x.x().as_slice().iter().filter(|v| **v > 0.0).count();
        assert!((pos as f64 / 5000.0 - 0.5).abs() < 0.05);
    }

    #[test]
    fn registered_predictors() {
        let f = registered_predictor("scenario1:f3").unwrap();
        assert_eq!(f(&[0.0]), -5.0);
        let g = registered_predictor("example1").unwrap();
        assert_eq!(g(&[3.0]), 3.0);
        assert!(registered_predictor("scenario1:f9").is_err());
    }

    #[test]
    fn glm_target_rejects_split_and_mean_scenarios() {
        let spec = ScenarioSpec::new(ScenarioId::Scenario2, PredictionId::F3, 10, 10)
            .with_estimators(&[Estimator::FppiSplit]);
        assert!(matches!(spec.validate(), Err(FppiError::Unsupported(_))));
        let spec = ScenarioSpec {
            target: Target::Glm,
            ..ScenarioSpec::new(ScenarioId::Scenario1, PredictionId::F3, 10, 10)
        };
        assert!(spec.validate().is_err());
    }
}
