//! Dataset, prediction, region and interval types shared by every estimator.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{FppiError, Result};
use crate::linalg::Matrix;

fn check_finite(x: &Matrix, context: &'static str) -> Result<()> {
    for (i, row) in x.row_iter().enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(FppiError::NonFinite { context, row: i });
        }
    }
    Ok(())
}

/// The expensive sample: covariates with observed responses.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    x: Matrix,
    y: Vec<f64>,
}

impl LabeledDataset {
    pub fn new(x: Matrix, y: Vec<f64>) -> Result<Self> {
        if y.is_empty() {
            return Err(FppiError::Empty("labeled dataset"));
        }
        if x.cols() == 0 {
            return Err(FppiError::Empty("labeled covariates have no columns"));
        }
        if x.rows() != y.len() {
            return Err(FppiError::DimensionMismatch {
                context: "labeled rows vs responses",
                expected: x.rows(),
                found: y.len(),
            });
        }
        check_finite(&x, "labeled covariates")?;
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(FppiError::NonFinite {
                context: "labeled responses",
                row: i,
            });
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let y = indices.iter().map(|&i| self.y[i]).collect();
        Self::new(self.x.select_rows(indices), y)
    }
}

/// The cheap sample: covariates only.
#[derive(Debug, Clone)]
pub struct UnlabeledDataset {
    x: Matrix,
}

impl UnlabeledDataset {
    pub fn new(x: Matrix) -> Result<Self> {
        if x.rows() == 0 {
            return Err(FppiError::Empty("unlabeled dataset"));
        }
        if x.cols() == 0 {
            return Err(FppiError::Empty("unlabeled covariates have no columns"));
        }
        check_finite(&x, "unlabeled covariates")?;
        Ok(Self { x })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }
}

/// Deterministic map from a covariate row to a real number.
pub type RowFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Where prediction values come from.
#[derive(Clone)]
pub enum PredictionSource {
    /// One value per row of the dataset it annotates.
    Precomputed(Vec<f64>),
    /// A prediction function evaluated on demand.
    Function(RowFn),
}

impl PredictionSource {
    pub fn function<F>(f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        PredictionSource::Function(Arc::new(f))
    }

    /// Prediction values aligned row-for-row with `x`.
    pub fn values_for(&self, x: &Matrix) -> Result<Vec<f64>> {
        let values = match self {
            PredictionSource::Precomputed(v) => {
                if v.len() != x.rows() {
                    return Err(FppiError::DimensionMismatch {
                        context: "precomputed predictions vs dataset rows",
                        expected: x.rows(),
                        found: v.len(),
                    });
                }
                v.clone()
            }
            PredictionSource::Function(f) => x.row_iter().map(|r| f(r)).collect(),
        };
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FppiError::NonFinite {
                context: "predictions",
                row: i,
            });
        }
        Ok(values)
    }
}

impl fmt::Debug for PredictionSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictionSource::Precomputed(v) => write!(f, "Precomputed({} values)", v.len()),
            PredictionSource::Function(_) => f.write_str("Function"),
        }
    }
}

/// A labeled and an unlabeled sample together with their prediction values.
/// Every estimator in the crate consumes this bundle.
#[derive(Debug, Clone, Copy)]
pub struct SemiSupervised<'a> {
    pub labeled: &'a LabeledDataset,
    pub unlabeled: &'a UnlabeledDataset,
    pub f_labeled: &'a [f64],
    pub f_unlabeled: &'a [f64],
}

impl<'a> SemiSupervised<'a> {
    pub fn new(
        labeled: &'a LabeledDataset,
        unlabeled: &'a UnlabeledDataset,
        f_labeled: &'a [f64],
        f_unlabeled: &'a [f64],
    ) -> Result<Self> {
        if labeled.dim() != unlabeled.dim() {
            return Err(FppiError::DimensionMismatch {
                context: "labeled vs unlabeled covariate columns",
                expected: labeled.dim(),
                found: unlabeled.dim(),
            });
        }
        if f_labeled.len() != labeled.len() {
            return Err(FppiError::DimensionMismatch {
                context: "labeled predictions",
                expected: labeled.len(),
                found: f_labeled.len(),
            });
        }
        if f_unlabeled.len() != unlabeled.len() {
            return Err(FppiError::DimensionMismatch {
                context: "unlabeled predictions",
                expected: unlabeled.len(),
                found: f_unlabeled.len(),
            });
        }
        for (context, f) in [("labeled predictions", f_labeled), ("unlabeled predictions", f_unlabeled)] {
            if let Some(row) = f.iter().position(|v| !v.is_finite()) {
                return Err(FppiError::NonFinite { context, row });
            }
        }
        Ok(Self {
            labeled,
            unlabeled,
            f_labeled,
            f_unlabeled,
        })
    }

    pub fn n(&self) -> usize {
        self.labeled.len()
    }

    pub fn big_n(&self) -> usize {
        self.unlabeled.len()
    }

    /// Region membership of the labeled and unlabeled rows.
    pub fn memberships(&self, region: &Region) -> Result<(Vec<bool>, Vec<bool>)> {
        Ok((
            region.membership_vector(self.labeled.x(), self.f_labeled)?,
            region.membership_vector(self.unlabeled.x(), self.f_unlabeled)?,
        ))
    }
}

/// One factor of a sign-product region, evaluated at a covariate row and
/// the prediction attached to that row.
pub type Factor = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// `{x : g(x)·h(x) > 0}`.
#[derive(Clone)]
pub struct SignProduct {
    pub g: Factor,
    pub h: Factor,
    /// Expected covariate dimension, when the factors depend on it.
    pub dim: Option<usize>,
    pub label: String,
}

/// Subset of covariate space. Membership is a pure function of a row (and
/// the deterministic prediction attached to it).
#[derive(Clone)]
pub enum Region {
    All,
    Empty,
    /// Exact row equality against the stored categories.
    DiscreteSet(Vec<Vec<f64>>),
    SignProduct(SignProduct),
}

impl Region {
    pub fn sign_product(g: Factor, h: Factor, dim: Option<usize>, label: impl Into<String>) -> Self {
        Region::SignProduct(SignProduct {
            g,
            h,
            dim,
            label: label.into(),
        })
    }

    /// Strict: rows where the product is exactly zero (or NaN) are excluded.
    pub fn contains(&self, row: &[f64], prediction: f64) -> bool {
        match self {
            Region::All => true,
            Region::Empty => false,
            Region::DiscreteSet(cats) => cats.iter().any(|c| c.as_slice() == row),
            Region::SignProduct(sp) => (sp.g)(row, prediction) * (sp.h)(row, prediction) > 0.0,
        }
    }

    pub fn membership_vector(&self, x: &Matrix, predictions: &[f64]) -> Result<Vec<bool>> {
        if predictions.len() != x.rows() {
            return Err(FppiError::DimensionMismatch {
                context: "region membership predictions",
                expected: x.rows(),
                found: predictions.len(),
            });
        }
        let expected_dim = match self {
            Region::DiscreteSet(cats) => cats.first().map(Vec::len),
            Region::SignProduct(sp) => sp.dim,
            _ => None,
        };
        if let Some(d) = expected_dim {
            if d != x.cols() {
                return Err(FppiError::DimensionMismatch {
                    context: "region dimension vs data columns",
                    expected: d,
                    found: x.cols(),
                });
            }
        }
        Ok(match self {
            Region::All => vec![true; x.rows()],
            Region::Empty => vec![false; x.rows()],
            _ => x
                .row_iter()
                .zip(predictions)
                .map(|(row, &p)| self.contains(row, p))
                .collect(),
        })
    }

    pub fn describe(&self) -> String {
        match self {
            Region::All => "all".to_string(),
            Region::Empty => "empty".to_string(),
            Region::DiscreteSet(cats) => {
                let items: Vec<String> = cats
                    .iter()
                    .map(|c| {
                        let parts: Vec<String> = c.iter().map(|v| v.to_string()).collect();
                        if parts.len() == 1 {
                            parts[0].clone()
                        } else {
                            format!("({})", parts.join(","))
                        }
                    })
                    .collect();
                format!("{{{}}}", items.join(","))
            }
            Region::SignProduct(sp) => sp.label.clone(),
        }
    }
}

impl fmt::Debug for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::SignProduct(sp) => write!(f, "SignProduct({})", sp.label),
            other => f.write_str(&other.describe()),
        }
    }
}

/// Point estimate with a symmetric normal-approximation interval.
#[derive(Debug, Clone, Serialize)]
pub struct IntervalEstimate {
    pub point: f64,
    pub std_error: f64,
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
    pub lambda_used: f64,
    pub region_summary: String,
}

impl IntervalEstimate {
    pub fn new(
        point: f64,
        std_error: f64,
        level: f64,
        lambda_used: f64,
        region_summary: String,
    ) -> Result<Self> {
        if !(std_error >= 0.0) {
            return Err(FppiError::invalid(format!(
                "standard error must be non-negative, got {std_error}"
            )));
        }
        let half = crate::normal::two_sided_z(level)? * std_error;
        Ok(Self {
            point,
            std_error,
            level,
            lower: point - half,
            upper: point + half,
            lambda_used,
            region_summary,
        })
    }

    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}
