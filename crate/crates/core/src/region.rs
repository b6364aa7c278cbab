//! Oracle and estimated informative regions, plus empirical mis-recovery.
//!
//! For mean estimation the informative region is where the centered
//! conditional mean and the prediction agree in sign,
//! `(m(x) − E Y)·f(x) > 0`. For a canonical GLM with working mean
//! `μ(x) = A′(xᵀθ)` it is where the prediction bias and the model bias
//! agree, `(f(x) − μ(x))·(m(x) − μ(x)) > 0`. Estimated regions plug in a
//! fitted oracle for `m` and sample quantities for `E Y` or `θ`.

use std::sync::Arc;

use crate::data::{Factor, LabeledDataset, PredictionSource, Region, RowFn, UnlabeledDataset};
use crate::error::{FppiError, Result};
use crate::glm::GlmFamily;
use crate::linalg::dot;
use crate::oracles::{sample_mean, CategoryMeans, FittedOracle};

/// The prediction as a region factor: a prediction function is evaluated at
/// the row, a precomputed column contributes the value attached to the row.
pub fn prediction_factor(f: &PredictionSource) -> Factor {
    match f {
        PredictionSource::Function(func) => {
            let func = Arc::clone(func);
            Arc::new(move |row, _| func(row))
        }
        PredictionSource::Precomputed(_) => Arc::new(|_, pred| pred),
    }
}

pub fn oracle_region_mean(m: RowFn, mean_y: f64, f: RowFn) -> Region {
    let g: Factor = Arc::new(move |row, _| m(row) - mean_y);
    let h: Factor = Arc::new(move |row, _| f(row));
    Region::sign_product(g, h, None, format!("(m(x) - {mean_y})*f(x) > 0"))
}

#[derive(Debug, Clone)]
pub struct DiscreteRegionEstimate {
    pub region: Region,
    /// Categories with no labeled rows; they cannot be assessed and are left out.
    pub excluded: Vec<Vec<f64>>,
}

/// Keeps the categories whose within-category mean sits on the same side
/// of the grand mean as the prediction.
pub fn estimate_region_discrete(
    labeled: &LabeledDataset,
    categories: &[Vec<f64>],
    f: &PredictionSource,
) -> Result<DiscreteRegionEstimate> {
    if labeled.is_empty() {
        return Err(FppiError::Empty("labeled dataset for discrete region"));
    }
    for row in labeled.x().row_iter() {
        if !categories.iter().any(|c| c.as_slice() == row) {
            return Err(FppiError::invalid(format!(
                "labeled row {row:?} matches none of the supplied categories"
            )));
        }
    }
    let grand_mean = sample_mean(labeled.y())?;
    let means = CategoryMeans::fit(labeled);
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for cat in categories {
        if means.count(cat) == 0 {
            excluded.push(cat.clone());
            continue;
        }
        let f_k = match f {
            PredictionSource::Function(func) => func(cat),
            PredictionSource::Precomputed(values) => {
                if values.len() != labeled.len() {
                    return Err(FppiError::DimensionMismatch {
                        context: "precomputed predictions vs labeled rows",
                        expected: labeled.len(),
                        found: values.len(),
                    });
                }
                let i = labeled
                    .x()
                    .row_iter()
                    .position(|r| r == cat.as_slice())
                    .expect("category has labeled rows");
                values[i]
            }
        };
        if (means.predict_row(cat) - grand_mean) * f_k > 0.0 {
            kept.push(cat.clone());
        }
    }
    let region = if kept.is_empty() {
        Region::Empty
    } else {
        Region::DiscreteSet(kept)
    };
    Ok(DiscreteRegionEstimate { region, excluded })
}

/// `{x : (m̂(x) − ȳ)·f(x) > 0}` with `ȳ` the labeled response mean.
pub fn estimate_region_continuous(
    labeled: &LabeledDataset,
    m_hat: FittedOracle,
    f: &PredictionSource,
) -> Result<Region> {
    let y_bar = sample_mean(labeled.y())?;
    Ok(centered_oracle_region(m_hat, y_bar, f, labeled.dim()))
}

pub(crate) fn centered_oracle_region(
    m_hat: FittedOracle,
    center: f64,
    f: &PredictionSource,
    dim: usize,
) -> Region {
    let g: Factor = Arc::new(move |row, _| m_hat.predict_row(row) - center);
    Region::sign_product(
        g,
        prediction_factor(f),
        Some(dim),
        format!("(m_hat(x) - {center})*f(x) > 0"),
    )
}

pub fn oracle_region_glm(m: RowFn, f: RowFn, mu: RowFn) -> Region {
    let mu_g = Arc::clone(&mu);
    let g: Factor = Arc::new(move |row, _| f(row) - mu_g(row));
    let h: Factor = Arc::new(move |row, _| m(row) - mu(row));
    Region::sign_product(g, h, None, "(f(x) - mu(x))*(m(x) - mu(x)) > 0")
}

/// `{x : (f(x) − A′(xᵀθ̂))·(m̂(x) − A′(xᵀθ̂)) > 0}`.
pub fn estimate_region_glm(
    labeled: &LabeledDataset,
    m_hat: FittedOracle,
    f: &PredictionSource,
    theta_mle: &[f64],
    family: GlmFamily,
) -> Result<Region> {
    if theta_mle.len() != labeled.dim() {
        return Err(FppiError::DimensionMismatch {
            context: "GLM coefficients vs covariate columns",
            expected: labeled.dim(),
            found: theta_mle.len(),
        });
    }
    let pred = prediction_factor(f);
    let theta_g = theta_mle.to_vec();
    let theta_h = theta_mle.to_vec();
    let g: Factor = Arc::new(move |row, p| pred(row, p) - family.mean(dot(row, &theta_g)));
    let h: Factor = Arc::new(move |row, _| m_hat.predict_row(row) - family.mean(dot(row, &theta_h)));
    Ok(Region::sign_product(
        g,
        h,
        Some(labeled.dim()),
        "(f(x) - A'(x'theta))*(m_hat(x) - A'(x'theta)) > 0",
    ))
}

/// Fraction of probe rows on which the two regions disagree.
pub fn mis_recovery_probability(
    estimated: &Region,
    oracle: &Region,
    probe: &UnlabeledDataset,
    probe_predictions: &[f64],
) -> Result<f64> {
    let a = estimated.membership_vector(probe.x(), probe_predictions)?;
    let b = oracle.membership_vector(probe.x(), probe_predictions)?;
    let disagree = a.iter().zip(&b).filter(|(u, v)| u != v).count();
    Ok(disagree as f64 / probe.len() as f64)
}
