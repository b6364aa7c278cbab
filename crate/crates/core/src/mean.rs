//! Mean estimation: the filtered estimator, its PPI / PPI++ / classical
//! special cases, optimal and plug-in weights, closed-form variances, the
//! region-estimation pipelines and normal-approximation intervals.
//!
//! Every estimate has the form
//!
//! ```text
//! θ̂ = ȳ + λ · [ (1/N) Σⱼ f(x̃ⱼ)1_S(x̃ⱼ) − (1/n) Σᵢ f(xᵢ)1_S(xᵢ) ]
//! ```
//!
//! where `S = All` gives PPI++, additionally `λ = 1` gives PPI, and `λ = 0`
//! (or `S = Empty`) gives the labeled sample mean.

use serde::Serialize;

use crate::data::{IntervalEstimate, LabeledDataset, PredictionSource, Region, SemiSupervised};
use crate::error::{FppiError, Result};
use crate::oracles::OracleSpec;
use crate::region::{centered_oracle_region, estimate_region_discrete};
use crate::rng::{Purpose, Stream};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MeanDiagnostics {
    pub labeled_in_region: usize,
    pub unlabeled_in_region: usize,
    /// The filtered prediction `f·1_S` had no spread (empty region, or f
    /// constant on a region covering every row), so λ fell back to 0.
    pub degenerate: bool,
    /// The plug-in variance came out negative and the classical one was used.
    pub variance_clamped: bool,
    /// Discrete categories with no labeled rows, left out of the region.
    pub excluded_categories: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct MeanFppiResult {
    pub theta_hat: f64,
    pub lambda_hat: f64,
    pub region: Region,
    pub labeled_mean: f64,
    /// Unlabeled minus labeled mean of the filtered prediction.
    pub correction_term: f64,
    pub std_error: f64,
    pub diagnostics: MeanDiagnostics,
}

/// Sample moments behind λ̂ and the plug-in variance, for a fixed region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PluginMoments {
    /// `(1/n) Σ (yᵢ − ȳ)²`
    pub var_y: f64,
    /// `(1/n) Σ (yᵢ − ȳ) f_S(xᵢ)`
    pub cov_yf: f64,
    /// `(1/N) Σ (f_S(x̃ⱼ) − f̄)²` with `f̄` pooled over both samples.
    pub var_f: f64,
    pub n: usize,
    pub big_n: usize,
    /// `f·1_S` is constant over both samples, or its unlabeled spread is zero.
    pub degenerate: bool,
}

fn count(mask: &[bool]) -> usize {
    mask.iter().filter(|&&b| b).count()
}

fn filtered(f: &[f64], mask: &[bool]) -> Vec<f64> {
    f.iter().zip(mask).map(|(&v, &b)| if b { v } else { 0.0 }).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn moments_from(data: &SemiSupervised<'_>, ml: &[bool], mu: &[bool]) -> PluginMoments {
    let f_lab = filtered(data.f_labeled, ml);
    let f_unl = filtered(data.f_unlabeled, mu);
    let y = data.labeled.y();
    let y_bar = mean(y);
    let n = y.len();
    let big_n = f_unl.len();
    let var_y = y.iter().map(|v| (v - y_bar) * (v - y_bar)).sum::<f64>() / n as f64;
    let cov_yf = y.iter().zip(&f_lab).map(|(v, f)| (v - y_bar) * f).sum::<f64>() / n as f64;
    let pooled = (f_lab.iter().sum::<f64>() + f_unl.iter().sum::<f64>()) / (n + big_n) as f64;
    let var_f = f_unl.iter().map(|f| (f - pooled) * (f - pooled)).sum::<f64>() / big_n as f64;

    // The filtered prediction f·1_S, not f itself, must vary: a constant f
    // on a proper subset still yields a usable indicator-type control.
    let mut pooled_values = f_lab.iter().chain(&f_unl);
    let first = pooled_values.next().copied();
    let constant = pooled_values.all(|&v| Some(v) == first);
    PluginMoments {
        var_y,
        cov_yf,
        var_f,
        n,
        big_n,
        degenerate: constant || !(var_f > 0.0),
    }
}

pub fn plugin_moments(data: &SemiSupervised<'_>, region: &Region) -> Result<PluginMoments> {
    let (ml, mu) = data.memberships(region)?;
    Ok(moments_from(data, &ml, &mu))
}

fn estimate_from(
    data: &SemiSupervised<'_>,
    region: &Region,
    ml: &[bool],
    mu: &[bool],
    m: &PluginMoments,
    lambda: f64,
) -> Result<MeanFppiResult> {
    if !lambda.is_finite() {
        return Err(FppiError::invalid(format!("weight must be finite, got {lambda}")));
    }
    let labeled_mean = mean(data.labeled.y());
    let correction_term = mean(&filtered(data.f_unlabeled, mu)) - mean(&filtered(data.f_labeled, ml));
    let theta_hat = labeled_mean + lambda * correction_term;

    let mut variance = fppi_mean_variance(m.var_y, m.var_f, m.cov_yf, lambda, m.n, m.big_n)?;
    let mut variance_clamped = false;
    if variance < 0.0 {
        variance = m.var_y / m.n as f64;
        variance_clamped = true;
    }
    Ok(MeanFppiResult {
        theta_hat,
        lambda_hat: lambda,
        region: region.clone(),
        labeled_mean,
        correction_term,
        std_error: variance.sqrt(),
        diagnostics: MeanDiagnostics {
            labeled_in_region: count(ml),
            unlabeled_in_region: count(mu),
            degenerate: m.degenerate,
            variance_clamped,
            excluded_categories: Vec::new(),
        },
    })
}

/// The filtered estimator at a fixed region and weight. The standard error
/// is the plug-in variance at this λ (clamped to the classical one if the
/// plug-in comes out negative).
pub fn fppi_mean(data: &SemiSupervised<'_>, region: &Region, lambda: f64) -> Result<MeanFppiResult> {
    let (ml, mu) = data.memberships(region)?;
    let m = moments_from(data, &ml, &mu);
    estimate_from(data, region, &ml, &mu, &m, lambda)
}

/// PPI++ at a fixed weight: the filtered estimator with no filtering.
pub fn ppi_plusplus_mean(data: &SemiSupervised<'_>, lambda: f64) -> Result<MeanFppiResult> {
    fppi_mean(data, &Region::All, lambda)
}

pub fn classical_mean(data: &SemiSupervised<'_>) -> Result<MeanFppiResult> {
    fppi_mean(data, &Region::Empty, 0.0)
}

/// Population-optimal weight `(cov / var) / (1 + n/N)`.
pub fn lambda_star_population(cov_yf: f64, var_f: f64, n: usize, big_n: usize) -> Result<f64> {
    if !(var_f > 0.0) {
        return Err(FppiError::DegenerateRegion("prediction variance on the region is not positive"));
    }
    check_counts(n, big_n)?;
    Ok(cov_yf / var_f / (1.0 + n as f64 / big_n as f64))
}

/// Plug-in weight from sample moments; a filtered prediction without
/// spread is reported as degenerate.
pub fn lambda_hat_plugin(data: &SemiSupervised<'_>, region: &Region) -> Result<f64> {
    let m = plugin_moments(data, region)?;
    if m.degenerate {
        return Err(FppiError::DegenerateRegion(
            "filtered prediction has no spread on the region",
        ));
    }
    lambda_star_population(m.cov_yf, m.var_f, m.n, m.big_n)
}

fn check_counts(n: usize, big_n: usize) -> Result<()> {
    if n == 0 || big_n == 0 {
        return Err(FppiError::invalid("sample sizes must be positive"));
    }
    Ok(())
}

/// `var_y/n + λ²(N+n)/(Nn)·var_f − (2λ/n)·cov`.
pub fn fppi_mean_variance(var_y: f64, var_f: f64, cov_yf: f64, lambda: f64, n: usize, big_n: usize) -> Result<f64> {
    if var_y < 0.0 || var_f < 0.0 {
        return Err(FppiError::invalid("variances must be non-negative"));
    }
    check_counts(n, big_n)?;
    let (n, big_n) = (n as f64, big_n as f64);
    Ok(var_y / n + lambda * lambda * (big_n + n) / (big_n * n) * var_f - 2.0 * lambda / n * cov_yf)
}

/// `var_y/n − N/(n(N+n)) · cov²/var_f`, the variance at the optimal weight.
pub fn minimized_variance(var_y: f64, var_f: f64, cov_yf: f64, n: usize, big_n: usize) -> Result<f64> {
    if !(var_f > 0.0) {
        return Err(FppiError::DegenerateRegion("prediction variance on the region is not positive"));
    }
    if var_y < 0.0 {
        return Err(FppiError::invalid("variances must be non-negative"));
    }
    check_counts(n, big_n)?;
    let (n, big_n) = (n as f64, big_n as f64);
    Ok(var_y / n - big_n / (n * (big_n + n)) * cov_yf * cov_yf / var_f)
}

/// Plug-in weight for a given region, falling back to λ = 0 (the labeled
/// mean) when the region is degenerate.
pub fn fppi_mean_plugin(data: &SemiSupervised<'_>, region: &Region) -> Result<MeanFppiResult> {
    let (ml, mu) = data.memberships(region)?;
    let m = moments_from(data, &ml, &mu);
    let lambda = if m.degenerate {
        0.0
    } else {
        lambda_star_population(m.cov_yf, m.var_f, m.n, m.big_n)?
    };
    estimate_from(data, region, &ml, &mu, &m, lambda)
}

/// PPI++ with its own plug-in weight.
pub fn ppi_plusplus_plugin(data: &SemiSupervised<'_>) -> Result<MeanFppiResult> {
    fppi_mean_plugin(data, &Region::All)
}

/// Region estimation for continuous covariates followed by the plug-in
/// estimator: fit `m̂` on all labeled rows, keep `{x : (m̂(x) − ȳ)f(x) > 0}`.
pub fn algorithm1_estimate(data: &SemiSupervised<'_>, oracle: &OracleSpec) -> Result<MeanFppiResult> {
    let m_hat = oracle.fit(data.labeled)?;
    let region = centered_oracle_region(
        m_hat,
        mean(data.labeled.y()),
        &PredictionSource::Precomputed(Vec::new()),
        data.labeled.dim(),
    );
    fppi_mean_plugin(data, &region)
}

/// Region estimation for discrete covariates: within-category means against
/// the grand mean, over the supplied category list.
pub fn discrete_estimate(data: &SemiSupervised<'_>, categories: &[Vec<f64>]) -> Result<MeanFppiResult> {
    let est = estimate_region_discrete(
        data.labeled,
        categories,
        &PredictionSource::Precomputed(data.f_labeled.to_vec()),
    )?;
    let mut out = fppi_mean_plugin(data, &est.region)?;
    out.diagnostics.excluded_categories = est.excluded;
    Ok(out)
}

/// Sample-splitting variant: a random `split_fraction` of the labeled rows
/// fits the region, the rest supply the estimate and its weight.
pub fn algorithm1_split_estimate(
    data: &SemiSupervised<'_>,
    split_fraction: f64,
    oracle: &OracleSpec,
    seed: u64,
) -> Result<MeanFppiResult> {
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(FppiError::invalid(format!(
            "split fraction must lie in (0, 1), got {split_fraction}"
        )));
    }
    let n = data.n();
    if n < 2 {
        return Err(FppiError::invalid("sample splitting needs at least two labeled rows"));
    }
    let n1 = ((split_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let perm = Stream::new(seed, Purpose::Split, 0).permutation(n);
    let (first, second) = perm.split_at(n1);
    let d1 = data.labeled.subset(first)?;
    let d2 = data.labeled.subset(second)?;
    let f2: Vec<f64> = second.iter().map(|&i| data.f_labeled[i]).collect();
    let part2 = SemiSupervised::new(&d2, data.unlabeled, &f2, data.f_unlabeled)?;
    sample_split_estimate(&d1, &part2, oracle)
}

/// The split estimator from explicit halves: `fit_half` builds the region,
/// `estimate_half` (with the unlabeled sample) supplies everything else.
pub fn sample_split_estimate(
    fit_half: &LabeledDataset,
    estimate_half: &SemiSupervised<'_>,
    oracle: &OracleSpec,
) -> Result<MeanFppiResult> {
    let m_hat = oracle.fit(fit_half)?;
    let region = centered_oracle_region(
        m_hat,
        mean(fit_half.y()),
        &PredictionSource::Precomputed(Vec::new()),
        fit_half.dim(),
    );
    fppi_mean_plugin(estimate_half, &region)
}

pub fn confidence_interval(result: &MeanFppiResult, level: f64) -> Result<IntervalEstimate> {
    IntervalEstimate::new(
        result.theta_hat,
        result.std_error,
        level,
        result.lambda_hat,
        result.region.describe(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::UnlabeledDataset;
    use crate::linalg::Matrix;

    struct Owned {
        lab: LabeledDataset,
        unl: UnlabeledDataset,
        fl: Vec<f64>,
        fu: Vec<f64>,
    }

    impl Owned {
        fn new(xl: &[f64], y: &[f64], xu: &[f64], f: impl Fn(f64) -> f64) -> Self {
            Self {
                lab: LabeledDataset::new(Matrix::column(xl), y.to_vec()).unwrap(),
                unl: UnlabeledDataset::new(Matrix::column(xu)).unwrap(),
                fl: xl.iter().map(|&x| f(x)).collect(),
                fu: xu.iter().map(|&x| f(x)).collect(),
            }
        }

        fn view(&self) -> SemiSupervised<'_> {
            SemiSupervised::new(&self.lab, &self.unl, &self.fl, &self.fu).unwrap()
        }
    }

    fn fixture() -> Owned {
        Owned::new(
            &[0.0, 1.0, 2.0, 3.0, 1.0, 2.0],
            &[-2.5, -0.7, 5.2, 9.1, -1.3, 4.4],
            &[0.0, 1.0, 2.0, 3.0, 3.0, 0.0, 2.0, 1.0],
            |x| [-5.0, 1.0, 1.0, 3.0][x as usize],
        )
    }

    #[test]
    fn hand_computed_two_row_case() {
        let d = Owned::new(&[0.0, 3.0], &[1.0, 5.0], &[0.0, 3.0], |x| x);
        let r = fppi_mean(&d.view(), &Region::All, 1.0).unwrap();
        assert_eq!(r.theta_hat, 3.0);
        assert_eq!(r.correction_term, 0.0);
    }

    #[test]
    fn degeneracy_chain_is_bit_exact() {
        let d = fixture();
        let v = d.view();
        let ybar = v.labeled.y().iter().sum::<f64>() / v.n() as f64;
        let regions = [
            Region::All,
            Region::DiscreteSet(vec![vec![0.0], vec![3.0]]),
            Region::Empty,
        ];
        for region in &regions {
            assert_eq!(fppi_mean(&v, region, 0.0).unwrap().theta_hat, ybar);
        }
        for lambda in [-3.0, 0.5, 1.0, 17.0] {
            assert_eq!(fppi_mean(&v, &Region::Empty, lambda).unwrap().theta_hat, ybar);
        }
        assert_eq!(classical_mean(&v).unwrap().theta_hat, ybar);
    }

    #[test]
    fn theta_is_mean_plus_weighted_correction() {
        let d = fixture();
        let r = fppi_mean(&d.view(), &Region::DiscreteSet(vec![vec![0.0], vec![2.0]]), 0.7).unwrap();
        assert_eq!(r.theta_hat, r.labeled_mean + r.lambda_hat * r.correction_term);
        assert_eq!(r.diagnostics.labeled_in_region, 3);
        assert_eq!(r.diagnostics.unlabeled_in_region, 4);
        assert!(r.std_error >= 0.0);
    }

    #[test]
    fn ppi_plusplus_is_unfiltered_fppi() {
        let d = fixture();
        let v = d.view();
        for lambda in [0.0, 0.3, 1.0] {
            let a = ppi_plusplus_mean(&v, lambda).unwrap();
            let b = fppi_mean(&v, &Region::All, lambda).unwrap();
            assert_eq!(a.theta_hat.to_bits(), b.theta_hat.to_bits());
            assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
        }
    }

    #[test]
    fn population_weights() {
        assert_eq!(lambda_star_population(0.0, 2.0, 10, 100).unwrap(), 0.0);
        // four equiprobable categories: var(f3) = 9, cov = 11
        assert!((lambda_star_population(11.0, 9.0, 1, 1_000_000_000).unwrap() - 11.0 / 9.0).abs() < 1e-8);
        let c = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let got = lambda_star_population(c, 1.0, 50, 50).unwrap();
        assert!((got - 1.0 / (2.0 * (2.0 * std::f64::consts::PI).sqrt())).abs() < 1e-15);
        assert!(matches!(
            lambda_star_population(1.0, 0.0, 1, 1),
            Err(FppiError::DegenerateRegion(_))
        ));
    }

    #[test]
    fn variance_formulas() {
        let (n, big_n) = (200, 2000);
        assert_eq!(fppi_mean_variance(2.0, 1.0, 0.3, 0.0, n, big_n).unwrap(), 2.0 / 200.0);
        // threshold-region example: var_y = 1 + σ², var_f = 1, cov = 1/√(2π)
        let c = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let lambda = 0.4;
        let got = fppi_mean_variance(2.0, 1.0, c, lambda, n, big_n).unwrap();
        let want = 2.0 / 200.0 + lambda * lambda * (1.0 / 200.0 + 1.0 / 2000.0)
            - lambda / 200.0 * (2.0 / std::f64::consts::PI).sqrt();
        assert!((got - want).abs() < 1e-15);
        let min = minimized_variance(2.0, 1.0, c, n, big_n).unwrap();
        let want = 2.0 / 200.0 - 1.0 / (2.0 * std::f64::consts::PI * 200.0 * 1.1);
        assert!((min - want).abs() < 1e-15);
        assert_eq!(minimized_variance(2.0, 1.0, 0.0, n, big_n).unwrap(), 0.01);
        assert!(fppi_mean_variance(-1.0, 1.0, 0.0, 1.0, n, big_n).is_err());
    }

    #[test]
    fn constant_prediction_is_degenerate() {
        let d = Owned::new(&[0.0, 1.0, 2.0], &[1.0, 2.0, 4.0], &[0.5, 1.5, 2.5, 3.0], |_| 2.0);
        let v = d.view();
        assert!(matches!(lambda_hat_plugin(&v, &Region::All), Err(FppiError::DegenerateRegion(_))));
        // constant on a proper sub-region is an indicator control, not degenerate
        let r = Region::DiscreteSet(vec![vec![1.0], vec![2.0]]);
        assert!(lambda_hat_plugin(&v, &r).unwrap().is_finite());
        let empty = Region::DiscreteSet(vec![vec![9.0]]);
        assert!(lambda_hat_plugin(&v, &empty).is_err());
        let out = fppi_mean_plugin(&v, &Region::All).unwrap();
        assert!(out.diagnostics.degenerate);
        assert_eq!(out.lambda_hat, 0.0);
        assert_eq!(out.theta_hat, 7.0 / 3.0);
    }

    #[test]
    fn constant_responses_give_zero_weight() {
        let d = Owned::new(&[0.0, 1.0, 2.0], &[4.0; 3], &[0.5, 1.5, 2.5, 3.0], |x| x);
        assert_eq!(lambda_hat_plugin(&d.view(), &Region::All).unwrap(), 0.0);
    }

    #[test]
    fn plugin_standard_error_matches_closed_form() {
        let d = fixture();
        let v = d.view();
        let m = plugin_moments(&v, &Region::All).unwrap();
        let r = ppi_plusplus_plugin(&v).unwrap();
        let r_ratio = v.n() as f64 / v.big_n() as f64;
        let closed = (m.var_y - m.cov_yf * m.cov_yf / m.var_f / (1.0 + r_ratio)) / v.n() as f64;
        assert!((r.std_error * r.std_error - closed).abs() < 1e-12);
    }

    #[test]
    fn empty_region_interval_is_classical() {
        let d = fixture();
        let v = d.view();
        let r = fppi_mean_plugin(&v, &Region::Empty).unwrap();
        let ci = confidence_interval(&r, 0.95).unwrap();
        let y = v.labeled.y();
        let ybar = mean(y);
        let s = (y.iter().map(|t| (t - ybar).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
        let half = 1.959_963_984_540_054 * s / (y.len() as f64).sqrt();
        assert!((ci.lower - (ybar - half)).abs() < 1e-12);
        assert!((ci.upper - (ybar + half)).abs() < 1e-12);
        assert!(r.diagnostics.degenerate);
    }

    #[test]
    fn sign_flip_leaves_unfiltered_estimate_unchanged() {
        let d = fixture();
        let neg = Owned {
            lab: d.lab.clone(),
            unl: d.unl.clone(),
            fl: d.fl.iter().map(|v| -v).collect(),
            fu: d.fu.iter().map(|v| -v).collect(),
        };
        let a = ppi_plusplus_plugin(&d.view()).unwrap();
        let b = ppi_plusplus_plugin(&neg.view()).unwrap();
        assert!((a.lambda_hat + b.lambda_hat).abs() < 1e-12);
        assert!((a.theta_hat - b.theta_hat).abs() < 1e-12);
    }

    #[test]
    fn discrete_estimate_flags_missing_categories() {
        let d = fixture();
        let cats: Vec<Vec<f64>> = (0..5).map(|k| vec![f64::from(k)]).collect();
        let r = discrete_estimate(&d.view(), &cats).unwrap();
        assert_eq!(r.diagnostics.excluded_categories, vec![vec![4.0]]);
    }

    #[test]
    fn split_with_everything_in_region_is_ppi_plusplus_on_second_half() {
        let d = fixture();
        let v = d.view();
        let second = [1usize, 3, 5];
        let d2 = v.labeled.subset(&second).unwrap();
        let f2: Vec<f64> = second.iter().map(|&i| v.f_labeled[i]).collect();
        let part = SemiSupervised::new(&d2, v.unlabeled, &f2, v.f_unlabeled).unwrap();
        let a = fppi_mean_plugin(&part, &Region::All).unwrap();
        let b = ppi_plusplus_plugin(&part).unwrap();
        assert_eq!(a.theta_hat.to_bits(), b.theta_hat.to_bits());
    }

    #[test]
    fn split_estimate_validates_and_is_reproducible() {
        let d = fixture();
        let v = d.view();
        let oracle = OracleSpec::Knn { k: 1 };
        assert!(algorithm1_split_estimate(&v, 0.0, &oracle, 1).is_err());
        assert!(algorithm1_split_estimate(&v, 1.0, &oracle, 1).is_err());
        let a = algorithm1_split_estimate(&v, 0.5, &oracle, 9).unwrap();
        let b = algorithm1_split_estimate(&v, 0.5, &oracle, 9).unwrap();
        assert_eq!(a.theta_hat.to_bits(), b.theta_hat.to_bits());
    }

    #[test]
    fn algorithm1_with_category_oracle_matches_discrete_pipeline() {
        let d = fixture();
        let v = d.view();
        let cats: Vec<Vec<f64>> = (0..4).map(|k| vec![f64::from(k)]).collect();
        let a = algorithm1_estimate(&v, &OracleSpec::CategoryMean).unwrap();
        let b = discrete_estimate(&v, &cats).unwrap();
        assert_eq!(a.theta_hat.to_bits(), b.theta_hat.to_bits());
        assert_eq!(a.diagnostics.unlabeled_in_region, b.diagnostics.unlabeled_in_region);
    }
}
