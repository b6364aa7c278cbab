//! Canonical GLMs: maximum likelihood, the filtered prediction-powered
//! objective and its minimizer, plug-in matrices, the AMSE-optimal weight
//! and the full region-estimation pipeline.
//!
//! With `η = xᵀθ` the filtered objective is
//!
//! ```text
//! L(θ) = (1/n) Σᵢ [A(ηᵢ) − ηᵢ yᵢ]
//!      + λ (1/N) Σⱼ 1_S(x̃ⱼ) [A(η̃ⱼ) − η̃ⱼ f(x̃ⱼ)]
//!      − λ (1/n) Σᵢ 1_S(xᵢ) [A(ηᵢ) − ηᵢ f(xᵢ)]
//! ```

mod family;
mod optimize;

pub use family::{family_eval, GlmFamily, ETA_MAX};
pub use optimize::{minimize, Convergence, OptimizerOptions};

use serde::Serialize;

use crate::data::{LabeledDataset, PredictionSource, Region, SemiSupervised};
use crate::error::{FppiError, Result};
use crate::linalg::{dot, spd_inverse, Accumulator, Matrix};
use crate::oracles::OracleSpec;
use crate::region::estimate_region_glm;

/// The objective with memberships resolved once: labeled rows carry their
/// own in-region flag, unlabeled rows outside the region are dropped.
struct Objective<'a> {
    x_lab: &'a Matrix,
    y: &'a [f64],
    f_lab: &'a [f64],
    lab_in: Vec<bool>,
    x_unl: Matrix,
    f_unl: Vec<f64>,
    big_n: f64,
    lambda: f64,
    family: GlmFamily,
}

impl<'a> Objective<'a> {
    fn new(data: &SemiSupervised<'a>, region: &Region, lambda: f64, family: GlmFamily) -> Result<Self> {
        let (lab_in, unl_in) = data.memberships(region)?;
        Ok(Self::from_masks(data, lab_in, &unl_in, lambda, family))
    }

    fn from_masks(
        data: &SemiSupervised<'a>,
        lab_in: Vec<bool>,
        unl_in: &[bool],
        lambda: f64,
        family: GlmFamily,
    ) -> Self {
        let keep: Vec<usize> = (0..unl_in.len()).filter(|&j| unl_in[j]).collect();
        Self {
            x_lab: data.labeled.x(),
            y: data.labeled.y(),
            f_lab: data.f_labeled,
            lab_in,
            x_unl: data.unlabeled.x().select_rows(&keep),
            f_unl: keep.iter().map(|&j| data.f_unlabeled[j]).collect(),
            big_n: data.big_n() as f64,
            lambda,
            family,
        }
    }

    fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let p = theta.len();
        let n = self.y.len() as f64;
        let mut value = Accumulator::default();
        let mut grad = vec![Accumulator::default(); p];
        let mut add_row = |row: &[f64], v: f64, c: f64| {
            value.add(v);
            for (g, &x) in grad.iter_mut().zip(row) {
                g.add(c * x);
            }
        };
        for (i, row) in self.x_lab.row_iter().enumerate() {
            let eta = dot(row, theta);
            let (a, a1, _) = self.family.eval(eta);
            let (y, f) = (self.y[i], self.f_lab[i]);
            let mut v = (a - eta * y) / n;
            let mut c = (a1 - y) / n;
            if self.lab_in[i] && self.lambda != 0.0 {
                v -= self.lambda * (a - eta * f) / n;
                c -= self.lambda * (a1 - f) / n;
            }
            add_row(row, v, c);
        }
        if self.lambda != 0.0 {
            for (row, &f) in self.x_unl.row_iter().zip(&self.f_unl) {
                let eta = dot(row, theta);
                let (a, a1, _) = self.family.eval(eta);
                add_row(
                    row,
                    self.lambda * (a - eta * f) / self.big_n,
                    self.lambda * (a1 - f) / self.big_n,
                );
            }
        }
        (value.value(), grad.iter().map(Accumulator::value).collect())
    }
}

fn check_theta(theta: &[f64], p: usize) -> Result<()> {
    if theta.len() != p {
        return Err(FppiError::DimensionMismatch {
            context: "coefficient vector vs covariate columns",
            expected: p,
            found: theta.len(),
        });
    }
    Ok(())
}

pub fn fppi_glm_objective(
    theta: &[f64],
    data: &SemiSupervised<'_>,
    region: &Region,
    lambda: f64,
    family: GlmFamily,
) -> Result<f64> {
    check_theta(theta, data.labeled.dim())?;
    Ok(Objective::new(data, region, lambda, family)?.value_and_gradient(theta).0)
}

pub fn fppi_glm_gradient(
    theta: &[f64],
    data: &SemiSupervised<'_>,
    region: &Region,
    lambda: f64,
    family: GlmFamily,
) -> Result<Vec<f64>> {
    check_theta(theta, data.labeled.dim())?;
    Ok(Objective::new(data, region, lambda, family)?.value_and_gradient(theta).1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlmFit {
    pub theta: Vec<f64>,
    pub convergence: Convergence,
}

/// Minimizes `(1/n) Σ [A(xᵢᵀθ) − yᵢ xᵢᵀθ]` from the zero vector.
pub fn glm_mle(labeled: &LabeledDataset, family: GlmFamily, opts: &OptimizerOptions) -> Result<GlmFit> {
    family.validate()?;
    family.check_responses(labeled.y())?;
    let p = labeled.dim();
    let empty: Vec<f64> = Vec::new();
    let objective = Objective {
        x_lab: labeled.x(),
        y: labeled.y(),
        f_lab: labeled.y(),
        lab_in: vec![false; labeled.len()],
        x_unl: Matrix::zeros(0, p),
        f_unl: empty,
        big_n: 1.0,
        lambda: 0.0,
        family,
    };
    let (theta, convergence) = minimize(|t| objective.value_and_gradient(t), &vec![0.0; p], opts)?;
    Ok(GlmFit { theta, convergence })
}

/// Minimizer of the filtered objective at a fixed region and weight,
/// started from `start` (the zero vector when `None`).
pub fn fppi_glm_estimate(
    data: &SemiSupervised<'_>,
    region: &Region,
    lambda: f64,
    family: GlmFamily,
    opts: &OptimizerOptions,
    start: Option<&[f64]>,
) -> Result<GlmFit> {
    family.validate()?;
    family.check_responses(data.labeled.y())?;
    let p = data.labeled.dim();
    let zero = vec![0.0; p];
    let start = start.unwrap_or(&zero);
    check_theta(start, p)?;
    let objective = Objective::new(data, region, lambda, family)?;
    let (theta, convergence) = minimize(|t| objective.value_and_gradient(t), start, opts)?;
    Ok(GlmFit { theta, convergence })
}

/// Plug-in estimates of the matrices that drive the asymptotic covariance,
/// all evaluated at a fixed coefficient vector (the MLE).
#[derive(Debug, Clone, PartialEq)]
pub struct PluginMatrices {
    /// `(1/N) Σ A″(x̃ᵀθ) x̃x̃ᵀ`
    pub sigma: Matrix,
    /// `(1/N) Σ 1_S (f − A′)² x̃x̃ᵀ`
    pub m: Matrix,
    /// `(1/n) Σ 1_S (y − A′)(f − A′) xxᵀ`
    pub gamma: Matrix,
    /// `(1/n) Σ (y − A′)² xxᵀ`
    pub omega: Matrix,
}

pub fn estimate_plugin_matrices(
    data: &SemiSupervised<'_>,
    region: &Region,
    theta: &[f64],
    family: GlmFamily,
) -> Result<PluginMatrices> {
    check_theta(theta, data.labeled.dim())?;
    let (lab_in, unl_in) = data.memberships(region)?;
    Ok(plugin_from_masks(data, &lab_in, &unl_in, theta, family))
}

fn plugin_from_masks(
    data: &SemiSupervised<'_>,
    lab_in: &[bool],
    unl_in: &[bool],
    theta: &[f64],
    family: GlmFamily,
) -> PluginMatrices {
    let p = data.labeled.dim();
    let (n, big_n) = (data.n() as f64, data.big_n() as f64);
    let mut sigma = Matrix::zeros(p, p);
    let mut m = Matrix::zeros(p, p);
    let mut gamma = Matrix::zeros(p, p);
    let mut omega = Matrix::zeros(p, p);
    for (j, row) in data.unlabeled.x().row_iter().enumerate() {
        let (_, a1, a2) = family.eval(dot(row, theta));
        sigma.add_outer(row, a2 / big_n);
        if unl_in[j] {
            let r = data.f_unlabeled[j] - a1;
            m.add_outer(row, r * r / big_n);
        }
    }
    for (i, row) in data.labeled.x().row_iter().enumerate() {
        let a1 = family.mean(dot(row, theta));
        let ry = data.labeled.y()[i] - a1;
        omega.add_outer(row, ry * ry / n);
        if lab_in[i] {
            gamma.add_outer(row, ry * (data.f_labeled[i] - a1) / n);
        }
    }
    PluginMatrices { sigma, m, gamma, omega }
}

/// `tr(Σ⁻¹ X Σ⁻¹)` given `Σ⁻¹`.
fn sandwich_trace(sigma_inv: &Matrix, x: &Matrix) -> Result<f64> {
    Ok(sigma_inv.matmul(x)?.matmul(sigma_inv)?.trace())
}

/// `tr(Σ⁻¹ΓΣ⁻¹) / [(1 + r) tr(Σ⁻¹MΣ⁻¹)]`.
pub fn lambda_star_glm(sigma: &Matrix, gamma: &Matrix, m: &Matrix, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(FppiError::invalid(format!("sample-size ratio must be non-negative, got {r}")));
    }
    let si = spd_inverse(sigma)?;
    let denom = sandwich_trace(&si, m)?;
    if !(denom > 0.0) {
        return Err(FppiError::DegenerateRegion(
            "filtered prediction residuals carry no variance",
        ));
    }
    Ok(sandwich_trace(&si, gamma)? / ((1.0 + r) * denom))
}

/// `Σ⁻¹(Ω + λ²(1+r)M − 2λΓ)Σ⁻¹`.
pub fn asymptotic_covariance(
    sigma: &Matrix,
    omega: &Matrix,
    m: &Matrix,
    gamma: &Matrix,
    lambda: f64,
    r: f64,
) -> Result<Matrix> {
    let si = spd_inverse(sigma)?;
    let middle = omega
        .add_scaled(m, lambda * lambda * (1.0 + r))?
        .add_scaled(gamma, -2.0 * lambda)?;
    si.matmul(&middle)?.matmul(&si)
}

pub fn amse(sigma: &Matrix, omega: &Matrix, m: &Matrix, gamma: &Matrix, lambda: f64, r: f64) -> Result<f64> {
    Ok(asymptotic_covariance(sigma, omega, m, gamma, lambda, r)?.trace())
}

/// `tr(Σ⁻¹ΩΣ⁻¹) − [tr(Σ⁻¹ΓΣ⁻¹)]² / [(1+r) tr(Σ⁻¹MΣ⁻¹)]`.
pub fn minimal_amse(sigma: &Matrix, omega: &Matrix, m: &Matrix, gamma: &Matrix, r: f64) -> Result<f64> {
    let si = spd_inverse(sigma)?;
    let tm = sandwich_trace(&si, m)?;
    if !(tm > 0.0) {
        return Err(FppiError::DegenerateRegion(
            "filtered prediction residuals carry no variance",
        ));
    }
    let tg = sandwich_trace(&si, gamma)?;
    Ok(sandwich_trace(&si, omega)? - tg * tg / ((1.0 + r) * tm))
}

#[derive(Debug, Clone)]
pub struct GlmFppiResult {
    pub theta_hat: Vec<f64>,
    pub lambda_hat: f64,
    pub region: Region,
    pub theta_mle: Vec<f64>,
    pub plugin: PluginMatrices,
    /// Asymptotic covariance of `√n (θ̂ − θ*)`; divide by n for finite-sample use.
    pub covariance: Matrix,
    pub amse_estimate: f64,
    pub convergence: Convergence,
    pub labeled_in_region: usize,
    pub unlabeled_in_region: usize,
    /// λ fell back to 0 because the region carried no usable signal.
    pub degenerate: bool,
    pub n: usize,
}

impl GlmFppiResult {
    pub fn std_errors(&self) -> Vec<f64> {
        self.covariance
            .diagonal()
            .iter()
            .map(|v| (v.max(0.0) / self.n as f64).sqrt())
            .collect()
    }
}

/// How the weight is chosen once the region is fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightRule {
    Fixed(f64),
    /// AMSE-optimal plug-in weight, 0 if the region is degenerate.
    Plugin,
}

/// Estimation at a given region, starting from (and computing plug-ins at)
/// a supplied MLE fit.
pub fn glm_with_region(
    data: &SemiSupervised<'_>,
    region: &Region,
    mle: &GlmFit,
    rule: WeightRule,
    family: GlmFamily,
    opts: &OptimizerOptions,
) -> Result<GlmFppiResult> {
    check_theta(&mle.theta, data.labeled.dim())?;
    let (lab_in, unl_in) = data.memberships(region)?;
    let plugin = plugin_from_masks(data, &lab_in, &unl_in, &mle.theta, family);
    let r = data.n() as f64 / data.big_n() as f64;
    let (lambda, degenerate) = match rule {
        WeightRule::Fixed(l) => (l, false),
        WeightRule::Plugin => match lambda_star_glm(&plugin.sigma, &plugin.gamma, &plugin.m, r) {
            Ok(l) => (l, false),
            Err(FppiError::DegenerateRegion(_)) => (0.0, true),
            Err(e) => return Err(e),
        },
    };
    let labeled_in_region = lab_in.iter().filter(|&&b| b).count();
    let unlabeled_in_region = unl_in.iter().filter(|&&b| b).count();
    let fit = if lambda == 0.0 {
        mle.clone()
    } else {
        let objective = Objective::from_masks(data, lab_in, &unl_in, lambda, family);
        let (theta, convergence) = minimize(|t| objective.value_and_gradient(t), &mle.theta, opts)?;
        GlmFit { theta, convergence }
    };
    let covariance = asymptotic_covariance(&plugin.sigma, &plugin.omega, &plugin.m, &plugin.gamma, lambda, r)?;
    Ok(GlmFppiResult {
        theta_hat: fit.theta,
        lambda_hat: lambda,
        region: region.clone(),
        theta_mle: mle.theta.clone(),
        amse_estimate: covariance.trace(),
        covariance,
        plugin,
        convergence: fit.convergence,
        labeled_in_region,
        unlabeled_in_region,
        degenerate,
        n: data.n(),
    })
}

/// Labeled-only MLE, reported with its sandwich covariance.
pub fn classical_glm(data: &SemiSupervised<'_>, family: GlmFamily, opts: &OptimizerOptions) -> Result<GlmFppiResult> {
    let mle = glm_mle(data.labeled, family, opts)?;
    glm_with_region(data, &Region::Empty, &mle, WeightRule::Fixed(0.0), family, opts)
}

/// Unfiltered, λ = 1.
pub fn ppi_glm(data: &SemiSupervised<'_>, family: GlmFamily, opts: &OptimizerOptions) -> Result<GlmFppiResult> {
    let mle = glm_mle(data.labeled, family, opts)?;
    glm_with_region(data, &Region::All, &mle, WeightRule::Fixed(1.0), family, opts)
}

/// Unfiltered with the AMSE-optimal plug-in weight.
pub fn ppi_plusplus_glm(
    data: &SemiSupervised<'_>,
    family: GlmFamily,
    opts: &OptimizerOptions,
) -> Result<GlmFppiResult> {
    let mle = glm_mle(data.labeled, family, opts)?;
    glm_with_region(data, &Region::All, &mle, WeightRule::Plugin, family, opts)
}

/// The full pipeline: MLE, estimated region from a fitted conditional-mean
/// oracle, plug-in matrices and weight, then the filtered fit from the MLE.
pub fn algorithm2_estimate(
    data: &SemiSupervised<'_>,
    oracle: &OracleSpec,
    family: GlmFamily,
    opts: &OptimizerOptions,
) -> Result<GlmFppiResult> {
    let mle = glm_mle(data.labeled, family, opts)?;
    algorithm2_from_mle(data, oracle, &mle, family, opts)
}

/// [`algorithm2_estimate`] reusing an already computed MLE fit.
pub fn algorithm2_from_mle(
    data: &SemiSupervised<'_>,
    oracle: &OracleSpec,
    mle: &GlmFit,
    family: GlmFamily,
    opts: &OptimizerOptions,
) -> Result<GlmFppiResult> {
    let m_hat = oracle.fit(data.labeled)?;
    let region = estimate_region_glm(
        data.labeled,
        m_hat,
        &PredictionSource::Precomputed(Vec::new()),
        &mle.theta,
        family,
    )?;
    glm_with_region(data, &region, mle, WeightRule::Plugin, family, opts)
}
