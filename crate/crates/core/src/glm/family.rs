use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{FppiError, Result};

/// Link-scale bound applied before exponentiating for the Poisson family.
pub const ETA_MAX: f64 = 30.0;

/// Canonical exponential-family working model, described by its
/// log-partition function `A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum GlmFamily {
    Gaussian { sigma2: f64 },
    Bernoulli,
    Poisson,
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

impl GlmFamily {
    pub fn gaussian(sigma2: f64) -> Self {
        GlmFamily::Gaussian { sigma2 }
    }

    /// `(A(η), A′(η), A″(η))`.
    ///
    /// The Bernoulli forms are evaluated without overflow for any finite η,
    /// so no clamp is needed there; Poisson clamps `|η| ≤ ETA_MAX`.
    pub fn eval(&self, eta: f64) -> (f64, f64, f64) {
        match *self {
            GlmFamily::Gaussian { sigma2 } => (eta * eta / (2.0 * sigma2), eta / sigma2, 1.0 / sigma2),
            GlmFamily::Bernoulli => {
                let s = sigmoid(eta);
                (softplus(eta), s, s * (1.0 - s))
            }
            GlmFamily::Poisson => {
                let e = eta.clamp(-ETA_MAX, ETA_MAX).exp();
                (e, e, e)
            }
        }
    }

    /// `A′(η)`, the working mean.
    pub fn mean(&self, eta: f64) -> f64 {
        match *self {
            GlmFamily::Gaussian { sigma2 } => eta / sigma2,
            GlmFamily::Bernoulli => sigmoid(eta),
            GlmFamily::Poisson => eta.clamp(-ETA_MAX, ETA_MAX).exp(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let GlmFamily::Gaussian { sigma2 } = *self {
            if !(sigma2 > 0.0 && sigma2.is_finite()) {
                return Err(FppiError::invalid(format!(
                    "gaussian variance must be positive, got {sigma2}"
                )));
            }
        }
        Ok(())
    }

    /// Responses must lie in the family's support: 0/1 for Bernoulli,
    /// non-negative integers for Poisson.
    pub fn check_responses(&self, y: &[f64]) -> Result<()> {
        let bad = match self {
            GlmFamily::Gaussian { .. } => None,
            GlmFamily::Bernoulli => y.iter().position(|&v| v != 0.0 && v != 1.0),
            GlmFamily::Poisson => y.iter().position(|&v| v < 0.0 || v.fract() != 0.0),
        };
        match bad {
            Some(i) => Err(FppiError::invalid(format!(
                "response {} at row {i} is outside the {self} support",
                y[i]
            ))),
            None => Ok(()),
        }
    }
}

pub fn family_eval(family: GlmFamily, eta: f64) -> (f64, f64, f64) {
    family.eval(eta)
}

impl fmt::Display for GlmFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GlmFamily::Gaussian { .. } => f.write_str("gaussian"),
            GlmFamily::Bernoulli => f.write_str("bernoulli"),
            GlmFamily::Poisson => f.write_str("poisson"),
        }
    }
}

impl FromStr for GlmFamily {
    type Err = FppiError;

    /// `gaussian` (unit variance), `gaussian:S2`, `bernoulli`, `poisson`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let fam = match s {
            "gaussian" => GlmFamily::gaussian(1.0),
            "bernoulli" | "logistic" => GlmFamily::Bernoulli,
            "poisson" => GlmFamily::Poisson,
            _ => match s.strip_prefix("gaussian:").map(str::parse::<f64>) {
                Some(Ok(v)) => GlmFamily::gaussian(v),
                _ => {
                    return Err(FppiError::invalid(format!(
                        "unknown family `{s}` (expected gaussian, bernoulli or poisson)"
                    )))
                }
            },
        };
        fam.validate()?;
        Ok(fam)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values() {
        let (a, a1, a2) = family_eval(GlmFamily::Bernoulli, 0.0);
        assert!((a - 2f64.ln()).abs() < 1e-15);
        assert_eq!((a1, a2), (0.5, 0.25));
        assert_eq!(family_eval(GlmFamily::Poisson, 0.0), (1.0, 1.0, 1.0));
        assert_eq!(family_eval(GlmFamily::gaussian(1.0), 2.0), (2.0, 2.0, 1.0));
        assert_eq!(family_eval(GlmFamily::gaussian(4.0), 2.0), (0.5, 0.5, 0.25));
    }

    #[test]
    fn extreme_arguments_stay_finite() {
        for eta in [-1e6, -800.0, -40.0, 40.0, 800.0, 1e6] {
            for fam in [GlmFamily::Bernoulli, GlmFamily::Poisson] {
                let (a, a1, a2) = fam.eval(eta);
                assert!(a.is_finite() && a1.is_finite() && a2.is_finite(), "{fam} {eta}");
            }
        }
        assert_eq!(GlmFamily::Poisson.eval(100.0).0, ETA_MAX.exp());
        assert!((GlmFamily::Bernoulli.eval(800.0).0 - 800.0).abs() < 1e-12);
    }

    #[test]
    fn softplus_derivative_is_sigmoid() {
        for eta in [-5.0, -0.3, 0.0, 1.7, 12.0] {
            let h = 1e-6;
            let fd = (softplus(eta + h) - softplus(eta - h)) / (2.0 * h);
            assert!((fd - sigmoid(eta)).abs() < 1e-8);
        }
    }

    #[test]
    fn parsing_and_support() {
        assert_eq!("gaussian".parse::<GlmFamily>().unwrap(), GlmFamily::gaussian(1.0));
        assert_eq!("gaussian:2.5".parse::<GlmFamily>().unwrap(), GlmFamily::gaussian(2.5));
        assert!("gaussian:0".parse::<GlmFamily>().is_err());
        assert!("gamma".parse::<GlmFamily>().is_err());
        assert!(GlmFamily::Bernoulli.check_responses(&[0.0, 1.0, 0.5]).is_err());
        assert!(GlmFamily::Poisson.check_responses(&[0.0, 3.0]).is_ok());
        assert!(GlmFamily::Poisson.check_responses(&[-1.0]).is_err());
    }
}
