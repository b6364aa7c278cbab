use serde::Serialize;

use crate::error::{FppiError, Result};
use crate::linalg::inf_norm;

/// Full-batch gradient descent with Armijo backtracking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizerOptions {
    /// Stop once the gradient's max-abs entry drops below this.
    pub tol: f64,
    pub max_iter: usize,
    pub initial_step: f64,
    pub armijo_c: f64,
    pub shrink: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 5000,
            initial_step: 1.0,
            armijo_c: 1e-4,
            shrink: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Convergence {
    pub iterations: usize,
    pub grad_norm: f64,
}

const MAX_HALVINGS: usize = 80;

/// Minimizes a smooth function given a joint value-and-gradient oracle.
///
/// Near the optimum the sufficient-decrease test drowns in rounding noise
/// in the objective and passes or fails at random. When the trial value is
/// indistinguishable from the current one, the decrease is estimated from
/// the gradients instead, by the trapezoid rule
/// `f(x−αg) − f(x) ≈ −α(gᵀg + gᵀg_t)/2` (exact for quadratics), with the
/// same Armijo constant; the step must also shrink the gradient, so the
/// gradient norm cannot drift upward while the objective is flat.
pub fn minimize<F>(mut eval: F, start: &[f64], opts: &OptimizerOptions) -> Result<(Vec<f64>, Convergence)>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(FppiError::invalid("optimizer needs tol > 0 and max_iter > 0"));
    }
    let mut x = start.to_vec();
    let (mut fx, mut g) = eval(&x);
    let mut gnorm = inf_norm(&g);
    let mut iterations = 0;
    let mut trial = vec![0.0; x.len()];

    while iterations < opts.max_iter {
        if !fx.is_finite() || !gnorm.is_finite() {
            break;
        }
        if gnorm < opts.tol {
            return Ok((x, Convergence { iterations, grad_norm: gnorm }));
        }
        iterations += 1;
        let gg: f64 = g.iter().map(|v| v * v).sum();
        let mut step = opts.initial_step;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            for ((t, xi), gi) in trial.iter_mut().zip(&x).zip(&g) {
                *t = xi - step * gi;
            }
            let (ft, gt) = eval(&trial);
            if ft.is_finite() {
                let sufficient = ft <= fx - opts.armijo_c * step * gg;
                let flat = (ft - fx).abs() <= 64.0 * f64::EPSILON * fx.abs().max(1.0);
                let g_gt: f64 = g.iter().zip(&gt).map(|(a, b)| a * b).sum();
                let approx = g_gt >= -(1.0 - 2.0 * opts.armijo_c) * gg;
                let accept = if flat {
                    approx && inf_norm(&gt) < gnorm
                } else {
                    sufficient
                };
                if accept {
                    accepted = Some((ft, gt));
                    break;
                }
            }
            step *= opts.shrink;
        }
        match accepted {
            Some((ft, gt)) => {
                x.copy_from_slice(&trial);
                fx = ft;
                g = gt;
                gnorm = inf_norm(&g);
            }
            None => break,
        }
    }
    if gnorm < opts.tol {
        return Ok((x, Convergence { iterations, grad_norm: gnorm }));
    }
    Err(FppiError::NonConvergence {
        iterations,
        grad_norm: gnorm,
        last_iterate: x,
    })
}
