use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_xy, FitError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeParams {
    pub lambda: f64,
    /// Scale columns to unit variance before solving. Zero-variance columns stay unscaled.
    pub standardize: bool,
    /// Center columns and target, leaving the intercept unpenalized.
    pub fit_intercept: bool,
}

impl Default for RidgeParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            standardize: true,
            fit_intercept: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    /// Weights on the transformed columns `(x - means) / scales`.
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub params: RidgeParams,
}

impl RidgeModel {
    /// The column transform applied before the weights.
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.means)
            .zip(&self.scales)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.transform(x)
            .iter()
            .zip(&self.weights)
            .map(|(z, w)| z * w)
            .sum::<f64>()
            + self.intercept
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}

/// Solves `(ZᵀZ + λI) w = Zᵀ(y - ȳ)` on the transformed design `Z`.
///
/// Uses a Cholesky factorization with one step of iterative refinement. When the system is
/// not positive definite (λ = 0 with rank-deficient `Z`) the minimum-norm least-squares
/// solution is returned instead.
pub fn fit_ridge(x: &[Vec<f64>], y: &[f64], params: &RidgeParams) -> Result<RidgeModel, FitError> {
    let p = check_xy(x, y)?;
    if !(params.lambda.is_finite() && params.lambda >= 0.0) {
        return Err(FitError::Param(format!(
            "lambda {} must be finite and >= 0",
            params.lambda
        )));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(FitError::NonFinite);
    }
    let n = x.len();
    let nf = n as f64;

    let means: Vec<f64> = if params.fit_intercept {
        (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / nf).collect()
    } else {
        vec![0.0; p]
    };
    // A column whose spread is rounding noise relative to its magnitude counts as constant:
    // it is left unscaled and contributes nothing to the fit.
    let constant: Vec<bool> = (0..p)
        .map(|j| {
            let magnitude = x.iter().map(|r| r[j].abs()).fold(1.0, f64::max);
            let spread = x.iter().map(|r| (r[j] - means[j]).abs()).fold(0.0, f64::max);
            spread <= 1e-10 * magnitude
        })
        .collect();
    let scales: Vec<f64> = if params.standardize {
        (0..p)
            .map(|j| {
                let var = x.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / nf;
                if var > 0.0 && !constant[j] {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect()
    } else {
        vec![1.0; p]
    };
    let y_mean = if params.fit_intercept {
        y.iter().sum::<f64>() / nf
    } else {
        0.0
    };

    let z = DMatrix::from_fn(n, p, |i, j| {
        if constant[j] && params.fit_intercept {
            0.0
        } else {
            (x[i][j] - means[j]) / scales[j]
        }
    });
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let zt = z.transpose();
    let gram = &zt * &z + DMatrix::identity(p, p) * params.lambda;
    let rhs = &zt * &yc;

    let rank_deficient = params.lambda == 0.0 && z.rank(1e-10 * z.norm().max(1.0)) < p;
    let factor = if rank_deficient { None } else { gram.clone().cholesky() };
    let weights = match factor {
        Some(chol) => {
            let mut w = chol.solve(&rhs);
            let residual = &rhs - &gram * &w;
            w += chol.solve(&residual);
            w
        }
        None => {
            log::warn!(
                "ridge system is singular (lambda = {}); using minimum-norm solution",
                params.lambda
            );
            z.clone()
                .svd(true, true)
                .solve(&yc, 1e-12)
                .map_err(|e| FitError::Param(format!("least-squares fallback failed: {e}")))?
        }
    };

    Ok(RidgeModel {
        weights: weights.iter().copied().collect(),
        intercept: y_mean,
        means,
        scales,
        params: params.clone(),
    })
}
