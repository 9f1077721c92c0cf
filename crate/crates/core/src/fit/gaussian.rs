use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::design_matrix;
use crate::error::FitError;

/// Normal linear mediator model. `sigma2` is the ML estimate `RSS / n`,
/// not the unbiased `RSS / (n - k)` that OLS software usually prints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMediatorFit {
    /// `(theta_0, theta_A, theta_C...)`
    pub coefficients: Vec<f64>,
    pub sigma2: f64,
}

impl GaussianMediatorFit {
    pub fn mean(&self, row: &[f64]) -> f64 {
        self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum()
    }
}

/// Least squares via a thin QR decomposition.
pub fn fit_gaussian_mediator(
    rows: &[Vec<f64>],
    responses: &[f64],
) -> Result<GaussianMediatorFit, FitError> {
    let x = design_matrix(rows)?;
    let (n, k) = x.shape();
    if responses.len() != n {
        return Err(FitError::Dimension(format!("{n} rows but {} responses", responses.len())));
    }
    if n < k {
        return Err(FitError::RankDeficient);
    }
    let y = DVector::from_column_slice(responses);
    let qr = x.clone().qr();
    let r = qr.r();
    let max_diag = (0..k).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    if max_diag == 0.0 || (0..k).any(|j| r[(j, j)].abs() <= 1e-10 * max_diag) {
        return Err(FitError::RankDeficient);
    }
    let qty = qr.q().transpose() * &y;
    let coef = r.solve_upper_triangular(&qty).ok_or(FitError::RankDeficient)?;

    let resid = &y - &x * &coef;
    let rss = resid.norm_squared();
    let scale = y.norm_squared().max(1.0);
    if rss <= 1e-24 * scale {
        return Err(FitError::DegenerateVariance);
    }
    Ok(GaussianMediatorFit { coefficients: coef.iter().copied().collect(), sigma2: rss / n as f64 })
}
