use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{design_matrix, NewtonSettings};
use crate::error::FitError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Sup-norm of the per-observation score at the returned estimate.
    pub final_gradient_norm: f64,
}

impl LogisticFit {
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum()
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        expit(self.linear_predictor(row))
    }
}

/// Logistic MLE. The caller supplies the intercept column.
pub fn fit_logistic(rows: &[Vec<f64>], responses: &[f64]) -> Result<LogisticFit, FitError> {
    fit_logistic_with(rows, responses, &NewtonSettings::default())
}

pub fn fit_logistic_with(
    rows: &[Vec<f64>],
    responses: &[f64],
    settings: &NewtonSettings,
) -> Result<LogisticFit, FitError> {
    let x = design_matrix(rows)?;
    if responses.len() != x.nrows() {
        return Err(FitError::Dimension(format!(
            "{} rows but {} responses",
            x.nrows(),
            responses.len()
        )));
    }
    if responses.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(FitError::Dimension("responses must be 0 or 1".into()));
    }
    let y = DVector::from_column_slice(responses);
    let n = x.nrows() as f64;
    let k = x.ncols();

    let mut beta = DVector::zeros(k);
    let mut state = evaluate(&x, &y, &beta);
    let mut iterations = 0;
    loop {
        let grad_norm = state.score.amax() / n;
        if grad_norm <= settings.tolerance {
            return Ok(LogisticFit {
                coefficients: beta.iter().copied().collect(),
                converged: true,
                iterations,
                final_gradient_norm: grad_norm,
            });
        }
        if iterations == settings.max_iterations {
            return Err(FitError::Convergence {
                iterations,
                gradient_norm: grad_norm,
                last: beta.iter().copied().collect(),
            });
        }
        iterations += 1;

        let step = state
            .information
            .clone()
            .cholesky()
            .ok_or(FitError::Separation { bound: settings.divergence_bound })?
            .solve(&state.score);

        let mut scale = 1.0;
        let mut next = None;
        for _ in 0..=settings.max_halvings {
            let candidate = &beta + &step * scale;
            let trial = evaluate(&x, &y, &candidate);
            if trial.loglik.is_finite() && trial.loglik >= state.loglik - 1e-12 * state.loglik.abs() {
                next = Some((candidate, trial));
                break;
            }
            scale *= 0.5;
        }
        let Some((candidate, trial)) = next else {
            // step-halving exhausted without an ascent step
            let grad_norm = state.score.amax() / n;
            return Err(FitError::Convergence {
                iterations,
                gradient_norm: grad_norm,
                last: beta.iter().copied().collect(),
            });
        };
        beta = candidate;
        state = trial;
        if beta.amax() > settings.divergence_bound {
            return Err(FitError::Separation { bound: settings.divergence_bound });
        }
    }
}

struct State {
    loglik: f64,
    score: DVector<f64>,
    information: DMatrix<f64>,
}

fn evaluate(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> State {
    let eta = x * beta;
    let k = x.ncols();
    let mut loglik = 0.0;
    let mut resid = DVector::zeros(x.nrows());
    let mut weighted = x.clone();
    for i in 0..x.nrows() {
        let e = eta[i];
        let p = expit(e);
        loglik += y[i] * e - softplus(e);
        resid[i] = y[i] - p;
        let w = (p * (1.0 - p)).sqrt();
        for j in 0..k {
            weighted[(i, j)] *= w;
        }
    }
    State { loglik, score: x.transpose() * resid, information: weighted.transpose() * &weighted }
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Average log-likelihood; used by tests for finite-difference checks.
pub fn logistic_loglik(rows: &[Vec<f64>], responses: &[f64], coefficients: &[f64]) -> f64 {
    rows.iter()
        .zip(responses)
        .map(|(r, &y)| {
            let e: f64 = r.iter().zip(coefficients).map(|(x, b)| x * b).sum();
            y * e - softplus(e)
        })
        .sum::<f64>()
        / rows.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn intercept_only(y: &[f64]) -> LogisticFit {
        let rows = vec![vec![1.0]; y.len()];
        fit_logistic(&rows, y).unwrap()
    }

    #[test]
    fn intercept_only_balanced_is_zero() {
        let fit = intercept_only(&[1.0, 1.0, 0.0, 0.0]);
        assert!(fit.converged);
        assert_abs_diff_eq!(fit.coefficients[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn intercept_only_three_quarters_is_ln3() {
        let fit = intercept_only(&[1.0, 1.0, 1.0, 0.0]);
        assert_abs_diff_eq!(fit.coefficients[0], 3f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn separation_is_reported() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0, i as f64]).collect();
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        assert!(matches!(fit_logistic(&rows, &y), Err(FitError::Separation { .. })));
    }

    #[test]
    fn ragged_input_is_a_dimension_error() {
        let rows = vec![vec![1.0, 0.0], vec![1.0]];
        assert!(matches!(fit_logistic(&rows, &[0.0, 1.0]), Err(FitError::Dimension(_))));
        assert!(matches!(fit_logistic(&[], &[]), Err(FitError::Dimension(_))));
        let rows = vec![vec![1.0], vec![1.0]];
        assert!(matches!(fit_logistic(&rows, &[0.0]), Err(FitError::Dimension(_))));
    }

    #[test]
    fn expit_is_stable_in_the_tails() {
        assert_eq!(expit(-800.0), 0.0);
        assert_eq!(expit(800.0), 1.0);
        assert_abs_diff_eq!(softplus(800.0), 800.0);
        assert_abs_diff_eq!(logit(expit(0.3)), 0.3, epsilon = 1e-14);
    }
}
