//! The three working models: exposure (logistic), mediator (Gaussian
//! linear or logistic) and outcome (proportional mean with a Breslow
//! baseline).

mod gaussian;
mod logistic;
mod propmean;

pub use gaussian::{fit_gaussian_mediator, GaussianMediatorFit};
pub use logistic::{expit, fit_logistic, fit_logistic_with, logistic_loglik, logit, LogisticFit};
pub use propmean::{
    breslow_baseline, breslow_baseline_design, fit_proportional_mean,
    fit_proportional_mean_design, outcome_design, score as proportional_mean_score,
    ProportionalMeanFit,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Cohort, MediatorKind, Subject};
use crate::error::FitError;

/// Newton-Raphson controls shared by every fit.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonSettings {
    /// Bound on the sup-norm of the per-observation score.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// `|coef|_inf` above this is treated as divergence.
    pub divergence_bound: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 100, max_halvings: 20, divergence_bound: 50.0 }
    }
}

pub(crate) fn design_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, FitError> {
    let k = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || k == 0 {
        return Err(FitError::Dimension("design has no rows or no columns".into()));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != k) {
        return Err(FitError::Dimension(format!("row {i} has {} columns, expected {k}", r.len())));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(FitError::Dimension("design contains non-finite values".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]))
}

/// Logistic model for a binary mediator, `logit Pr(M = 1 | A, C)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMediatorFit {
    /// `(theta_0, theta_A, theta_C...)`
    pub coefficients: Vec<f64>,
}

impl BinaryMediatorFit {
    pub fn prob(&self, row: &[f64]) -> f64 {
        expit(self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum())
    }
}

pub fn fit_binary_mediator(
    rows: &[Vec<f64>],
    responses: &[f64],
) -> Result<BinaryMediatorFit, FitError> {
    fit_logistic(rows, responses).map(|f| BinaryMediatorFit { coefficients: f.coefficients })
}

/// Standardization applied to the mediator when it is (wrongly) added to
/// the exposure model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediatorScaling {
    pub mean: f64,
    pub sd: f64,
}

/// Fitted propensity model. When `scaled_mediator` is set the design row
/// is `(1, C, (M - mean) / sd)`, otherwise `(1, C)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureModel {
    pub fit: LogisticFit,
    pub scaled_mediator: Option<MediatorScaling>,
}

impl ExposureModel {
    pub fn design_row(&self, s: &Subject) -> Vec<f64> {
        exposure_row(s, self.scaled_mediator)
    }

    /// `E(A | C)` for this subject. A scaled-mediator column only shifts the
    /// intercept and confounder coefficients; the weights stay functions of
    /// `C`, so its own term is dropped (equivalently, `M` is set to its mean).
    pub fn propensity(&self, s: &Subject) -> f64 {
        self.fit.predict(&exposure_row(s, None))
    }
}

fn exposure_row(s: &Subject, scaling: Option<MediatorScaling>) -> Vec<f64> {
    let mut row = Vec::with_capacity(2 + s.confounders.len());
    row.push(1.0);
    row.extend_from_slice(&s.confounders);
    if let Some(sc) = scaling {
        row.push((s.mediator - sc.mean) / sc.sd);
    }
    row
}

/// Mediator design row `(1, a, C)`.
pub fn mediator_row(a: f64, confounders: &[f64]) -> Vec<f64> {
    let mut row = Vec::with_capacity(2 + confounders.len());
    row.push(1.0);
    row.push(a);
    row.extend_from_slice(confounders);
    row
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MediatorModel {
    Gaussian(GaussianMediatorFit),
    Binary(BinaryMediatorFit),
}

impl MediatorModel {
    pub fn coefficients(&self) -> &[f64] {
        match self {
            Self::Gaussian(f) => &f.coefficients,
            Self::Binary(f) => &f.coefficients,
        }
    }

    pub fn coefficients_mut(&mut self) -> &mut Vec<f64> {
        match self {
            Self::Gaussian(f) => &mut f.coefficients,
            Self::Binary(f) => &mut f.coefficients,
        }
    }

    /// Density (Gaussian) or probability mass (binary) of `m` given `(a, c)`.
    pub fn density(&self, m: f64, a: f64, c: &[f64]) -> f64 {
        let row = mediator_row(a, c);
        match self {
            Self::Gaussian(f) => {
                let z = m - f.mean(&row);
                (-0.5 * z * z / f.sigma2).exp() / (2.0 * std::f64::consts::PI * f.sigma2).sqrt()
            }
            Self::Binary(f) => {
                let p = f.prob(&row);
                if m == 1.0 {
                    p
                } else {
                    1.0 - p
                }
            }
        }
    }
}

/// The exposure, mediator and outcome fits used by every estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModels {
    pub exposure: ExposureModel,
    pub mediator: MediatorModel,
    pub outcome: ProportionalMeanFit,
}

pub fn fit_exposure(cohort: &Cohort, scaled_mediator: bool) -> Result<ExposureModel, FitError> {
    let subjects = cohort.subjects();
    let scaling = scaled_mediator.then(|| {
        let n = subjects.len() as f64;
        let mean = subjects.iter().map(|s| s.mediator).sum::<f64>() / n;
        let var =
            subjects.iter().map(|s| (s.mediator - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        MediatorScaling { mean, sd: var.sqrt() }
    });
    if let Some(sc) = scaling {
        if !(sc.sd > 0.0) {
            return Err(FitError::RankDeficient);
        }
    }
    let rows: Vec<Vec<f64>> = subjects.iter().map(|s| exposure_row(s, scaling)).collect();
    let y: Vec<f64> = subjects.iter().map(Subject::exposure).collect();
    let fit = fit_logistic(&rows, &y)?;
    Ok(ExposureModel { fit, scaled_mediator: scaling })
}

pub fn fit_mediator(cohort: &Cohort) -> Result<MediatorModel, FitError> {
    let rows: Vec<Vec<f64>> =
        cohort.subjects().iter().map(|s| mediator_row(s.exposure(), &s.confounders)).collect();
    let y: Vec<f64> = cohort.subjects().iter().map(|s| s.mediator).collect();
    match cohort.mediator_kind() {
        MediatorKind::ContinuousGaussian => fit_gaussian_mediator(&rows, &y).map(MediatorModel::Gaussian),
        MediatorKind::Binary => fit_binary_mediator(&rows, &y).map(MediatorModel::Binary),
    }
}

/// Fits all three working models with their default specifications.
pub fn fit_models(cohort: &Cohort) -> Result<FittedModels, FitError> {
    Ok(FittedModels {
        exposure: fit_exposure(cohort, false)?,
        mediator: fit_mediator(cohort)?,
        outcome: fit_proportional_mean(cohort)?,
    })
}
