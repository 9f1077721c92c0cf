//! Proportional mean model `E(N(t) | X) = Lambda_0(t) exp(beta' X)` for
//! recurrent events, fitted by solving the partial-likelihood score
//! equation, with the Breslow estimator for the baseline mean.
//!
//! Risk-set sums are computed once per Newton iteration with suffix sums
//! over the subjects' exit indices, so an iteration costs `O(n p^2 + G p^2)`
//! for `G` distinct event times.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::NewtonSettings;
use crate::data::{Cohort, EventGrid, StepFunction};
use crate::error::FitError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionalMeanFit {
    /// `(beta_A, beta_M, beta_C...)`; no intercept, it is absorbed by the baseline.
    pub beta: Vec<f64>,
    pub baseline: StepFunction,
    pub converged: bool,
    pub iterations: usize,
    pub final_gradient_norm: f64,
}

impl ProportionalMeanFit {
    pub fn beta_a(&self) -> f64 {
        self.beta[0]
    }

    pub fn beta_m(&self) -> f64 {
        self.beta[1]
    }

    pub fn beta_c(&self) -> &[f64] {
        &self.beta[2..]
    }
}

/// Outcome covariates `X = (A, M, C)` for every subject.
pub fn outcome_design(cohort: &Cohort) -> Vec<Vec<f64>> {
    cohort
        .subjects()
        .iter()
        .map(|s| {
            let mut row = Vec::with_capacity(2 + s.confounders.len());
            row.push(s.exposure());
            row.push(s.mediator);
            row.extend_from_slice(&s.confounders);
            row
        })
        .collect()
}

pub fn fit_proportional_mean(cohort: &Cohort) -> Result<ProportionalMeanFit, FitError> {
    fit_proportional_mean_design(cohort, &outcome_design(cohort), &NewtonSettings::default())
}

/// Fit with arbitrary time-fixed covariate rows (one per subject).
pub fn fit_proportional_mean_design(
    cohort: &Cohort,
    covariates: &[Vec<f64>],
    settings: &NewtonSettings,
) -> Result<ProportionalMeanFit, FitError> {
    let design = Centered::new(cohort, covariates)?;
    let grid = cohort.grid();
    if grid.is_empty() {
        return Err(FitError::NoEvents);
    }
    let n = cohort.len() as f64;
    let p = design.p;

    let mut beta = DVector::zeros(p);
    let mut state = design.evaluate(grid, &beta, true)?;
    // a zero score at the start does not make an unidentified design valid
    if let Some(info) = &state.information {
        if info.clone().cholesky().is_none() {
            return Err(FitError::RankDeficient);
        }
    }
    let mut iterations = 0;
    loop {
        let grad_norm = state.score.amax() / n;
        if grad_norm <= settings.tolerance {
            let beta_vec: Vec<f64> = beta.iter().copied().collect();
            let baseline = design.breslow(grid, &beta_vec)?;
            return Ok(ProportionalMeanFit {
                beta: beta_vec,
                baseline,
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

        let info = state.information.take().expect("information requested");
        let step = info.cholesky().ok_or(FitError::RankDeficient)?.solve(&state.score);

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=settings.max_halvings {
            let candidate = &beta + &step * scale;
            if let Ok(trial) = design.evaluate(grid, &candidate, true) {
                if trial.loglik.is_finite()
                    && trial.loglik >= state.loglik - 1e-12 * state.loglik.abs()
                {
                    accepted = Some((candidate, trial));
                    break;
                }
            }
            scale *= 0.5;
        }
        let Some((candidate, trial)) = accepted else {
            return Err(FitError::Convergence {
                iterations,
                gradient_norm: grad_norm,
                last: beta.iter().copied().collect(),
            });
        };
        beta = candidate;
        state = trial;
        if beta.amax() > settings.divergence_bound {
            return Err(FitError::Convergence {
                iterations,
                gradient_norm: state.score.amax() / n,
                last: beta.iter().copied().collect(),
            });
        }
    }
}

/// Breslow estimator at an arbitrary `beta`, with the standard `(A, M, C)`
/// covariates.
pub fn breslow_baseline(cohort: &Cohort, beta: &[f64]) -> Result<StepFunction, FitError> {
    breslow_baseline_design(cohort, &outcome_design(cohort), beta)
}

pub fn breslow_baseline_design(
    cohort: &Cohort,
    covariates: &[Vec<f64>],
    beta: &[f64],
) -> Result<StepFunction, FitError> {
    let design = Centered::new(cohort, covariates)?;
    if beta.len() != design.p || beta.iter().any(|b| !b.is_finite()) {
        return Err(FitError::Dimension(format!(
            "beta has {} entries, design has {} columns",
            beta.len(),
            design.p
        )));
    }
    if cohort.grid().is_empty() {
        return Ok(StepFunction::zero());
    }
    design.breslow(cohort.grid(), beta)
}

/// Score `U(beta)` of the estimating equation, summed over subjects.
pub fn score(cohort: &Cohort, covariates: &[Vec<f64>], beta: &[f64]) -> Result<Vec<f64>, FitError> {
    let design = Centered::new(cohort, covariates)?;
    let state = design.evaluate(cohort.grid(), &DVector::from_column_slice(beta), false)?;
    Ok(state.score.iter().copied().collect())
}

struct Centered {
    p: usize,
    /// Row-major `n x p`, column-centered.
    x: Vec<f64>,
    means: Vec<f64>,
    event_total: DVector<f64>,
}

struct Evaluation {
    loglik: f64,
    score: DVector<f64>,
    information: Option<DMatrix<f64>>,
}

impl Centered {
    fn new(cohort: &Cohort, rows: &[Vec<f64>]) -> Result<Self, FitError> {
        let n = cohort.len();
        if rows.len() != n {
            return Err(FitError::Dimension(format!("{} covariate rows for {n} subjects", rows.len())));
        }
        let p = rows.first().map_or(0, Vec::len);
        if p == 0 || rows.iter().any(|r| r.len() != p) {
            return Err(FitError::Dimension("covariate rows are empty or ragged".into()));
        }
        let mut means = vec![0.0; p];
        for r in rows {
            for (m, v) in means.iter_mut().zip(r) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n as f64);
        let x: Vec<f64> =
            rows.iter().flat_map(|r| r.iter().zip(&means).map(|(v, m)| v - m)).collect();

        let grid = cohort.grid();
        let mut event_total = DVector::zeros(p);
        for k in 0..grid.len() {
            for &i in grid.events_at(k) {
                for j in 0..p {
                    event_total[j] += x[i * p + j];
                }
            }
        }
        Ok(Self { p, x, means, event_total })
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    fn risk_scores(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.x.len() / self.p)
            .map(|i| self.row(i).iter().zip(beta).map(|(x, b)| x * b).sum::<f64>().exp())
            .collect()
    }

    fn evaluate(
        &self,
        grid: &EventGrid,
        beta: &DVector<f64>,
        with_information: bool,
    ) -> Result<Evaluation, FitError> {
        let p = self.p;
        let g = grid.len();
        // slot layout: [S0, S1 (p), S2 upper triangle (p(p+1)/2)]
        let tri = if with_information { p * (p + 1) / 2 } else { 0 };
        let m = 1 + p + tri;
        let mut bucket = vec![0.0; (g + 1) * m];
        let scores = self.risk_scores(beta.as_slice());
        for (i, &e) in scores.iter().enumerate() {
            let base = grid.exit_index(i) * m;
            let x = self.row(i);
            bucket[base] += e;
            for j in 0..p {
                bucket[base + 1 + j] += e * x[j];
            }
            if with_information {
                let mut slot = base + 1 + p;
                for j in 0..p {
                    for l in j..p {
                        bucket[slot] += e * x[j] * x[l];
                        slot += 1;
                    }
                }
            }
        }

        let mut acc = vec![0.0; m];
        let mut loglik = self.event_total.dot(beta);
        let mut score = self.event_total.clone();
        let mut info = with_information.then(|| DMatrix::zeros(p, p));
        for k in (0..g).rev() {
            for (a, b) in acc.iter_mut().zip(&bucket[(k + 1) * m..(k + 2) * m]) {
                *a += b;
            }
            let d = grid.event_count(k);
            let s0 = acc[0];
            if !(s0 > 0.0) || !s0.is_finite() {
                return Err(FitError::RiskSetEmpty { time: grid.times()[k] });
            }
            loglik -= d * s0.ln();
            for j in 0..p {
                score[j] -= d * acc[1 + j] / s0;
            }
            if let Some(info) = info.as_mut() {
                let mut slot = 1 + p;
                for j in 0..p {
                    for l in j..p {
                        let v = d * (acc[slot] / s0 - acc[1 + j] * acc[1 + l] / (s0 * s0));
                        info[(j, l)] += v;
                        if l != j {
                            info[(l, j)] += v;
                        }
                        slot += 1;
                    }
                }
            }
        }
        Ok(Evaluation { loglik, score, information: info })
    }

    fn breslow(&self, grid: &EventGrid, beta: &[f64]) -> Result<StepFunction, FitError> {
        let scores = self.risk_scores(beta);
        let s0 = grid.risk_sums(&scores);
        let shift: f64 = self.means.iter().zip(beta).map(|(m, b)| m * b).sum::<f64>().exp();
        let mut jumps = Vec::with_capacity(grid.len());
        for (k, &s) in s0.iter().enumerate() {
            if !(s > 0.0) {
                return Err(FitError::RiskSetEmpty { time: grid.times()[k] });
            }
            jumps.push(grid.event_count(k) / (s * shift));
        }
        Ok(StepFunction::new(grid.times().to_vec(), jumps).expect("grid is strictly ascending"))
    }
}
