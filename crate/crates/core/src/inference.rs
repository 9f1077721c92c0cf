//! Nonparametric bootstrap for the effect curves.
//!
//! Subjects (not events) are resampled with replacement; every replicate
//! refits all three working models. Replicate `r` draws its indices from a
//! ChaCha stream keyed by `(seed, r)`, so results do not depend on how
//! rayon schedules the work.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Cohort;
use crate::error::InferenceError;
use crate::estimators::{estimate_effects, EffectEstimates, EstimatorOptions, Method};
use crate::fit::fit_models;

/// Largest tolerated share of failed replicates.
pub const MAX_FAILURE_SHARE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSpec {
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
    pub method: Method,
    #[serde(default)]
    pub options: EstimatorOptions,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        Self { replicates: 500, level: 0.95, seed: 0, method: Method::Tr, options: EstimatorOptions::default() }
    }
}

impl BootstrapSpec {
    pub fn validate(&self) -> Result<(), InferenceError> {
        if self.replicates < 2 {
            return Err(InferenceError::TooFewReplicates(self.replicates));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(InferenceError::InvalidLevel(self.level));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub time: f64,
    pub nde: Interval,
    pub nie: Interval,
    pub te: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimates {
    pub method: Method,
    pub level: f64,
    pub replicates: usize,
    pub n_failed_replicates: usize,
    pub rows: Vec<IntervalRow>,
}

/// Resample indices for replicate `r`.
pub fn resample_indices(seed: u64, replicate: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Sample quantile with linear interpolation between order statistics
/// (the default "type 7" rule). `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn replicate(
    cohort: &Cohort,
    spec: &BootstrapSpec,
    timepoints: &[f64],
    r: usize,
) -> Option<EffectEstimates> {
    let idx = resample_indices(spec.seed, r, cohort.len());
    let boot = cohort.resample(&idx).ok()?;
    let fits = fit_models(&boot).ok()?;
    let est = estimate_effects(spec.method, &fits, &boot, timepoints, &spec.options).ok()?;
    est.rows
        .iter()
        .all(|row| row.nde.is_finite() && row.nie.is_finite() && row.te.is_finite())
        .then_some(est)
}

/// Point estimates on the full cohort with percentile intervals.
pub fn bootstrap_effects(
    cohort: &Cohort,
    spec: &BootstrapSpec,
    timepoints: &[f64],
) -> Result<IntervalEstimates, InferenceError> {
    spec.validate()?;
    let fits = fit_models(cohort)?;
    let point = estimate_effects(spec.method, &fits, cohort, timepoints, &spec.options)?;

    let draws: Vec<Option<EffectEstimates>> =
        (0..spec.replicates).into_par_iter().map(|r| replicate(cohort, spec, timepoints, r)).collect();
    let ok: Vec<&EffectEstimates> = draws.iter().flatten().collect();
    let failed = spec.replicates - ok.len();
    if failed as f64 > MAX_FAILURE_SHARE * spec.replicates as f64 || ok.is_empty() {
        return Err(InferenceError::TooManyFailures { failed, replicates: spec.replicates });
    }

    let alpha = (1.0 - spec.level) / 2.0;
    let interval = |estimate: f64, mut values: Vec<f64>| {
        values.sort_by(f64::total_cmp);
        Interval {
            estimate,
            lower: quantile_sorted(&values, alpha),
            upper: quantile_sorted(&values, 1.0 - alpha),
        }
    };
    let rows = point
        .rows
        .iter()
        .enumerate()
        .map(|(k, p)| IntervalRow {
            time: p.time,
            nde: interval(p.nde, ok.iter().map(|e| e.rows[k].nde).collect()),
            nie: interval(p.nie, ok.iter().map(|e| e.rows[k].nie).collect()),
            te: interval(p.te, ok.iter().map(|e| e.rows[k].te).collect()),
        })
        .collect();
    Ok(IntervalEstimates {
        method: spec.method,
        level: spec.level,
        replicates: spec.replicates,
        n_failed_replicates: failed,
        rows,
    })
}
