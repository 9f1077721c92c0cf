//! Counting-process data model.
//!
//! A [`Subject`] keeps its full event record; the observed process only
//! counts events up to `min(tau, censor_time)`, so the same subject can be
//! re-truncated at a different horizon without losing data.

use serde::{Deserialize, Serialize};

use crate::error::DataError;

/// How the mediator is distributed given exposure and confounders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediatorKind {
    ContinuousGaussian,
    Binary,
}

/// One individual's recurrent-event history and baseline covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    event_times: Vec<f64>,
    pub censor_time: f64,
    pub exposed: bool,
    pub mediator: f64,
    pub confounders: Vec<f64>,
}

impl Subject {
    /// Builds a subject. Event times are sorted here; ties within a subject
    /// are kept (they add to the jump size of the counting process).
    pub fn new(
        id: impl Into<String>,
        mut event_times: Vec<f64>,
        censor_time: f64,
        exposed: bool,
        mediator: f64,
        confounders: Vec<f64>,
    ) -> Result<Self, DataError> {
        let id = id.into();
        if let Some(&t) = event_times.iter().find(|t| !t.is_finite() || **t < 0.0) {
            return Err(DataError::InvalidTime { id, value: t });
        }
        if !censor_time.is_finite() || censor_time < 0.0 {
            return Err(DataError::InvalidTime { id, value: censor_time });
        }
        if !mediator.is_finite() || confounders.iter().any(|c| !c.is_finite()) {
            return Err(DataError::NonFinite { id });
        }
        event_times.sort_by(f64::total_cmp);
        Ok(Self { id, event_times, censor_time, exposed, mediator, confounders })
    }

    /// Full event record, including events after censoring or the horizon.
    pub fn event_times(&self) -> &[f64] {
        &self.event_times
    }

    pub fn exposure(&self) -> f64 {
        if self.exposed {
            1.0
        } else {
            0.0
        }
    }

    /// End of observation, `min(tau, T^C)`.
    pub fn exit_time(&self, tau: f64) -> f64 {
        tau.min(self.censor_time)
    }

    /// `Y(u) = I(u <= min(tau, T^C))`.
    pub fn at_risk(&self, u: f64, tau: f64) -> bool {
        u <= self.exit_time(tau)
    }

    /// Events counted by the observed process.
    pub fn observed_events(&self, tau: f64) -> &[f64] {
        let end = self.exit_time(tau);
        let k = self.event_times.partition_point(|&t| t <= end);
        &self.event_times[..k]
    }

    /// The observed counting process `N(t)`.
    pub fn counting_process(&self, tau: f64) -> StepFunction {
        StepFunction::from_unsorted(self.observed_events(tau).iter().map(|&t| (t, 1.0)))
    }
}

/// Right-continuous step function: `value(t)` is the sum of jumps at
/// times `<= t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    jump_times: Vec<f64>,
    jump_sizes: Vec<f64>,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

impl Default for StepFunction {
    fn default() -> Self {
        Self::zero()
    }
}

impl StepFunction {
    pub fn zero() -> Self {
        Self { jump_times: Vec::new(), jump_sizes: Vec::new(), cumulative: Vec::new() }
    }

    /// Jump times must be strictly ascending and the lengths must agree.
    pub fn new(jump_times: Vec<f64>, jump_sizes: Vec<f64>) -> Result<Self, DataError> {
        if jump_times.len() != jump_sizes.len() {
            return Err(DataError::Dimension {
                expected: jump_times.len(),
                found: jump_sizes.len(),
            });
        }
        if jump_times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DataError::UnsortedJumps);
        }
        let cumulative = running_sum(&jump_sizes);
        Ok(Self { jump_times, jump_sizes, cumulative })
    }

    /// Merges `(time, size)` pairs in any order; equal times accumulate.
    pub fn from_unsorted(jumps: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut pairs: Vec<(f64, f64)> = jumps.into_iter().collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut jump_times: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut jump_sizes: Vec<f64> = Vec::with_capacity(pairs.len());
        for (t, s) in pairs {
            match jump_times.last() {
                Some(&last) if last == t => *jump_sizes.last_mut().unwrap() += s,
                _ => {
                    jump_times.push(t);
                    jump_sizes.push(s);
                }
            }
        }
        let cumulative = running_sum(&jump_sizes);
        Self { jump_times, jump_sizes, cumulative }
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn jump_sizes(&self) -> &[f64] {
        &self.jump_sizes
    }

    pub fn is_empty(&self) -> bool {
        self.jump_times.is_empty()
    }

    pub fn value(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&s| s <= t);
        if k == 0 {
            return 0.0;
        }
        match self.cumulative.get(k - 1) {
            Some(&v) => v,
            // deserialized without the cache
            None => self.jump_sizes[..k].iter().sum(),
        }
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.jump_sizes.iter().all(|&s| s >= 0.0)
    }

    /// Same function with the time axis multiplied by `factor`.
    pub fn rescale_time(&self, factor: f64) -> Self {
        Self {
            jump_times: self.jump_times.iter().map(|t| t * factor).collect(),
            jump_sizes: self.jump_sizes.clone(),
            cumulative: self.cumulative.clone(),
        }
    }
}

fn running_sum(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// Immutable collection of subjects with a shared follow-up horizon.
#[derive(Debug, Clone)]
pub struct Cohort {
    subjects: Vec<Subject>,
    tau: f64,
    mediator_kind: MediatorKind,
    grid: EventGrid,
}

/// The grid is derived from the other fields, so it is not compared.
impl PartialEq for Cohort {
    fn eq(&self, other: &Self) -> bool {
        self.tau == other.tau && self.mediator_kind == other.mediator_kind && self.subjects == other.subjects
    }
}

impl Cohort {
    pub fn new(
        subjects: Vec<Subject>,
        tau: f64,
        mediator_kind: MediatorKind,
    ) -> Result<Self, DataError> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(DataError::InvalidHorizon(tau));
        }
        if subjects.is_empty() {
            return Err(DataError::Empty);
        }
        let p = subjects[0].confounders.len();
        if let Some(s) = subjects.iter().find(|s| s.confounders.len() != p) {
            return Err(DataError::ConfounderDimension {
                id: s.id.clone(),
                expected: p,
                found: s.confounders.len(),
            });
        }
        if mediator_kind == MediatorKind::Binary {
            if let Some(s) = subjects.iter().find(|s| s.mediator != 0.0 && s.mediator != 1.0) {
                return Err(DataError::NonBinaryMediator { id: s.id.clone(), value: s.mediator });
            }
        }
        let grid = EventGrid::build(&subjects, tau);
        Ok(Self { subjects, tau, mediator_kind, grid })
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn mediator_kind(&self) -> MediatorKind {
        self.mediator_kind
    }

    /// Number of confounders `p`.
    pub fn confounder_dim(&self) -> usize {
        self.subjects[0].confounders.len()
    }

    pub fn grid(&self) -> &EventGrid {
        &self.grid
    }

    /// Sorted unique union of observed event times.
    pub fn pooled_event_grid(&self) -> &[f64] {
        &self.grid.times
    }

    /// Cohort built from `indices` into this one (duplicates allowed).
    pub fn resample(&self, indices: &[usize]) -> Result<Self, DataError> {
        let subjects = indices.iter().map(|&i| self.subjects[i].clone()).collect();
        Self::new(subjects, self.tau, self.mediator_kind)
    }

    /// Same cohort with a different horizon.
    pub fn with_tau(&self, tau: f64) -> Result<Self, DataError> {
        Self::new(self.subjects.clone(), tau, self.mediator_kind)
    }

    pub fn total_observed_events(&self) -> usize {
        self.grid.event_subjects.len()
    }
}

/// Pooled event grid plus the per-subject indexing the estimators need.
///
/// Subject `i` is at risk at grid point `k` iff `k < exit_index[i]`, and
/// `events` lists every observed event as `(grid index, subject)`, sorted
/// by grid index.
#[derive(Debug, Clone, Default)]
pub struct EventGrid {
    times: Vec<f64>,
    exit_index: Vec<usize>,
    event_offsets: Vec<usize>,
    event_subjects: Vec<usize>,
}

impl EventGrid {
    fn build(subjects: &[Subject], tau: f64) -> Self {
        let mut raw: Vec<(f64, usize)> = subjects
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.observed_events(tau).iter().map(move |&t| (t, i)))
            .collect();
        raw.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut times = Vec::new();
        let mut event_offsets = vec![0];
        let mut event_subjects = Vec::with_capacity(raw.len());
        for (t, i) in raw {
            if times.last() != Some(&t) {
                if !times.is_empty() {
                    event_offsets.push(event_subjects.len());
                }
                times.push(t);
            }
            event_subjects.push(i);
        }
        event_offsets.push(event_subjects.len());
        if times.is_empty() {
            event_offsets = vec![0];
        }

        let exit_index = subjects
            .iter()
            .map(|s| {
                let end = s.exit_time(tau);
                times.partition_point(|&t| t <= end)
            })
            .collect();
        Self { times, exit_index, event_offsets, event_subjects }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// One past the last grid index at which subject `i` is at risk.
    pub fn exit_index(&self, i: usize) -> usize {
        self.exit_index[i]
    }

    /// Subjects with an event at grid point `k`, one entry per event.
    pub fn events_at(&self, k: usize) -> &[usize] {
        &self.event_subjects[self.event_offsets[k]..self.event_offsets[k + 1]]
    }

    /// Pooled jump `sum_i dN_i(t_k)`.
    pub fn event_count(&self, k: usize) -> f64 {
        (self.event_offsets[k + 1] - self.event_offsets[k]) as f64
    }

    /// `S(k) = sum_{i at risk at t_k} weights[i]`, for every grid point.
    pub fn risk_sums(&self, weights: &[f64]) -> Vec<f64> {
        let g = self.times.len();
        let mut bucket = vec![0.0; g + 1];
        for (&w, &e) in weights.iter().zip(&self.exit_index) {
            bucket[e] += w;
        }
        let mut out = vec![0.0; g];
        let mut acc = 0.0;
        for k in (0..g).rev() {
            acc += bucket[k + 1];
            out[k] = acc;
        }
        out
    }
}
