//! Data-generating processes and the Monte-Carlo harness.
//!
//! The default process: `C1 ~ N(0, 1)`, `C2 ~ Bernoulli(0.6)`,
//! `A ~ Bernoulli(expit(1 + C1 - 2 C2))`, `M ~ N(3 - A - C1 + 1.5 C2, 2)`
//! and, given `(A, M, C)`, a homogeneous Poisson process on `[0, tau]` with
//! rate `zeta * 0.05 * exp(A + 0.1 M + 0.2 C1 - 0.22 C2)`. Any process with
//! that mean function satisfies the outcome model; the Poisson process is
//! the simplest one.
//!
//! Replicate `r` of a run seeded with `seed` derives its own seeds from a
//! ChaCha stream keyed by `(seed, r)`; results never depend on scheduling.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Cohort, MediatorKind, Subject};
use crate::error::{FitError, SimulationError};
use crate::estimators::{estimate_effects, EffectEstimates, EstimatorOptions, Method};
use crate::fit::{expit, fit_exposure, fit_models, FittedModels, MediatorModel};
use crate::inference::{bootstrap_effects, BootstrapSpec};

/// 20th, 40th, 60th and 80th percentiles of a 24-month follow-up.
pub const STANDARD_TIMEPOINTS: [f64; 4] = [4.8, 9.6, 14.4, 19.2];

/// Share of replications allowed to fail before a run is abandoned.
pub const MAX_FAILURE_SHARE: f64 = 0.2;

const CALIBRATION_PILOT: usize = 100_000;
const CALIBRATION_SEED: u64 = 0x5eed_ca1b;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ConfounderDist {
    Normal { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
}

impl ConfounderDist {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Normal { mean, sd } => Normal::new(mean, sd).expect("validated sd").sample(rng),
            Self::Bernoulli { p } => f64::from(u8::from(rng.random_bool(p))),
        }
    }

    /// `E exp(k C)`.
    pub fn mgf(&self, k: f64) -> f64 {
        match *self {
            Self::Normal { mean, sd } => (k * mean + 0.5 * k * k * sd * sd).exp(),
            Self::Bernoulli { p } => 1.0 - p + p * k.exp(),
        }
    }

    fn validate(&self) -> Result<(), SimulationError> {
        let ok = match *self {
            Self::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd >= 0.0,
            Self::Bernoulli { p } => (0.0..=1.0).contains(&p),
        };
        if ok {
            Ok(())
        } else {
            Err(SimulationError::InvalidScenario(format!("bad confounder law {self:?}")))
        }
    }
}

/// Covariate that drives a dependent censoring time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CensorChannel {
    Exposure,
    Mediator,
    /// Index into the confounder vector.
    Confounder(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CensoringMechanism {
    /// Follow-up always reaches `tau`.
    None,
    /// `T^C ~ Uniform(0, upper)`.
    Uniform { upper: f64 },
    /// `T^C ~ Exponential(rate = exp(intercept + gamma * channel))`.
    Dependent { channel: CensorChannel, gamma: f64, intercept: f64 },
}

impl CensoringMechanism {
    /// Closed-form mean proportion of censored follow-up,
    /// `E[(tau - T^C) / tau * I(T^C < tau)]`. `None` for covariate-dependent
    /// censoring, which needs [`pc_monte_carlo`].
    pub fn pc_analytic(&self, tau: f64) -> Option<f64> {
        match *self {
            Self::None => Some(0.0),
            Self::Uniform { upper } if upper <= tau => Some((tau - upper / 2.0) / tau),
            Self::Uniform { upper } => Some(tau / (2.0 * upper)),
            Self::Dependent { .. } => None,
        }
    }
}

/// Which working models are corrupted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct MisspecSet {
    pub exposure: bool,
    pub mediator: bool,
    pub outcome: bool,
}

impl MisspecSet {
    pub const NONE: Self = Self { exposure: false, mediator: false, outcome: false };

    /// The four model sets: all correct, then the three "two out of three"
    /// sets named after the models that stay correct.
    pub const STANDARD_SETS: [Self; 4] = [
        Self::NONE,
        Self { exposure: false, mediator: true, outcome: false },
        Self { exposure: false, mediator: false, outcome: true },
        Self { exposure: true, mediator: false, outcome: false },
    ];

    pub fn label(&self) -> String {
        match (self.exposure, self.mediator, self.outcome) {
            (false, false, false) => "mi".into(),
            (false, true, false) => "man".into(),
            (false, false, true) => "mam".into(),
            (true, false, false) => "mmn".into(),
            (e, m, o) => {
                let mut s = String::from("bad");
                for (flag, c) in [(e, 'a'), (m, 'm'), (o, 'n')] {
                    if flag {
                        s.push(c);
                    }
                }
                s
            }
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::STANDARD_SETS.into_iter().find(|s| s.label() == label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    pub mean: f64,
    pub sd: f64,
}

impl Noise {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Normal::new(self.mean, self.sd).expect("validated sd").sample(rng)
    }
}

/// Measurement errors added to fitted coefficients of a corrupted model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MisspecNoise {
    pub theta_a: Noise,
    pub theta_c1: Noise,
    pub theta_c2: Noise,
    pub beta_a: Noise,
    pub beta_m: Noise,
}

impl Default for MisspecNoise {
    fn default() -> Self {
        Self {
            theta_a: Noise { mean: -0.2, sd: 0.1 },
            theta_c1: Noise { mean: 0.8, sd: 0.1 },
            theta_c2: Noise { mean: 0.8, sd: 0.1 },
            beta_a: Noise { mean: -0.05, sd: 0.01 },
            beta_m: Noise { mean: 0.05, sd: 0.01 },
        }
    }
}

impl MisspecNoise {
    pub fn zero() -> Self {
        let z = Noise { mean: 0.0, sd: 0.0 };
        Self { theta_a: z, theta_c1: z, theta_c2: z, beta_a: z, beta_m: z }
    }
}

/// A complete data-generating process plus analysis settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub n: usize,
    pub tau: f64,
    /// Multiplier on the event rate.
    pub zeta: f64,
    pub confounders: Vec<ConfounderDist>,
    /// `(alpha_0, alpha_C...)` of the exposure model.
    pub alpha: Vec<f64>,
    pub mediator_kind: MediatorKind,
    /// `(theta_0, theta_A, theta_C...)`
    pub theta: Vec<f64>,
    /// Residual variance of a Gaussian mediator.
    pub sigma2: f64,
    /// `(beta_A, beta_M, beta_C...)`
    pub beta: Vec<f64>,
    /// `Lambda_0(t) = baseline_rate * t`.
    pub baseline_rate: f64,
    pub censoring: CensoringMechanism,
    pub misspec: MisspecSet,
    pub noise: MisspecNoise,
    pub timepoints: Vec<f64>,
}

impl Scenario {
    /// The standard simulation setting with `n = 1000` and no censoring.
    pub fn standard() -> Self {
        Self {
            name: "standard".into(),
            n: 1000,
            tau: 24.0,
            zeta: 1.0,
            confounders: vec![
                ConfounderDist::Normal { mean: 0.0, sd: 1.0 },
                ConfounderDist::Bernoulli { p: 0.6 },
            ],
            alpha: vec![1.0, 1.0, -2.0],
            mediator_kind: MediatorKind::ContinuousGaussian,
            theta: vec![3.0, -1.0, -1.0, 1.5],
            sigma2: 2.0,
            beta: vec![1.0, 0.1, 0.2, -0.22],
            baseline_rate: 0.05,
            censoring: CensoringMechanism::None,
            misspec: MisspecSet::NONE,
            noise: MisspecNoise::default(),
            timepoints: STANDARD_TIMEPOINTS.to_vec(),
        }
    }

    /// A cohort shaped like the diabetes-drug example: confounders
    /// (sex, age, bmi, cvd_history), eGFR as mediator, months as time unit.
    pub fn golden_fixture() -> Self {
        Self {
            name: "appendix5-golden".into(),
            n: 843,
            tau: 36.0,
            zeta: 1.0,
            confounders: vec![
                ConfounderDist::Bernoulli { p: 0.45 },
                ConfounderDist::Normal { mean: 63.0, sd: 10.0 },
                ConfounderDist::Normal { mean: 26.0, sd: 4.5 },
                ConfounderDist::Bernoulli { p: 0.3 },
            ],
            alpha: vec![3.058, -0.311, -0.032, -0.080, 0.0],
            mediator_kind: MediatorKind::ContinuousGaussian,
            theta: vec![205.324, -9.275, -16.608, -1.472, -0.323, 0.936],
            sigma2: 38.0 * 38.0,
            beta: vec![-0.501, -0.019, 0.224, 0.001, -0.021, 0.783],
            // 0.0734 events per person-year on average
            baseline_rate: 0.031_77,
            censoring: CensoringMechanism::Uniform { upper: 72.0 },
            misspec: MisspecSet::NONE,
            noise: MisspecNoise::default(),
            timepoints: vec![12.0, 24.0, 36.0],
        }
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_misspec(mut self, set: MisspecSet) -> Self {
        self.misspec = set;
        self
    }

    pub fn with_censoring(mut self, censoring: CensoringMechanism) -> Self {
        self.censoring = censoring;
        self
    }

    /// Looks up a named preset.
    pub fn preset(name: &str) -> Result<Self, SimulationError> {
        let unknown = || SimulationError::UnknownScenario(name.to_string());
        let named = |mut s: Scenario| {
            s.name = name.to_string();
            s
        };
        if name == "standard" {
            return Ok(Self::standard());
        }
        if name == "appendix5-golden" {
            return Ok(Self::golden_fixture());
        }
        let parts: Vec<&str> = name.split('-').collect();
        match parts.as_slice() {
            ["exp1", set] => {
                let set = MisspecSet::from_label(set).ok_or_else(unknown)?;
                Ok(named(Self::standard().with_misspec(set)))
            }
            ["exp2", z, n] => {
                let zeta: f64 = z.strip_prefix('z').and_then(|v| v.parse().ok()).ok_or_else(unknown)?;
                let n: usize = n.strip_prefix('n').and_then(|v| v.parse().ok()).ok_or_else(unknown)?;
                if ![1.0, 2.0, 3.0].contains(&zeta) || ![200, 500, 1000].contains(&n) {
                    return Err(unknown());
                }
                let mut s = Self::standard().with_n(n);
                s.zeta = zeta;
                Ok(named(s))
            }
            ["exp3", pc] => {
                let censoring = match *pc {
                    "pc0" => CensoringMechanism::None,
                    "pc15" => CensoringMechanism::Uniform { upper: 80.0 },
                    "pc30" => CensoringMechanism::Uniform { upper: 40.0 },
                    "pc50" => CensoringMechanism::Uniform { upper: 24.0 },
                    _ => return Err(unknown()),
                };
                Ok(named(Self::standard().with_censoring(censoring)))
            }
            ["exp4", channel] | ["exp4", channel, _] => {
                let set = match parts.get(2) {
                    Some(l) => MisspecSet::from_label(l).ok_or_else(unknown)?,
                    None => MisspecSet::NONE,
                };
                let (channel, gamma) = match *channel {
                    "exposure" => (CensorChannel::Exposure, 1.0),
                    "mediator" => (CensorChannel::Mediator, 0.5),
                    "confounder" => (CensorChannel::Confounder(0), 1.0),
                    _ => return Err(unknown()),
                };
                let base = Self::standard().with_n(3000);
                let intercept = calibrate_dependent_censoring(&base, channel, gamma, 0.3)?;
                let s = base
                    .with_censoring(CensoringMechanism::Dependent { channel, gamma, intercept })
                    .with_misspec(set);
                Ok(named(s))
            }
            _ => Err(unknown()),
        }
    }

    /// Preset names making up an experiment, in report order.
    pub fn experiment_presets(id: u8) -> Result<Vec<String>, SimulationError> {
        let sets = MisspecSet::STANDARD_SETS.map(|s| s.label());
        Ok(match id {
            1 => sets.iter().map(|s| format!("exp1-{s}")).collect(),
            2 => [1, 2, 3]
                .iter()
                .flat_map(|z| [200, 500, 1000].map(move |n| format!("exp2-z{z}-n{n}")))
                .collect(),
            3 => ["pc0", "pc15", "pc30", "pc50"].iter().map(|p| format!("exp3-{p}")).collect(),
            4 => ["exposure", "mediator", "confounder"]
                .iter()
                .flat_map(|c| sets.iter().map(move |s| format!("exp4-{c}-{s}")))
                .collect(),
            other => return Err(SimulationError::UnknownExperiment(other)),
        })
    }

    /// Every addressable preset name.
    pub fn preset_names() -> Vec<String> {
        let mut names = vec!["standard".to_string(), "appendix5-golden".to_string()];
        for id in 1..=4 {
            names.extend(Self::experiment_presets(id).expect("known experiment"));
        }
        names.extend(["exp4-exposure", "exp4-mediator", "exp4-confounder"].map(String::from));
        names
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        let p = self.confounders.len();
        let bad = |msg: String| Err(SimulationError::InvalidScenario(msg));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.zeta > 0.0 && self.zeta.is_finite()) {
            return bad(format!("zeta must be positive, got {}", self.zeta));
        }
        if !(self.baseline_rate >= 0.0 && self.baseline_rate.is_finite()) {
            return bad(format!("baseline rate must be nonnegative, got {}", self.baseline_rate));
        }
        if self.alpha.len() != 1 + p || self.theta.len() != 2 + p || self.beta.len() != 2 + p {
            return bad(format!("coefficient lengths do not match {p} confounders"));
        }
        if self.mediator_kind == MediatorKind::ContinuousGaussian && !(self.sigma2 > 0.0) {
            return bad(format!("sigma2 must be positive, got {}", self.sigma2));
        }
        if let CensoringMechanism::Uniform { upper } = self.censoring {
            if !(upper > 0.0) {
                return bad(format!("uniform censoring bound must be positive, got {upper}"));
            }
        }
        if let CensoringMechanism::Dependent { channel: CensorChannel::Confounder(j), .. } = self.censoring {
            if j >= p {
                return bad(format!("censoring channel refers to confounder {j} of {p}"));
            }
        }
        let n = &self.noise;
        if [n.theta_a, n.theta_c1, n.theta_c2, n.beta_a, n.beta_m].iter().any(|z| !(z.sd >= 0.0)) {
            return bad("noise standard deviations must be nonnegative".into());
        }
        self.confounders.iter().try_for_each(ConfounderDist::validate)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Covariates {
    c: Vec<f64>,
    a: bool,
    m: f64,
}

fn draw_covariates<R: Rng + ?Sized>(s: &Scenario, rng: &mut R) -> Covariates {
    let c: Vec<f64> = s.confounders.iter().map(|d| d.sample(rng)).collect();
    let a = rng.random_bool(expit(s.alpha[0] + dot(&s.alpha[1..], &c)));
    let af = f64::from(u8::from(a));
    let mu = s.theta[0] + s.theta[1] * af + dot(&s.theta[2..], &c);
    let m = match s.mediator_kind {
        MediatorKind::ContinuousGaussian => mu + s.sigma2.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal),
        MediatorKind::Binary => f64::from(u8::from(rng.random_bool(expit(mu)))),
    };
    Covariates { c, a, m }
}

fn channel_value(channel: CensorChannel, x: &Covariates) -> f64 {
    match channel {
        CensorChannel::Exposure => f64::from(u8::from(x.a)),
        CensorChannel::Mediator => x.m,
        CensorChannel::Confounder(j) => x.c[j],
    }
}

/// Draws a cohort. Deterministic in `(scenario, seed)`.
pub fn generate_cohort(scenario: &Scenario, seed: u64) -> Result<Cohort, SimulationError> {
    scenario.validate()?;
    let s = scenario;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = s.n.to_string().len();
    let mut subjects = Vec::with_capacity(s.n);
    for i in 0..s.n {
        let x = draw_covariates(s, &mut rng);
        let af = f64::from(u8::from(x.a));
        let rate = s.zeta * s.baseline_rate * (s.beta[0] * af + s.beta[1] * x.m + dot(&s.beta[2..], &x.c)).exp();
        let mean = rate * s.tau;
        let k = if mean > 0.0 {
            Poisson::new(mean)
                .map_err(|e| SimulationError::InvalidScenario(format!("event rate {mean}: {e}")))?
                .sample(&mut rng) as usize
        } else {
            0
        };
        let events: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * s.tau).collect();
        let censor = match s.censoring {
            CensoringMechanism::None => s.tau,
            CensoringMechanism::Uniform { upper } => rng.random::<f64>() * upper,
            CensoringMechanism::Dependent { channel, gamma, intercept } => {
                let r = (intercept + gamma * channel_value(channel, &x)).exp();
                Exp::new(r)
                    .map_err(|e| SimulationError::InvalidScenario(format!("censoring rate {r}: {e}")))?
                    .sample(&mut rng)
            }
        };
        subjects.push(Subject::new(format!("s{i:0width$}"), events, censor, x.a, x.m, x.c)?);
    }
    Ok(Cohort::new(subjects, s.tau, s.mediator_kind)?)
}

/// Intercept `lambda_0` such that a fraction `target` of subjects is
/// censored before `tau` under `T^C ~ Exp(exp(lambda_0 + gamma * channel))`.
/// Solved by bisection on a fixed pilot sample.
pub fn calibrate_dependent_censoring(
    scenario: &Scenario,
    channel: CensorChannel,
    gamma: f64,
    target: f64,
) -> Result<f64, SimulationError> {
    scenario.validate()?;
    if !(target > 0.0 && target < 1.0) {
        return Err(SimulationError::InvalidScenario(format!("censoring target {target} outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(CALIBRATION_SEED);
    let values: Vec<f64> = (0..CALIBRATION_PILOT)
        .map(|_| gamma * channel_value(channel, &draw_covariates(scenario, &mut rng)))
        .collect();
    let tau = scenario.tau;
    let fraction = |l: f64| {
        values.iter().map(|v| -(-tau * (l + v).exp()).exp_m1()).sum::<f64>() / values.len() as f64
    };
    let (mut lo, mut hi) = (-40.0, 10.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if fraction(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Empirical mean proportion of censored follow-up and its Monte-Carlo
/// standard error.
pub fn pc_empirical(cohort: &Cohort) -> (f64, f64) {
    let tau = cohort.tau();
    let v: Vec<f64> = cohort
        .subjects()
        .iter()
        .map(|s| if s.censor_time < tau { (tau - s.censor_time) / tau } else { 0.0 })
        .collect();
    mean_and_se(&v)
}

/// Monte-Carlo PC for any mechanism (only the censoring times are drawn
/// with their covariates; no events).
pub fn pc_monte_carlo(scenario: &Scenario, draws: usize, seed: u64) -> Result<(f64, f64), SimulationError> {
    let mut s = scenario.clone();
    s.n = draws;
    s.zeta = f64::MIN_POSITIVE;
    Ok(pc_empirical(&generate_cohort(&s, seed)?))
}

/// Analytic PC where available, otherwise Monte Carlo with `10^5` draws.
/// The second value is the Monte-Carlo standard error (0 if analytic).
pub fn pc_value(scenario: &Scenario) -> Result<(f64, f64), SimulationError> {
    match scenario.censoring.pc_analytic(scenario.tau) {
        Some(v) => Ok((v, 0.0)),
        None => pc_monte_carlo(scenario, 100_000, CALIBRATION_SEED),
    }
}

/// Mean number of observed events per subject.
pub fn mean_occurrences(cohort: &Cohort) -> f64 {
    cohort.total_observed_events() as f64 / cohort.len() as f64
}

/// Corrupts the fits of the models flagged in `set`.
///
/// Exposure: refit with an extra standardized-mediator column. Mediator:
/// `theta_A`, `theta_C1`, `theta_C2` shifted by draws from `noise`. Outcome:
/// `beta_A`, `beta_M` shifted likewise. All five draws are always taken, in
/// that order, so the corruption of one model does not depend on which
/// others are corrupted.
pub fn inject_misspecification(
    cohort: &Cohort,
    fits: &FittedModels,
    set: MisspecSet,
    noise: &MisspecNoise,
    seed: u64,
) -> Result<FittedModels, FitError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = [
        noise.theta_a.draw(&mut rng),
        noise.theta_c1.draw(&mut rng),
        noise.theta_c2.draw(&mut rng),
        noise.beta_a.draw(&mut rng),
        noise.beta_m.draw(&mut rng),
    ];
    let mut out = fits.clone();
    if set.exposure {
        out.exposure = fit_exposure(cohort, true)?;
    }
    if set.mediator {
        let theta = out.mediator.coefficients_mut();
        theta[1] += u[0];
        for (j, shift) in [u[1], u[2]].into_iter().enumerate() {
            if let Some(t) = theta.get_mut(2 + j) {
                *t += shift;
            }
        }
    }
    if set.outcome {
        out.outcome.beta[0] += u[3];
        out.outcome.beta[1] += u[4];
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub time: f64,
    pub q10: f64,
    pub q00: f64,
    pub q11: f64,
    pub nde: f64,
    pub nie: f64,
    pub te: f64,
}

/// Population `Q(t; a, a*)` in closed form (Gaussian mediator only).
pub fn population_q(scenario: &Scenario, t: f64, a: bool, a_star: bool) -> Result<f64, SimulationError> {
    if scenario.mediator_kind != MediatorKind::ContinuousGaussian {
        return Err(SimulationError::UnsupportedScenario);
    }
    let s = scenario;
    let (ba, bm) = (s.beta[0], s.beta[1]);
    let (a, a_star) = (f64::from(u8::from(a)), f64::from(u8::from(a_star)));
    let constant = (ba * a + bm * (s.theta[0] + s.theta[1] * a_star) + 0.5 * bm * bm * s.sigma2).exp();
    let confounders: f64 = s
        .confounders
        .iter()
        .enumerate()
        .map(|(j, d)| d.mgf(s.beta[2 + j] + bm * s.theta[2 + j]))
        .product();
    Ok(s.zeta * s.baseline_rate * t * constant * confounders)
}

pub fn population_truth(scenario: &Scenario, timepoints: &[f64]) -> Result<Vec<TruthRow>, SimulationError> {
    timepoints
        .iter()
        .map(|&time| {
            let q10 = population_q(scenario, time, true, false)?;
            let q00 = population_q(scenario, time, false, false)?;
            let q11 = population_q(scenario, time, true, true)?;
            Ok(TruthRow { time, q10, q00, q11, nde: q10 - q00, nie: q11 - q10, te: q11 - q00 })
        })
        .collect()
}

/// Compensated (Neumaier) summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Mean and standard error of the mean (sample SD over `sqrt(n)`).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let (mean, sd) = mean_and_sd(values);
    (mean, sd / (values.len() as f64).sqrt())
}

/// Mean and sample standard deviation (`n - 1` divisor; 0 when `n < 2`).
pub fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mut s = NeumaierSum::default();
    values.iter().for_each(|&v| s.add(v));
    let mean = s.total() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let mut ss = NeumaierSum::default();
    values.iter().for_each(|&v| ss.add((v - mean) * (v - mean)));
    (mean, (ss.total() / (n - 1.0)).sqrt())
}

/// Seeds for replicate `r`: `(cohort, injection, bootstrap)`.
pub fn replicate_seeds(seed: u64, replicate: usize) -> [u64; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    [rng.next_u64(), rng.next_u64(), rng.next_u64()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Effect {
    Nde,
    Nie,
    Te,
}

impl Effect {
    pub const ALL: [Effect; 3] = [Effect::Nde, Effect::Nie, Effect::Te];

    pub fn as_str(self) -> &'static str {
        match self {
            Effect::Nde => "nde",
            Effect::Nie => "nie",
            Effect::Te => "te",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: String,
    pub model_set: String,
    pub method: Method,
    pub effect: Effect,
    pub time: f64,
    pub truth: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    /// Standard deviation of the estimates across replications.
    pub ese: f64,
    /// Monte-Carlo standard error of `bias`, `ese / sqrt(R)`.
    pub mc_se: f64,
    pub replications: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: Option<u8>,
    pub seed: u64,
    pub requested_replications: usize,
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn row(&self, scenario: &str, method: Method, effect: Effect, time: f64) -> Option<&ReportRow> {
        self.rows.iter().find(|r| {
            r.scenario == scenario && r.method == method && r.effect == effect && (r.time - time).abs() < 1e-9
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOverrides {
    pub reps: Option<usize>,
    pub n: Option<usize>,
    /// Keep only presets whose name starts with this.
    pub scenario: Option<String>,
    pub methods: Option<Vec<Method>>,
}

pub const DEFAULT_REPLICATIONS: usize = 1000;

/// Runs one of the four simulation experiments.
pub fn run_experiment(id: u8, overrides: &ExperimentOverrides, seed: u64) -> Result<ExperimentReport, SimulationError> {
    let mut scenarios = Vec::new();
    for name in Scenario::experiment_presets(id)? {
        if overrides.scenario.as_deref().is_some_and(|p| !name.starts_with(p)) {
            continue;
        }
        let mut s = Scenario::preset(&name)?;
        if let Some(n) = overrides.n {
            s.n = n;
        }
        scenarios.push(s);
    }
    if scenarios.is_empty() {
        return Err(SimulationError::UnknownScenario(overrides.scenario.clone().unwrap_or_default()));
    }
    let methods = overrides
        .methods
        .clone()
        .unwrap_or_else(|| if id == 1 { Method::ALL.to_vec() } else { vec![Method::Tr] });
    let mut report = run_scenarios(&scenarios, overrides.reps.unwrap_or(DEFAULT_REPLICATIONS), seed, &methods)?;
    report.experiment = Some(id);
    Ok(report)
}

/// Runs each scenario for `reps` replications. Scenarios that differ only
/// in their misspecification set share cohorts and base fits.
pub fn run_scenarios(
    scenarios: &[Scenario],
    reps: usize,
    seed: u64,
    methods: &[Method],
) -> Result<ExperimentReport, SimulationError> {
    if reps == 0 {
        return Err(SimulationError::InvalidScenario("at least one replication is needed".into()));
    }
    let mut rows = Vec::new();
    let mut start = 0;
    while start < scenarios.len() {
        let key = dgp_key(&scenarios[start]);
        let mut end = start + 1;
        while end < scenarios.len() && dgp_key(&scenarios[end]) == key {
            end += 1;
        }
        rows.extend(run_group(&scenarios[start..end], reps, seed, methods)?);
        start = end;
    }
    Ok(ExperimentReport { experiment: None, seed, requested_replications: reps, rows })
}

fn dgp_key(s: &Scenario) -> Scenario {
    let mut k = s.clone();
    k.name.clear();
    k.misspec = MisspecSet::NONE;
    k
}

type SetOutcome = Option<Vec<EffectEstimates>>;

fn run_group(
    group: &[Scenario],
    reps: usize,
    seed: u64,
    methods: &[Method],
) -> Result<Vec<ReportRow>, SimulationError> {
    let base = &group[0];
    base.validate()?;
    let truth = population_truth(base, &base.timepoints)?;
    let options = EstimatorOptions::default();

    let one = |r: usize| -> Vec<SetOutcome> {
        let [cohort_seed, inject_seed, _] = replicate_seeds(seed, r);
        let Ok(cohort) = generate_cohort(base, cohort_seed) else {
            return vec![None; group.len()];
        };
        let Ok(fits) = fit_models(&cohort) else {
            return vec![None; group.len()];
        };
        group
            .iter()
            .map(|s| {
                let f = inject_misspecification(&cohort, &fits, s.misspec, &s.noise, inject_seed).ok()?;
                methods
                    .iter()
                    .map(|&m| estimate_effects(m, &f, &cohort, &s.timepoints, &options).ok())
                    .collect()
            })
            .collect()
    };
    let results: Vec<Vec<SetOutcome>> = (0..reps).into_par_iter().map(one).collect();

    let mut rows = Vec::new();
    for (g, s) in group.iter().enumerate() {
        let ok: Vec<&Vec<EffectEstimates>> = results.iter().filter_map(|r| r[g].as_ref()).collect();
        let failed = reps - ok.len();
        if failed as f64 > MAX_FAILURE_SHARE * reps as f64 || ok.is_empty() {
            return Err(SimulationError::TooManyFailures { failed, replications: reps });
        }
        for (mi, &method) in methods.iter().enumerate() {
            for effect in Effect::ALL {
                for (k, tr) in truth.iter().enumerate() {
                    let values: Vec<f64> = ok
                        .iter()
                        .map(|e| {
                            let row = &e[mi].rows[k];
                            match effect {
                                Effect::Nde => row.nde,
                                Effect::Nie => row.nie,
                                Effect::Te => row.te,
                            }
                        })
                        .collect();
                    let truth = match effect {
                        Effect::Nde => tr.nde,
                        Effect::Nie => tr.nie,
                        Effect::Te => tr.te,
                    };
                    let (mean, ese) = mean_and_sd(&values);
                    rows.push(ReportRow {
                        scenario: s.name.clone(),
                        model_set: s.misspec.label(),
                        method,
                        effect,
                        time: tr.time,
                        truth,
                        mean_estimate: mean,
                        bias: mean - truth,
                        ese,
                        mc_se: ese / (values.len() as f64).sqrt(),
                        replications: values.len(),
                        failed,
                    });
                }
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub parameter: String,
    pub truth: f64,
    pub mean: f64,
    /// Standard deviation of the estimates across replications.
    pub ese: f64,
    pub replications: usize,
}

impl RecoveryRow {
    /// `|mean - truth|` in units of the Monte-Carlo standard error of the mean.
    pub fn z_mean(&self) -> f64 {
        (self.mean - self.truth).abs() / (self.ese / (self.replications as f64).sqrt())
    }

    /// `|mean - truth|` in units of the empirical standard error.
    pub fn z_single(&self) -> f64 {
        (self.mean - self.truth).abs() / self.ese
    }
}

/// Refits the three models on `reps` simulated cohorts and summarizes each
/// coefficient against the generating value.
pub fn parameter_recovery(scenario: &Scenario, reps: usize, seed: u64) -> Result<Vec<RecoveryRow>, SimulationError> {
    scenario.validate()?;
    let p = scenario.confounders.len();
    let mut names: Vec<String> = Vec::new();
    let mut truth: Vec<f64> = Vec::new();
    for (j, a) in scenario.alpha.iter().enumerate() {
        names.push(format!("alpha{j}"));
        truth.push(*a);
    }
    for (j, t) in scenario.theta.iter().enumerate() {
        names.push(format!("theta{j}"));
        truth.push(*t);
    }
    let gaussian = scenario.mediator_kind == MediatorKind::ContinuousGaussian;
    if gaussian {
        names.push("sigma2".into());
        truth.push(scenario.sigma2);
    }
    for (j, b) in scenario.beta.iter().enumerate() {
        names.push(format!("beta{j}"));
        truth.push(*b);
    }
    debug_assert_eq!(names.len(), 1 + p + 2 + p + usize::from(gaussian) + 2 + p);

    let draws: Vec<Option<Vec<f64>>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let [cohort_seed, ..] = replicate_seeds(seed, r);
            let cohort = generate_cohort(scenario, cohort_seed).ok()?;
            let fits = fit_models(&cohort).ok()?;
            let mut v = fits.exposure.fit.coefficients.clone();
            v.extend_from_slice(fits.mediator.coefficients());
            if let MediatorModel::Gaussian(g) = &fits.mediator {
                v.push(g.sigma2);
            }
            v.extend_from_slice(&fits.outcome.beta);
            Some(v)
        })
        .collect();
    let ok: Vec<&Vec<f64>> = draws.iter().flatten().collect();
    let failed = reps - ok.len();
    if failed as f64 > MAX_FAILURE_SHARE * reps as f64 || ok.len() < 2 {
        return Err(SimulationError::TooManyFailures { failed, replications: reps });
    }
    Ok(names
        .into_iter()
        .enumerate()
        .map(|(j, parameter)| {
            let values: Vec<f64> = ok.iter().map(|v| v[j]).collect();
            let (mean, ese) = mean_and_sd(&values);
            RecoveryRow { parameter, truth: truth[j], mean, ese, replications: values.len() }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub time: f64,
    pub level: f64,
    pub truth: TruthRow,
    pub covered_nde: usize,
    pub covered_nie: usize,
    pub covered_te: usize,
    pub replications: usize,
    pub failed: usize,
}

impl CoverageReport {
    pub fn nde_rate(&self) -> f64 {
        self.covered_nde as f64 / self.replications as f64
    }
}

/// Empirical coverage of bootstrap percentile intervals at one timepoint.
/// Each outer replication draws a cohort and runs a full bootstrap with
/// `template`'s settings and its own derived seed.
pub fn bootstrap_coverage(
    scenario: &Scenario,
    outer: usize,
    template: &BootstrapSpec,
    time: f64,
    seed: u64,
) -> Result<CoverageReport, SimulationError> {
    let truth = population_truth(scenario, &[time])?[0];
    let results: Vec<Option<[bool; 3]>> = (0..outer)
        .into_par_iter()
        .map(|r| {
            let [cohort_seed, _, boot_seed] = replicate_seeds(seed, r);
            let cohort = generate_cohort(scenario, cohort_seed).ok()?;
            let spec = BootstrapSpec { seed: boot_seed, ..template.clone() };
            let est = bootstrap_effects(&cohort, &spec, &[time]).ok()?;
            let row = &est.rows[0];
            Some([row.nde.contains(truth.nde), row.nie.contains(truth.nie), row.te.contains(truth.te)])
        })
        .collect();
    let ok: Vec<[bool; 3]> = results.into_iter().flatten().collect();
    let failed = outer - ok.len();
    if failed as f64 > MAX_FAILURE_SHARE * outer as f64 || ok.is_empty() {
        return Err(SimulationError::TooManyFailures { failed, replications: outer });
    }
    let count = |k: usize| ok.iter().filter(|c| c[k]).count();
    Ok(CoverageReport {
        time,
        level: template.level,
        truth,
        covered_nde: count(0),
        covered_nie: count(1),
        covered_te: count(2),
        replications: ok.len(),
        failed,
    })
}
