//! Estimators of the mediation parameter `Q(t; a, a*)`, the expected
//! number of events by `t` with exposure set to `a` and the mediator set
//! to its distribution under `a*`.
//!
//! * RB: plug-in of the outcome and mediator models, averaging over the
//!   empirical confounder distribution.
//! * IPW: exposure weights times a mediator density ratio applied to the
//!   observed counting processes.
//! * PSW: exposure weights applied to the outcome-model increments.
//! * TR: the combination of all three; consistent when any two of the
//!   three working models are correct.
//!
//! All integrals over `u` are sums over the pooled event grid of the
//! cohort (merged with the baseline jump times when those differ), since
//! both `dN_i` and `dLambda_0` are purely atomic there.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Cohort, Subject};
use crate::error::EstimateError;
use crate::fit::{expit, mediator_row, FittedModels, MediatorModel, ProportionalMeanFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rb,
    Ipw,
    Psw,
    Tr,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Rb, Method::Ipw, Method::Psw, Method::Tr];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rb => "rb",
            Method::Ipw => "ipw",
            Method::Psw => "psw",
            Method::Tr => "tr",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rb" => Ok(Method::Rb),
            "ipw" => Ok(Method::Ipw),
            "psw" => Ok(Method::Psw),
            "tr" => Ok(Method::Tr),
            other => Err(format!("unknown method `{other}` (expected rb, ipw, psw or tr)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EstimatorOptions {
    /// Propensities are clipped to `[eps, 1 - eps]`; 0 disables clipping.
    pub clip_propensity: f64,
}

/// A grid time at which nobody in an exposure arm was at risk. The
/// weighted terms for that arm contribute 0 there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmptyRiskArm {
    pub time: f64,
    pub arm: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectWeights {
    pub propensity: Vec<f64>,
    /// `A / e + (1 - A) / (1 - e)`
    pub ipw: Vec<f64>,
}

impl SubjectWeights {
    pub fn compute(fits: &FittedModels, cohort: &Cohort, clip: f64) -> Self {
        let (propensity, ipw) = cohort
            .subjects()
            .iter()
            .map(|s| {
                let mut e = fits.exposure.propensity(s);
                if clip > 0.0 {
                    e = e.clamp(clip, 1.0 - clip);
                }
                let w = if s.exposed { 1.0 / e } else { 1.0 / (1.0 - e) };
                (e, w)
            })
            .unzip();
        Self { propensity, ipw }
    }
}

fn arm(a: bool) -> f64 {
    if a {
        1.0
    } else {
        0.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `f(M | a*, C) / f(M | a, C)` under the fitted mediator model.
pub fn density_ratio(mediator: &MediatorModel, subject: &Subject, a: bool, a_star: bool) -> f64 {
    if a == a_star {
        return 1.0;
    }
    match mediator {
        MediatorModel::Gaussian(f) => {
            let theta = &f.coefficients;
            let (a, a_star) = (arm(a), arm(a_star));
            let resid = subject.mediator - theta[0] - dot(&theta[2..], &subject.confounders);
            let theta_a = theta[1];
            (-(theta_a * resid * (a - a_star) - 0.5 * theta_a * theta_a * (a * a - a_star * a_star))
                / f.sigma2)
                .exp()
        }
        MediatorModel::Binary(_) => {
            mediator.density(subject.mediator, arm(a_star), &subject.confounders)
                / mediator.density(subject.mediator, arm(a), &subject.confounders)
        }
    }
}

/// `exp(beta_A a + beta_C' c)`
fn exposure_confounder_factor(outcome: &ProportionalMeanFit, a: bool, c: &[f64]) -> f64 {
    (outcome.beta_a() * arm(a) + dot(outcome.beta_c(), c)).exp()
}

/// `E(exp(beta_M M) | a*, c)` under the fitted mediator model.
fn mediator_mgf(outcome: &ProportionalMeanFit, mediator: &MediatorModel, a_star: bool, c: &[f64]) -> f64 {
    let beta_m = outcome.beta_m();
    let row = mediator_row(arm(a_star), c);
    match mediator {
        MediatorModel::Gaussian(f) => (beta_m * f.mean(&row) + 0.5 * beta_m * beta_m * f.sigma2).exp(),
        MediatorModel::Binary(f) => {
            let p = f.prob(&row);
            1.0 - p + p * beta_m.exp()
        }
    }
}

/// `E(dN(u) | a, m, c) = dLambda_0(u) exp(beta_A a + beta_M m + beta_C' c)`
/// at the `u_index`-th baseline jump.
pub fn model_increment(outcome: &ProportionalMeanFit, u_index: usize, a: bool, m: f64, c: &[f64]) -> f64 {
    let d = outcome.baseline.jump_sizes()[u_index];
    if d == 0.0 {
        return 0.0;
    }
    d * (outcome.beta_m() * m).exp() * exposure_confounder_factor(outcome, a, c)
}

/// `dQ(u; a, a* | c)`: the outcome increment integrated over the fitted
/// mediator distribution under `a*`.
pub fn dq_conditional(
    outcome: &ProportionalMeanFit,
    mediator: &MediatorModel,
    u_index: usize,
    a: bool,
    a_star: bool,
    c: &[f64],
) -> f64 {
    let d = outcome.baseline.jump_sizes()[u_index];
    if d == 0.0 {
        return 0.0;
    }
    d * exposure_confounder_factor(outcome, a, c) * mediator_mgf(outcome, mediator, a_star, c)
}

/// Self-normalized weights `Z_i(u; a)` for every subject.
pub fn z_weights(cohort: &Cohort, weights: &SubjectWeights, u: f64, a: bool) -> Result<Vec<f64>, EstimateError> {
    let tau = cohort.tau();
    let raw: Vec<f64> = cohort
        .subjects()
        .iter()
        .zip(&weights.ipw)
        .map(|(s, &w)| if s.exposed == a && s.at_risk(u, tau) { w } else { 0.0 })
        .collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    if !(mean > 0.0) {
        return Err(EstimateError::EmptyRiskArm { time: u, arm: a as u8 });
    }
    Ok(raw.into_iter().map(|w| w / mean).collect())
}

/// `(nde, nie, te)` from `Q(t;1,0)`, `Q(t;0,0)` and `Q(t;1,1)`.
pub fn effects_from_q(q10: f64, q00: f64, q11: f64) -> (f64, f64, f64) {
    (q10 - q00, q11 - q10, q11 - q00)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediationQuery {
    pub timepoints: Vec<f64>,
    pub a: bool,
    pub a_star: bool,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QCurve {
    pub timepoints: Vec<f64>,
    pub values: Vec<f64>,
    pub warnings: Vec<EmptyRiskArm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    pub time: f64,
    pub q10: f64,
    pub q00: f64,
    pub q11: f64,
    pub nde: f64,
    pub nie: f64,
    pub te: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimates {
    pub method: Method,
    pub rows: Vec<EffectRow>,
    pub warnings: Vec<EmptyRiskArm>,
}

impl EffectEstimates {
    pub fn nde(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.nde).collect()
    }

    pub fn nie(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.nie).collect()
    }

    pub fn te(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.te).collect()
    }
}

fn check_timepoints(timepoints: &[f64], tau: f64) -> Result<(), EstimateError> {
    if let Some(&t) = timepoints.iter().find(|&&t| !(t > 0.0 && t <= tau)) {
        return Err(EstimateError::TimepointOutOfRange { t, tau });
    }
    if timepoints.windows(2).any(|w| w[0] > w[1]) {
        return Err(EstimateError::UnsortedTimepoints);
    }
    Ok(())
}

fn check_dimensions(fits: &FittedModels, cohort: &Cohort) -> Result<(), EstimateError> {
    let p = cohort.confounder_dim();
    let exp_len = 1 + p + usize::from(fits.exposure.scaled_mediator.is_some());
    if fits.exposure.fit.coefficients.len() != exp_len {
        return Err(EstimateError::ModelDimension(format!(
            "exposure model has {} coefficients, expected {exp_len}",
            fits.exposure.fit.coefficients.len()
        )));
    }
    if fits.mediator.coefficients().len() != 2 + p {
        return Err(EstimateError::ModelDimension(format!(
            "mediator model has {} coefficients, expected {}",
            fits.mediator.coefficients().len(),
            2 + p
        )));
    }
    if fits.outcome.beta.len() != 2 + p {
        return Err(EstimateError::ModelDimension(format!(
            "outcome model has {} coefficients, expected {}",
            fits.outcome.beta.len(),
            2 + p
        )));
    }
    Ok(())
}

/// Integration grid: cohort event times merged with baseline jump times.
struct Integrator {
    times: Vec<f64>,
    dlambda: Vec<f64>,
    /// Cohort grid index for each merged time that carries observed events.
    cohort_index: Vec<Option<usize>>,
    exit_index: Vec<usize>,
}

impl Integrator {
    fn new(cohort: &Cohort, outcome: &ProportionalMeanFit) -> Self {
        let grid = cohort.grid();
        let bt = outcome.baseline.jump_times();
        let bs = outcome.baseline.jump_sizes();
        let ct = grid.times();
        let (mut times, mut dlambda, mut cohort_index) = (Vec::new(), Vec::new(), Vec::new());
        let (mut i, mut j) = (0, 0);
        while i < ct.len() || j < bt.len() {
            let take_c = j == bt.len() || (i < ct.len() && ct[i] <= bt[j]);
            let take_b = i == ct.len() || (j < bt.len() && bt[j] <= ct[i]);
            let t = if take_c { ct[i] } else { bt[j] };
            times.push(t);
            cohort_index.push(take_c.then_some(i));
            dlambda.push(if take_b { bs[j] } else { 0.0 });
            if take_c {
                i += 1;
            }
            if take_b {
                j += 1;
            }
        }
        let tau = cohort.tau();
        let exit_index = cohort
            .subjects()
            .iter()
            .map(|s| {
                let end = s.exit_time(tau);
                times.partition_point(|&t| t <= end)
            })
            .collect();
        Self { times, dlambda, cohort_index, exit_index }
    }

    /// Risk-set sums of `weights` restricted to arm `a`.
    fn arm_risk_sums(&self, cohort: &Cohort, a: bool, weights: impl Fn(usize) -> f64) -> Vec<f64> {
        let g = self.times.len();
        let mut bucket = vec![0.0; g + 1];
        for (i, s) in cohort.subjects().iter().enumerate() {
            if s.exposed == a {
                bucket[self.exit_index[i]] += weights(i);
            }
        }
        let mut out = vec![0.0; g];
        let mut acc = 0.0;
        for k in (0..g).rev() {
            acc += bucket[k + 1];
            out[k] = acc;
        }
        out
    }

    /// Number of merged grid points at or before `t`.
    fn upto(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t)
    }
}

/// Per-subject quantities for one `(a, a*)` pair.
struct Pieces {
    /// `exp(beta_A a + beta_M M_i + beta_C' C_i)`
    g: Vec<f64>,
    /// `exp(beta_A a + beta_C' C_i) E(exp(beta_M M) | a*, C_i)`
    h: Vec<f64>,
    ratio: Vec<f64>,
}

impl Pieces {
    fn new(fits: &FittedModels, cohort: &Cohort, a: bool, a_star: bool) -> Self {
        let out = &fits.outcome;
        let mut g = Vec::with_capacity(cohort.len());
        let mut h = Vec::with_capacity(cohort.len());
        let mut ratio = Vec::with_capacity(cohort.len());
        for s in cohort.subjects() {
            let base = exposure_confounder_factor(out, a, &s.confounders);
            g.push(base * (out.beta_m() * s.mediator).exp());
            h.push(base * mediator_mgf(out, &fits.mediator, a_star, &s.confounders));
            ratio.push(density_ratio(&fits.mediator, s, a, a_star));
        }
        Self { g, h, ratio }
    }
}

/// `eta(t)` of the closed-form RB estimator for a Gaussian mediator:
/// `Lambda_0(t) * mean_i exp((theta_0 + theta_C' C_i) beta_M + beta_M^2 sigma^2 / 2 + beta_C' C_i)`.
pub fn eta_hat(fits: &FittedModels, cohort: &Cohort, t: f64) -> Option<f64> {
    let MediatorModel::Gaussian(med) = &fits.mediator else {
        return None;
    };
    let out = &fits.outcome;
    let (bm, theta) = (out.beta_m(), &med.coefficients);
    let mean = cohort
        .subjects()
        .iter()
        .map(|s| {
            let c = &s.confounders;
            ((theta[0] + dot(&theta[2..], c)) * bm
                + 0.5 * bm * bm * med.sigma2
                + dot(out.beta_c(), c))
            .exp()
        })
        .sum::<f64>()
        / cohort.len() as f64;
    Some(out.baseline.value(t) * mean)
}

fn rb_curve(fits: &FittedModels, cohort: &Cohort, a: bool, a_star: bool, timepoints: &[f64]) -> Vec<f64> {
    let out = &fits.outcome;
    match &fits.mediator {
        MediatorModel::Gaussian(med) => {
            let factor = (out.beta_a() * arm(a) + out.beta_m() * med.coefficients[1] * arm(a_star)).exp();
            timepoints.iter().map(|&t| eta_hat(fits, cohort, t).unwrap() * factor).collect()
        }
        MediatorModel::Binary(med) => {
            // mu_0(t) * mean_i exp(beta_A a + beta_C' c_i) (1 - p_i + p_i e^{beta_M})
            let mean = cohort
                .subjects()
                .iter()
                .map(|s| {
                    let p = expit(dot(&med.coefficients, &mediator_row(arm(a_star), &s.confounders)));
                    exposure_confounder_factor(out, a, &s.confounders) * (1.0 - p + p * out.beta_m().exp())
                })
                .sum::<f64>()
                / cohort.len() as f64;
            timepoints.iter().map(|&t| out.baseline.value(t) * mean).collect()
        }
    }
}

struct Context<'a> {
    fits: &'a FittedModels,
    cohort: &'a Cohort,
    weights: SubjectWeights,
    integrator: Integrator,
}

impl<'a> Context<'a> {
    fn new(fits: &'a FittedModels, cohort: &'a Cohort, options: &EstimatorOptions) -> Self {
        Self {
            fits,
            cohort,
            weights: SubjectWeights::compute(fits, cohort, options.clip_propensity),
            integrator: Integrator::new(cohort, &fits.outcome),
        }
    }

    fn curve(
        &self,
        method: Method,
        a: bool,
        a_star: bool,
        timepoints: &[f64],
        warnings: &mut BTreeSet<(u64, u8)>,
    ) -> Vec<f64> {
        if method == Method::Rb {
            return rb_curve(self.fits, self.cohort, a, a_star, timepoints);
        }
        let integ = &self.integrator;
        let last = timepoints.last().map_or(0, |&t| integ.upto(t));
        let pieces = Pieces::new(self.fits, self.cohort, a, a_star);
        let w = &self.weights.ipw;
        let mean_h = pieces.h.iter().sum::<f64>() / self.cohort.len() as f64;

        let uses_a = method != Method::Psw;
        let uses_a_star = method != Method::Ipw;
        let wa = uses_a.then(|| integ.arm_risk_sums(self.cohort, a, |i| w[i]));
        let wa_star = uses_a_star.then(|| integ.arm_risk_sums(self.cohort, a_star, |i| w[i]));
        let wrg = (method == Method::Tr)
            .then(|| integ.arm_risk_sums(self.cohort, a, |i| w[i] * pieces.ratio[i] * pieces.g[i]));
        let star_sum = match method {
            Method::Psw => Some(integ.arm_risk_sums(self.cohort, a_star, |i| w[i] * pieces.g[i])),
            Method::Tr => {
                Some(integ.arm_risk_sums(self.cohort, a_star, |i| w[i] * (pieces.g[i] - pieces.h[i])))
            }
            _ => None,
        };

        let grid = self.cohort.grid();
        let subjects = self.cohort.subjects();
        let mut increments = Vec::with_capacity(last);
        for j in 0..last {
            let dl = integ.dlambda[j];
            let mut inc = 0.0;
            if let Some(wa) = &wa {
                if wa[j] > 0.0 {
                    let mut observed = 0.0;
                    if let Some(k) = integ.cohort_index[j] {
                        for &i in grid.events_at(k) {
                            if subjects[i].exposed == a {
                                observed += w[i] * pieces.ratio[i];
                            }
                        }
                    }
                    let predicted = wrg.as_ref().map_or(0.0, |s| dl * s[j]);
                    inc += (observed - predicted) / wa[j];
                } else {
                    warnings.insert((integ.times[j].to_bits(), a as u8));
                }
            }
            if let (Some(ws), Some(ss)) = (&wa_star, &star_sum) {
                if ws[j] > 0.0 {
                    inc += dl * ss[j] / ws[j];
                } else if dl != 0.0 {
                    warnings.insert((integ.times[j].to_bits(), a_star as u8));
                }
            }
            if method == Method::Tr {
                inc += dl * mean_h;
            }
            increments.push(inc);
        }
        let mut acc = 0.0;
        let cumulative: Vec<f64> = increments
            .iter()
            .map(|x| {
                acc += x;
                acc
            })
            .collect();
        timepoints
            .iter()
            .map(|&t| match integ.upto(t) {
                0 => 0.0,
                k => cumulative[k - 1],
            })
            .collect()
    }
}

fn collect_warnings(set: BTreeSet<(u64, u8)>) -> Vec<EmptyRiskArm> {
    let mut v: Vec<EmptyRiskArm> =
        set.into_iter().map(|(bits, arm)| EmptyRiskArm { time: f64::from_bits(bits), arm }).collect();
    v.sort_by(|x, y| x.time.total_cmp(&y.time).then(x.arm.cmp(&y.arm)));
    v
}

/// `Q(t; a, a*)` at each query timepoint.
pub fn estimate_q(
    fits: &FittedModels,
    cohort: &Cohort,
    query: &MediationQuery,
    options: &EstimatorOptions,
) -> Result<QCurve, EstimateError> {
    check_timepoints(&query.timepoints, cohort.tau())?;
    check_dimensions(fits, cohort)?;
    let ctx = Context::new(fits, cohort, options);
    let mut warnings = BTreeSet::new();
    let values = ctx.curve(query.method, query.a, query.a_star, &query.timepoints, &mut warnings);
    Ok(QCurve { timepoints: query.timepoints.clone(), values, warnings: collect_warnings(warnings) })
}

/// NDE, NIE and TE at each timepoint, all from the same method.
pub fn estimate_effects(
    method: Method,
    fits: &FittedModels,
    cohort: &Cohort,
    timepoints: &[f64],
    options: &EstimatorOptions,
) -> Result<EffectEstimates, EstimateError> {
    check_timepoints(timepoints, cohort.tau())?;
    check_dimensions(fits, cohort)?;
    let ctx = Context::new(fits, cohort, options);
    let mut warnings = BTreeSet::new();
    let q10 = ctx.curve(method, true, false, timepoints, &mut warnings);
    let q00 = ctx.curve(method, false, false, timepoints, &mut warnings);
    let q11 = ctx.curve(method, true, true, timepoints, &mut warnings);
    let rows = timepoints
        .iter()
        .enumerate()
        .map(|(k, &time)| {
            let (nde, nie, te) = effects_from_q(q10[k], q00[k], q11[k]);
            EffectRow { time, q10: q10[k], q00: q00[k], q11: q11[k], nde, nie, te }
        })
        .collect();
    Ok(EffectEstimates { method, rows, warnings: collect_warnings(warnings) })
}

pub fn estimate_rb(fits: &FittedModels, cohort: &Cohort, timepoints: &[f64]) -> Result<EffectEstimates, EstimateError> {
    estimate_effects(Method::Rb, fits, cohort, timepoints, &EstimatorOptions::default())
}

pub fn estimate_ipw(fits: &FittedModels, cohort: &Cohort, timepoints: &[f64]) -> Result<EffectEstimates, EstimateError> {
    estimate_effects(Method::Ipw, fits, cohort, timepoints, &EstimatorOptions::default())
}

pub fn estimate_psw(fits: &FittedModels, cohort: &Cohort, timepoints: &[f64]) -> Result<EffectEstimates, EstimateError> {
    estimate_effects(Method::Psw, fits, cohort, timepoints, &EstimatorOptions::default())
}

pub fn estimate_tr(fits: &FittedModels, cohort: &Cohort, timepoints: &[f64]) -> Result<EffectEstimates, EstimateError> {
    estimate_effects(Method::Tr, fits, cohort, timepoints, &EstimatorOptions::default())
}
