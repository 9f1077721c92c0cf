//! File formats: cohort CSVs, the analysis configuration and reports.
//!
//! * subjects CSV: `id,exposure,mediator,censor_time,<confounder...>`
//! * events CSV (long format, one row per event): `id,time`
//! * configuration: JSON with a `schema_version`; unknown fields are errors
//! * reports: JSON (missing intervals are explicit `null`s) plus CSV tables

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Cohort, MediatorKind, Subject};
use crate::error::IoError;
use crate::estimators::{EffectEstimates, EmptyRiskArm, Method};
use crate::fit::{FittedModels, MediatorModel};
use crate::inference::IntervalEstimates;
use crate::simulation::{Effect, ExperimentReport};

pub const SCHEMA_VERSION: u32 = 1;

/// Written wherever a value is missing in CSV output.
pub const CSV_NULL: &str = "null";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.display().to_string(), source }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Timepoints as an explicit list, or a string: `"q:0.2,0.4"` gives
/// fractions of `tau`, anything else is a comma-separated list of times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimepointSpec {
    List(Vec<f64>),
    Text(String),
}

impl Default for TimepointSpec {
    fn default() -> Self {
        Self::Text("q:0.2,0.4,0.6,0.8".into())
    }
}

impl TimepointSpec {
    pub fn resolve(&self, tau: f64) -> Result<Vec<f64>, IoError> {
        let bad = |m: String| IoError::Config(m);
        let parse_list = |s: &str| -> Result<Vec<f64>, IoError> {
            s.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| bad(format!("bad timepoint `{}`", v.trim()))))
                .collect()
        };
        let times = match self {
            Self::List(v) => v.clone(),
            Self::Text(s) => match s.trim().strip_prefix("q:") {
                Some(q) => {
                    let qs = parse_list(q)?;
                    if let Some(q) = qs.iter().find(|q| !(**q > 0.0 && **q <= 1.0)) {
                        return Err(bad(format!("quantile {q} outside (0, 1]")));
                    }
                    // round away representation noise so 0.2 * 24 reports as 4.8
                    qs.iter().map(|q| ((q * tau) * 1e9).round() / 1e9).collect()
                }
                None => parse_list(s)?,
            },
        };
        if times.is_empty() {
            return Err(bad("no timepoints".into()));
        }
        if let Some(t) = times.iter().find(|t| !(**t > 0.0 && **t <= tau)) {
            return Err(bad(format!("timepoint {t} outside (0, tau = {tau}]")));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("timepoints must be strictly increasing".into()));
        }
        Ok(times)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    pub replicates: usize,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_level() -> f64 {
    0.95
}

fn default_methods() -> Vec<Method> {
    vec![Method::Tr]
}

fn col(name: &str) -> String {
    name.to_string()
}

/// Declares the three models and the analysis grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub schema_version: u32,
    #[serde(default = "default_kind")]
    pub mediator_kind: MediatorKind,
    #[serde(default = "id_col")]
    pub id_column: String,
    #[serde(default = "exposure_col")]
    pub exposure_column: String,
    #[serde(default = "mediator_col")]
    pub mediator_column: String,
    #[serde(default = "censor_col")]
    pub censor_column: String,
    /// `None` uses every remaining subjects column, in file order.
    #[serde(default)]
    pub confounders: Option<Vec<String>>,
    pub tau: f64,
    #[serde(default)]
    pub timepoints: TimepointSpec,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub bootstrap: Option<BootstrapConfig>,
    #[serde(default)]
    pub clip_propensity: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_kind() -> MediatorKind {
    MediatorKind::ContinuousGaussian
}
fn id_col() -> String {
    col("id")
}
fn exposure_col() -> String {
    col("exposure")
}
fn mediator_col() -> String {
    col("mediator")
}
fn censor_col() -> String {
    col("censor_time")
}

impl AnalysisConfig {
    /// Defaults for everything but `tau`.
    pub fn new(tau: f64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            mediator_kind: default_kind(),
            id_column: id_col(),
            exposure_column: exposure_col(),
            mediator_column: mediator_col(),
            censor_column: censor_col(),
            confounders: None,
            tau,
            timepoints: TimepointSpec::default(),
            methods: default_methods(),
            bootstrap: None,
            clip_propensity: 0.0,
            seed: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, IoError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::from_json(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn validate(&self) -> Result<(), IoError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(IoError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(IoError::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(0.0..0.5).contains(&self.clip_propensity) {
            return Err(IoError::Config(format!(
                "clip_propensity must lie in [0, 0.5), got {}",
                self.clip_propensity
            )));
        }
        if self.methods.is_empty() {
            return Err(IoError::Config("at least one method is required".into()));
        }
        if let Some(b) = &self.bootstrap {
            if b.replicates < 2 || !(b.level > 0.0 && b.level < 1.0) {
                return Err(IoError::Config("bootstrap needs replicates >= 2 and level in (0, 1)".into()));
            }
        }
        self.timepoints.resolve(self.tau).map(|_| ())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

/// Cohort plus the column names it was read with.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub cohort: Cohort,
    pub confounder_names: Vec<String>,
}

fn parse_number(file: &str, line: u64, column: &str, raw: &str) -> Result<f64, IoError> {
    let v: f64 = raw.trim().parse().map_err(|_| IoError::Parse {
        file: file.into(),
        line,
        column: column.into(),
        message: format!("`{raw}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(IoError::NonFiniteValue {
            file: file.into(),
            line,
            column: column.into(),
            value: raw.into(),
            extra: "",
        });
    }
    Ok(v)
}

fn nonnegative(file: &str, line: u64, column: &str, raw: &str) -> Result<f64, IoError> {
    let v = parse_number(file, line, column, raw)?;
    if v < 0.0 {
        return Err(IoError::NonFiniteValue {
            file: file.into(),
            line,
            column: column.into(),
            value: raw.into(),
            extra: " and nonnegative",
        });
    }
    Ok(v)
}

fn column_index(headers: &csv::StringRecord, file: &str, name: &str) -> Result<usize, IoError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| IoError::MissingColumn { file: file.into(), column: name.into() })
}

fn csv_error(file: &str, e: csv::Error) -> IoError {
    let line = e.position().map_or(0, |p| p.line());
    IoError::Parse { file: file.into(), line, column: String::new(), message: e.to_string() }
}

/// Reads the two CSV files into a validated cohort.
pub fn ingest_readers(
    subjects: impl std::io::Read,
    events: impl std::io::Read,
    config: &AnalysisConfig,
) -> Result<Dataset, IoError> {
    const SUBJECTS: &str = "subjects";
    const EVENTS: &str = "events";
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(subjects);
    let headers = rdr.headers().map_err(|e| csv_error(SUBJECTS, e))?.clone();
    let id_i = column_index(&headers, SUBJECTS, &config.id_column)?;
    let a_i = column_index(&headers, SUBJECTS, &config.exposure_column)?;
    let m_i = column_index(&headers, SUBJECTS, &config.mediator_column)?;
    let c_i = column_index(&headers, SUBJECTS, &config.censor_column)?;
    let confounder_names: Vec<String> = match &config.confounders {
        Some(names) => names.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| ![id_i, a_i, m_i, c_i].contains(i))
            .map(|(_, h)| h.trim().to_string())
            .collect(),
    };
    let conf_i: Vec<usize> = confounder_names
        .iter()
        .map(|n| column_index(&headers, SUBJECTS, n))
        .collect::<Result<_, _>>()?;

    struct Row {
        id: String,
        exposed: bool,
        mediator: f64,
        censor: f64,
        confounders: Vec<f64>,
        events: Vec<f64>,
    }
    let mut rows: Vec<Row> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(SUBJECTS, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec[id_i].to_string();
        let exposure = parse_number(SUBJECTS, line, &config.exposure_column, &rec[a_i])?;
        if exposure != 0.0 && exposure != 1.0 {
            return Err(IoError::Parse {
                file: SUBJECTS.into(),
                line,
                column: config.exposure_column.clone(),
                message: format!("exposure must be 0 or 1, found {exposure}"),
            });
        }
        let mediator = parse_number(SUBJECTS, line, &config.mediator_column, &rec[m_i])?;
        let censor = nonnegative(SUBJECTS, line, &config.censor_column, &rec[c_i])?;
        let confounders = conf_i
            .iter()
            .zip(&confounder_names)
            .map(|(&i, n)| parse_number(SUBJECTS, line, n, &rec[i]))
            .collect::<Result<Vec<_>, _>>()?;
        if by_id.insert(id.clone(), rows.len()).is_some() {
            return Err(IoError::DuplicateId { id, line });
        }
        rows.push(Row { id, exposed: exposure == 1.0, mediator, censor, confounders, events: Vec::new() });
    }

    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(events);
    let headers = rdr.headers().map_err(|e| csv_error(EVENTS, e))?.clone();
    let eid_i = column_index(&headers, EVENTS, "id")?;
    let t_i = column_index(&headers, EVENTS, "time")?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(EVENTS, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = &rec[eid_i];
        let Some(&k) = by_id.get(id) else {
            return Err(IoError::OrphanEvent { id: id.to_string(), line });
        };
        rows[k].events.push(nonnegative(EVENTS, line, "time", &rec[t_i])?);
    }

    let subjects = rows
        .into_iter()
        .map(|r| Subject::new(r.id, r.events, r.censor, r.exposed, r.mediator, r.confounders))
        .collect::<Result<Vec<_>, _>>()?;
    let cohort = Cohort::new(subjects, config.tau, config.mediator_kind)?;
    Ok(Dataset { cohort, confounder_names })
}

pub fn ingest(subjects: &Path, events: &Path, config: &AnalysisConfig) -> Result<Dataset, IoError> {
    let s = fs::File::open(subjects).map_err(io_err(subjects))?;
    let e = fs::File::open(events).map_err(io_err(events))?;
    ingest_readers(s, e, config)
}

/// Default confounder names `c1, c2, ...`.
pub fn default_confounder_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("c{j}")).collect()
}

/// Subjects CSV text. Numbers use the shortest representation that parses
/// back to the same `f64`, so write-then-ingest is lossless.
pub fn subjects_csv(cohort: &Cohort, confounder_names: &[String]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string(), "exposure".into(), "mediator".into(), "censor_time".into()];
    header.extend(confounder_names.iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for s in cohort.subjects() {
        let mut rec =
            vec![s.id.clone(), u8::from(s.exposed).to_string(), s.mediator.to_string(), s.censor_time.to_string()];
        rec.extend(s.confounders.iter().map(f64::to_string));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// Events CSV text: every recorded event, including any after censoring.
pub fn events_csv(cohort: &Cohort) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "time"]).expect("in-memory write");
    for s in cohort.subjects() {
        for t in s.event_times() {
            w.write_record([s.id.as_str(), &t.to_string()]).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn write_cohort(
    cohort: &Cohort,
    confounder_names: &[String],
    subjects: &Path,
    events: &Path,
) -> Result<(), IoError> {
    fs::write(subjects, subjects_csv(cohort, confounder_names)).map_err(io_err(subjects))?;
    fs::write(events, events_csv(cohort)).map_err(io_err(events))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselinePoint {
    pub time: f64,
    pub cumulative: f64,
}

/// Fitted coefficients of the three models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTables {
    pub exposure: Vec<Coefficient>,
    pub mediator_kind: MediatorKind,
    pub mediator: Vec<Coefficient>,
    pub mediator_sigma2: Option<f64>,
    pub outcome: Vec<Coefficient>,
    pub outcome_iterations: usize,
    pub baseline: Vec<BaselinePoint>,
}

impl ModelTables {
    pub fn new(fits: &FittedModels, confounder_names: &[String]) -> Self {
        let named = |names: Vec<String>, values: &[f64]| -> Vec<Coefficient> {
            names.into_iter().zip(values).map(|(name, &estimate)| Coefficient { name, estimate }).collect()
        };
        let mut exp_names = vec!["(intercept)".to_string()];
        exp_names.extend(confounder_names.iter().cloned());
        if fits.exposure.scaled_mediator.is_some() {
            exp_names.push("mediator_scaled".into());
        }
        let mut med_names = vec!["(intercept)".to_string(), "exposure".into()];
        med_names.extend(confounder_names.iter().cloned());
        let mut out_names = vec!["exposure".to_string(), "mediator".into()];
        out_names.extend(confounder_names.iter().cloned());
        let base = &fits.outcome.baseline;
        let mut acc = 0.0;
        let baseline = base
            .jump_times()
            .iter()
            .zip(base.jump_sizes())
            .map(|(&time, &d)| {
                acc += d;
                BaselinePoint { time, cumulative: acc }
            })
            .collect();
        let (mediator_kind, mediator_sigma2) = match &fits.mediator {
            MediatorModel::Gaussian(g) => (MediatorKind::ContinuousGaussian, Some(g.sigma2)),
            MediatorModel::Binary(_) => (MediatorKind::Binary, None),
        };
        Self {
            exposure: named(exp_names, &fits.exposure.fit.coefficients),
            mediator_kind,
            mediator: named(med_names, fits.mediator.coefficients()),
            mediator_sigma2,
            outcome: named(out_names, &fits.outcome.beta),
            outcome_iterations: fits.outcome.iterations,
            baseline,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectValue {
    pub time: f64,
    pub effect: Effect,
    pub estimate: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub effects: Vec<EffectValue>,
    pub level: Option<f64>,
    pub bootstrap_replicates: Option<usize>,
    pub failed_replicates: Option<usize>,
    pub empty_risk_arms: Vec<EmptyRiskArm>,
}

impl MethodResult {
    pub fn from_point(est: &EffectEstimates) -> Self {
        let effects = est
            .rows
            .iter()
            .flat_map(|r| {
                [(Effect::Te, r.te), (Effect::Nie, r.nie), (Effect::Nde, r.nde)].map(|(effect, estimate)| {
                    EffectValue { time: r.time, effect, estimate, lower: None, upper: None }
                })
            })
            .collect();
        Self {
            method: est.method,
            effects,
            level: None,
            bootstrap_replicates: None,
            failed_replicates: None,
            empty_risk_arms: est.warnings.clone(),
        }
    }

    /// Point estimates from `est` (the full-sample estimates, which also
    /// carry the warnings) with the intervals of `iv`.
    pub fn from_intervals(est: &EffectEstimates, iv: &IntervalEstimates) -> Self {
        let mut out = Self::from_point(est);
        for v in &mut out.effects {
            if let Some(row) = iv.rows.iter().find(|r| r.time == v.time) {
                let i = match v.effect {
                    Effect::Nde => row.nde,
                    Effect::Nie => row.nie,
                    Effect::Te => row.te,
                };
                v.lower = Some(i.lower);
                v.upper = Some(i.upper);
            }
        }
        out.level = Some(iv.level);
        out.bootstrap_replicates = Some(iv.replicates);
        out.failed_replicates = Some(iv.n_failed_replicates);
        out
    }

    pub fn value(&self, effect: Effect, time: f64) -> Option<&EffectValue> {
        self.effects.iter().find(|v| v.effect == effect && v.time == time)
    }

    fn times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = Vec::new();
        for v in &self.effects {
            if !t.contains(&v.time) {
                t.push(v.time);
            }
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config_sha256: String,
    pub subjects_sha256: Option<String>,
    pub events_sha256: Option<String>,
}

impl Provenance {
    pub fn new(config: &AnalysisConfig, seed: Option<u64>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config_sha256: config.digest(),
            subjects_sha256: None,
            events_sha256: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub subjects: usize,
    pub exposed: usize,
    pub observed_events: usize,
    pub tau: f64,
    pub confounders: Vec<String>,
}

impl DataSummary {
    pub fn new(ds: &Dataset) -> Self {
        Self {
            subjects: ds.cohort.len(),
            exposed: ds.cohort.subjects().iter().filter(|s| s.exposed).count(),
            observed_events: ds.cohort.total_observed_events(),
            tau: ds.cohort.tau(),
            confounders: ds.confounder_names.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub provenance: Provenance,
    pub config: AnalysisConfig,
    pub data: DataSummary,
    pub models: ModelTables,
    pub results: Vec<MethodResult>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, IoError> {
        Ok(serde_json::from_str(text)?)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| CSV_NULL.to_string(), |x| x.to_string())
}

/// `method,time,effect,estimate,lower,upper`
pub fn effects_table_csv(results: &[MethodResult]) -> String {
    let mut s = String::from("method,time,effect,estimate,lower,upper\n");
    for r in results {
        for v in &r.effects {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.method,
                v.time,
                v.effect.as_str(),
                v.estimate,
                opt(v.lower),
                opt(v.upper)
            );
        }
    }
    s
}

/// Effect curves, one row per time: `time,nde,nie,te`.
pub fn curve_csv(est: &EffectEstimates) -> String {
    let mut s = String::from("time,nde,nie,te\n");
    for r in &est.rows {
        let _ = writeln!(s, "{},{},{},{}", r.time, r.nde, r.nie, r.te);
    }
    s
}

/// Plain-text table with one row per effect (TE, NIE, NDE) and one column
/// per timepoint, each cell `estimate (lower, upper)`.
pub fn render_effect_table(result: &MethodResult, time_label: impl Fn(f64) -> String) -> String {
    let times = result.times();
    let mut cells: Vec<Vec<String>> = vec![std::iter::once(format!("Est. ({:.0}% C.I.)", 100.0 * result.level.unwrap_or(0.95)))
        .chain(times.iter().map(|&t| time_label(t)))
        .collect()];
    for (label, effect) in [("TE", Effect::Te), ("NIE", Effect::Nie), ("NDE", Effect::Nde)] {
        let mut row = vec![label.to_string()];
        for &t in &times {
            let cell = match result.value(effect, t) {
                Some(v) => match (v.lower, v.upper) {
                    (Some(l), Some(u)) => format!("{:.3} ({:.3}, {:.3})", v.estimate, l, u),
                    _ => format!("{:.3} (NA, NA)", v.estimate),
                },
                None => "NA".into(),
            };
            row.push(cell);
        }
        cells.push(row);
    }
    let widths: Vec<usize> =
        (0..cells[0].len()).map(|j| cells.iter().map(|r| r[j].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in &cells {
        let line: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

/// Months to a "1 year" style label when the time is a whole number of
/// years, otherwise the raw time.
pub fn month_label(t: f64) -> String {
    let years = t / 12.0;
    if (years - years.round()).abs() < 1e-9 && years >= 1.0 {
        let y = years.round() as i64;
        if y == 1 {
            "1 year".into()
        } else {
            format!("{y} years")
        }
    } else {
        format!("t = {t}")
    }
}

/// Long-format simulation table with bias (also scaled by 1000) and ESE
/// per scenario, model set, method, effect and timepoint.
pub fn experiment_csv(report: &ExperimentReport) -> String {
    let mut s = String::from(
        "scenario,model_set,method,effect,time,truth,mean_estimate,bias,bias_x1e3,ese,mc_se,replications,failed,seed\n",
    );
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scenario,
            r.model_set,
            r.method,
            r.effect.as_str(),
            r.time,
            r.truth,
            r.mean_estimate,
            r.bias,
            r.bias * 1e3,
            r.ese,
            r.mc_se,
            r.replications,
            r.failed,
            report.seed
        );
    }
    s
}
