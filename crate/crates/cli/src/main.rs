//! `recurmed`: batch front end for recurrent-event mediation analysis.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use recurmed::estimators::{estimate_effects, EffectEstimates, EstimatorOptions, Method};
use recurmed::fit::fit_models;
use recurmed::inference::{bootstrap_effects, BootstrapSpec};
use recurmed::io::{
    self, curve_csv, default_confounder_names, effects_table_csv, experiment_csv, ingest,
    render_effect_table, AnalysisConfig, BootstrapConfig, DataSummary, MethodResult, ModelTables,
    Provenance, Report, TimepointSpec,
};
use recurmed::simulation::{generate_cohort, run_experiment, ExperimentOverrides, Scenario};
use recurmed::{EstimateError, FitError, InferenceError, IoError, SimulationError};
use serde_json::json;

#[derive(Parser)]
#[command(name = "recurmed", version, about = "Causal mediation analysis for recurrent events")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the exposure, mediator and outcome models and report coefficients.
    Fit(AnalysisArgs),
    /// Estimate NDE, NIE and TE at the configured timepoints.
    Mediate(AnalysisArgs),
    /// Like `mediate`, with bootstrap percentile intervals.
    Bootstrap(AnalysisArgs),
    /// Run a simulation experiment and write a bias / ESE table.
    Simulate(SimulateArgs),
    /// Draw a dataset from a scenario preset.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct AnalysisArgs {
    #[arg(long)]
    subjects: PathBuf,
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; the JSON report goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// rb, ipw, psw or tr; repeat or comma-separate for several.
    #[arg(long, value_delimiter = ',')]
    method: Vec<Method>,
    /// Explicit list ("12,24,36") or fractions of tau ("q:0.2,0.4").
    #[arg(long)]
    timepoints: Option<String>,
    /// Number of bootstrap replicates.
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    clip_propensity: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    experiment: u8,
    /// Only presets whose name starts with this.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_delimiter = ',')]
    method: Vec<Method>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Io(IoError),
    Fit(FitError),
    Estimate(EstimateError),
    Inference(InferenceError),
    Simulation(SimulationError),
    Usage(String),
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        Self::Io(e)
    }
}
impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        Self::Fit(e)
    }
}
impl From<EstimateError> for CliError {
    fn from(e: EstimateError) -> Self {
        Self::Estimate(e)
    }
}
impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        Self::Inference(e)
    }
}
impl From<SimulationError> for CliError {
    fn from(e: SimulationError) -> Self {
        Self::Simulation(e)
    }
}

impl CliError {
    /// `(exit code, kind, message)`
    fn describe(&self) -> (u8, &'static str, String) {
        match self {
            Self::Usage(m) => (2, "usage", m.clone()),
            Self::Io(e) => {
                let (code, kind) = match e {
                    IoError::Io { .. } => (3, "io"),
                    IoError::Parse { .. } => (4, "parse"),
                    IoError::MissingColumn { .. } => (4, "missing_column"),
                    IoError::NonFiniteValue { .. } => (4, "non_finite_value"),
                    IoError::OrphanEvent { .. } => (4, "orphan_event"),
                    IoError::DuplicateId { .. } => (4, "duplicate_id"),
                    IoError::Data(_) => (4, "data"),
                    IoError::Config(_) | IoError::Json(_) => (5, "config"),
                };
                (code, kind, e.to_string())
            }
            Self::Fit(e) => (6, "fit", e.to_string()),
            Self::Estimate(e) => (7, "estimate", e.to_string()),
            Self::Inference(e) => (8, "inference", e.to_string()),
            Self::Simulation(e) => (9, "simulation", e.to_string()),
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|source| IoError::Io { path: path.display().to_string(), source }.into())
}

fn out_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path)
        .map_err(|source| IoError::Io { path: path.display().to_string(), source }.into())
}

fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path)
        .map_err(|source| IoError::Io { path: path.display().to_string(), source })?;
    Ok(io::sha256_hex(&bytes))
}

/// Config file with command-line overrides applied.
fn effective_config(args: &AnalysisArgs, bootstrap_required: bool) -> Result<AnalysisConfig, CliError> {
    let mut cfg = AnalysisConfig::load(&args.config)?;
    if !args.method.is_empty() {
        cfg.methods = args.method.clone();
    }
    if let Some(t) = &args.timepoints {
        cfg.timepoints = TimepointSpec::Text(t.clone());
    }
    if let Some(c) = args.clip_propensity {
        cfg.clip_propensity = c;
    }
    if let Some(s) = args.seed {
        cfg.seed = Some(s);
    }
    if let Some(b) = args.bootstrap {
        cfg.bootstrap = Some(BootstrapConfig { replicates: b, level: cfg.bootstrap.as_ref().map_or(0.95, |b| b.level) });
    }
    if let Some(level) = args.level {
        match &mut cfg.bootstrap {
            Some(b) => b.level = level,
            None if bootstrap_required => cfg.bootstrap = Some(BootstrapConfig { replicates: 500, level }),
            None => return Err(CliError::Usage("--level needs --bootstrap".into())),
        }
    }
    if bootstrap_required && cfg.bootstrap.is_none() {
        cfg.bootstrap = Some(BootstrapConfig { replicates: 500, level: 0.95 });
    }
    cfg.validate()?;
    Ok(cfg)
}

fn analysis(args: &AnalysisArgs, mode: &Command) -> Result<(), CliError> {
    let with_effects = !matches!(mode, Command::Fit(_));
    let cfg = effective_config(args, matches!(mode, Command::Bootstrap(_)))?;
    let ds = ingest(&args.subjects, &args.events, &cfg)?;
    let fits = fit_models(&ds.cohort)?;
    let timepoints = cfg.timepoints.resolve(cfg.tau)?;
    let options = EstimatorOptions { clip_propensity: cfg.clip_propensity };

    let mut results = Vec::new();
    let mut curves: Vec<(Method, EffectEstimates)> = Vec::new();
    if with_effects {
        let curve_times: Vec<f64> = (1..=100).map(|k| cfg.tau * k as f64 / 100.0).collect();
        for &method in &cfg.methods {
            let est = estimate_effects(method, &fits, &ds.cohort, &timepoints, &options)?;
            let result = match &cfg.bootstrap {
                Some(b) => {
                    let spec = BootstrapSpec {
                        replicates: b.replicates,
                        level: b.level,
                        seed: cfg.seed.unwrap_or(0),
                        method,
                        options,
                    };
                    MethodResult::from_intervals(&est, &bootstrap_effects(&ds.cohort, &spec, &timepoints)?)
                }
                None => MethodResult::from_point(&est),
            };
            results.push(result);
            curves.push((method, estimate_effects(method, &fits, &ds.cohort, &curve_times, &options)?));
        }
    }

    let mut provenance = Provenance::new(&cfg, cfg.seed);
    provenance.subjects_sha256 = Some(file_digest(&args.subjects)?);
    provenance.events_sha256 = Some(file_digest(&args.events)?);
    let report = Report {
        provenance,
        data: DataSummary::new(&ds),
        models: ModelTables::new(&fits, &ds.confounder_names),
        config: cfg,
        results,
    };

    let Some(out) = &args.out else {
        print!("{}", report.to_json());
        return Ok(());
    };
    out_dir(out)?;
    write(&out.join("report.json"), &report.to_json())?;
    if with_effects {
        write(&out.join("effects.csv"), &effects_table_csv(&report.results))?;
        let mut table = String::new();
        for r in &report.results {
            table.push_str(&format!("[{}]\n", r.method));
            table.push_str(&render_effect_table(r, io::month_label));
            table.push('\n');
        }
        write(&out.join("table.txt"), &table)?;
        for (method, est) in &curves {
            write(&out.join(format!("curve_{method}.csv")), &curve_csv(est))?;
        }
    }
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let overrides = ExperimentOverrides {
        reps: args.reps,
        n: args.n,
        scenario: args.scenario.clone(),
        methods: (!args.method.is_empty()).then(|| args.method.clone()),
    };
    let report = run_experiment(args.experiment, &overrides, args.seed)?;
    out_dir(&args.out)?;
    write(&args.out.join("experiment.csv"), &experiment_csv(&report))?;
    let json = serde_json::to_string_pretty(&report).map_err(IoError::from)?;
    write(&args.out.join("experiment.json"), &(json + "\n"))
}

fn generate(args: &GenerateArgs) -> Result<(), CliError> {
    let mut scenario = Scenario::preset(&args.scenario)?;
    if let Some(n) = args.n {
        scenario.n = n;
    }
    let cohort = generate_cohort(&scenario, args.seed)?;
    let names = if scenario.name == "appendix5-golden" {
        ["sex", "age", "bmi", "cvd_history"].map(String::from).to_vec()
    } else {
        default_confounder_names(scenario.confounders.len())
    };
    out_dir(&args.out)?;
    io::write_cohort(&cohort, &names, &args.out.join("subjects.csv"), &args.out.join("events.csv"))?;
    let mut cfg = AnalysisConfig::new(scenario.tau);
    cfg.mediator_kind = scenario.mediator_kind;
    cfg.confounders = Some(names);
    cfg.timepoints = TimepointSpec::List(scenario.timepoints.clone());
    cfg.seed = Some(args.seed);
    let json = serde_json::to_string_pretty(&cfg).map_err(IoError::from)?;
    write(&args.out.join("config.json"), &(json + "\n"))?;
    let json = serde_json::to_string_pretty(&scenario).map_err(IoError::from)?;
    write(&args.out.join("scenario.json"), &(json + "\n"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fit(a) | Command::Mediate(a) | Command::Bootstrap(a) => analysis(a, &cli.command),
        Command::Simulate(a) => simulate(a),
        Command::Generate(a) => generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind, message) = e.describe();
            eprintln!("{}", json!({ "error": { "kind": kind, "message": message, "exit_code": code } }));
            ExitCode::from(code)
        }
    }
}
