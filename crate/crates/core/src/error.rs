use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("subject {id}: time {value} must be finite and nonnegative")]
    InvalidTime { id: String, value: f64 },
    #[error("subject {id}: mediator and confounders must be finite")]
    NonFinite { id: String },
    #[error("subject {id}: expected {expected} confounders, found {found}")]
    ConfounderDimension { id: String, expected: usize, found: usize },
    #[error("subject {id}: binary mediator must be 0 or 1, found {value}")]
    NonBinaryMediator { id: String, value: f64 },
    #[error("follow-up horizon must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("cohort has no subjects")]
    Empty,
    #[error("length mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("step function jump times must be strictly ascending")]
    UnsortedJumps,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("design is ragged or empty: {0}")]
    Dimension(String),
    #[error("complete or quasi-complete separation (|coef| > {bound} or singular information)")]
    Separation { bound: f64 },
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("residual variance is zero; the Gaussian density is degenerate")]
    DegenerateVariance,
    #[error("no observed events")]
    NoEvents,
    #[error("empty risk set at time {time}")]
    RiskSetEmpty { time: f64 },
    #[error("no convergence after {iterations} iterations (score sup-norm {gradient_norm:e}, last coefficients {last:?})")]
    Convergence { iterations: usize, gradient_norm: f64, last: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("timepoint {t} outside (0, tau = {tau}]")]
    TimepointOutOfRange { t: f64, tau: f64 },
    #[error("timepoints must be sorted ascending")]
    UnsortedTimepoints,
    #[error("model dimension mismatch: {0}")]
    ModelDimension(String),
    #[error("no subject in arm {arm} is at risk at time {time}")]
    EmptyRiskArm { time: f64, arm: u8 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("bootstrap needs at least 2 replicates, got {0}")]
    TooFewReplicates(usize),
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("{failed} of {replicates} bootstrap replicates failed (limit 20%)")]
    TooManyFailures { failed: usize, replicates: usize },
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("unknown scenario preset `{0}`")]
    UnknownScenario(String),
    #[error("unknown experiment {0}; expected 1-4")]
    UnknownExperiment(u8),
    #[error("population truth has a closed form only for a Gaussian mediator")]
    UnsupportedScenario,
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("{failed} of {replications} replications failed")]
    TooManyFailures { failed: usize, replications: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{file}, line {line}, column `{column}`: {message}")]
    Parse { file: String, line: u64, column: String, message: String },
    #[error("{file}: missing column `{column}`")]
    MissingColumn { file: String, column: String },
    #[error("{file}, line {line}, column `{column}`: invalid value {value} (must be finite{extra})")]
    NonFiniteValue { file: String, line: u64, column: String, value: String, extra: &'static str },
    #[error("events file, line {line}: id `{id}` does not appear in the subjects file")]
    OrphanEvent { id: String, line: u64 },
    #[error("subjects file, line {line}: duplicate id `{id}`")]
    DuplicateId { id: String, line: u64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Data(#[from] DataError),
}
