//! Causal mediation analysis for recurrent-event outcomes.
//!
//! Natural direct, indirect and total effects on the expected number of
//! events by time `t`, estimated with regression-based, weighting and
//! triply robust estimators built on three working models: a logistic
//! exposure model, a Gaussian or logistic mediator model and a
//! proportional means model for the recurrent events.
//!
//! ```
//! use recurmed::simulation::{generate_cohort, Scenario};
//! use recurmed::{estimate_effects, fit_models, EstimatorOptions, Method};
//!
//! let scenario = Scenario::preset("exp1-mi").unwrap().with_n(300);
//! let cohort = generate_cohort(&scenario, 7).unwrap();
//! let fits = fit_models(&cohort).unwrap();
//! let est = estimate_effects(Method::Tr, &fits, &cohort, &[9.6, 19.2], &EstimatorOptions::default()).unwrap();
//! assert_eq!(est.rows.len(), 2);
//! let r = &est.rows[1];
//! assert!((r.te - (r.nde + r.nie)).abs() < 1e-12);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod estimators;
pub mod fit;
pub mod inference;
pub mod io;
pub mod simulation;

pub use data::{Cohort, EventGrid, MediatorKind, StepFunction, Subject};
pub use error::{DataError, EstimateError, FitError, InferenceError, IoError, SimulationError};
pub use estimators::{
    estimate_effects, estimate_q, EffectEstimates, EffectRow, EstimatorOptions, MediationQuery, Method,
};
pub use fit::{fit_models, FittedModels, NewtonSettings};
pub use inference::{bootstrap_effects, BootstrapSpec, IntervalEstimates};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/quickstart.md")]
    mod quickstart {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/inference.md")]
    mod inference {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
