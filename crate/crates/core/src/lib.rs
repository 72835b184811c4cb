//! Crash-aware black-box tuning of large typed configuration spaces.
//!
//! The crate is organised around the search loop:
//!
//! * [`space`] — typed parameter spaces, sampling, encoding, job files.
//! * [`nn`] — the small neural-network core (dense/ReLU/dropout/RBF + Adam).
//! * [`deeptune`] — the multitask surrogate (crash probability, performance,
//!   uncertainty), its losses, and the candidate scoring policy.
//! * [`strategies`] — random, grid, Gaussian-process and DeepTune proposers.
//! * [`harness`] — synthetic landscapes and external-command evaluation.
//! * [`orchestrator`] — sessions, persistence, resume and reporting.
//!
//! Numeric code in [`nn`] and [`deeptune`] is generic over [`Scalar`]; the
//! aliases below fix it to `f64`, which the search loop uses.

pub mod deeptune;
pub mod harness;
pub mod nn;
pub mod orchestrator;
pub mod seeding;
pub mod space;
pub mod strategies;

use std::fmt::{Debug, Display};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};

/// Floating-point element type of networks and surrogate models.
pub trait Scalar:
    Float + FromPrimitive + LinalgScalar + ScalarOperand + Default + Debug + Display + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Convert an `f64` constant into `T`.
#[inline]
pub fn scalar<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 converts to every Scalar")
}

pub type Network = nn::Network<f64>;
pub type Dense = nn::Dense<f64>;
pub type Rbf = nn::Rbf<f64>;
pub type Adam = nn::Adam<f64>;
pub type DeepTuneModel = deeptune::DeepTuneModel<f64>;
pub type DeepTuneModel32 = deeptune::DeepTuneModel<f32>;

pub use deeptune::{Prediction, ScoringParams};
pub use harness::{Outcome, TrialResult};
pub use orchestrator::{SearchHistory, SessionReport};
pub use space::{ConfigSpace, Configuration, JobSpec, ParameterDef, Value};
