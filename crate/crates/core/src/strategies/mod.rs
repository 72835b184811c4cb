//! Search strategies behind one propose/observe interface.
//!
//! Strategies hold no randomness of their own: each proposal draws from the
//! seeded stream for its iteration, so replaying a history through
//! [`Strategy::observe`] reproduces the strategy's state exactly.

mod bayes;
mod deep;
mod grid;
mod random;

pub use bayes::{expected_improvement, BayesParams, BayesStrategy, GpModel};
pub use deep::{DeepTuneParams, DeepTuneStrategy};
pub use grid::{grid_levels, GridParams, GridStrategy};
pub use random::{random_propose, RandomStrategy, RANDOM_ATTEMPTS};

use serde::de::DeserializeOwned;
use thiserror::Error;

use crate::deeptune::{DeepTuneError, DeepTuneModel};
use crate::harness::{HarnessError, MetricStats, TrialResult};
use crate::space::{ConfigSpace, Configuration, Objective, SpaceError, StrategySpec};

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("unknown strategy `{0}` (expected random, grid, bayes or deeptune)")]
    Unknown(String),
    #[error("invalid parameters for `{strategy}`: {message}")]
    Params { strategy: String, message: String },
    #[error("search space exhausted after {0} configurations")]
    Exhausted(u64),
    #[error(transparent)]
    DeepTune(#[from] DeepTuneError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

/// What a strategy may look at when proposing or observing.
#[derive(Debug, Clone, Copy)]
pub struct SearchContext<'a> {
    pub space: &'a ConfigSpace,
    /// Every trial so far, in order. During `observe` the last one is the new result.
    pub trials: &'a [TrialResult],
    pub objective: &'a Objective,
    pub stats: &'a MetricStats,
    pub seed: u64,
}

impl SearchContext<'_> {
    /// Index of the iteration being proposed.
    pub fn iteration(&self) -> u64 {
        self.trials.len() as u64
    }
}

pub trait Strategy: Send {
    fn name(&self) -> &'static str;

    fn propose(&mut self, ctx: &SearchContext<'_>) -> Result<Configuration, StrategyError>;

    fn observe(&mut self, ctx: &SearchContext<'_>) -> Result<(), StrategyError> {
        let _ = ctx;
        Ok(())
    }

    /// The surrogate, for strategies that have one.
    fn model(&self) -> Option<&DeepTuneModel<f64>> {
        None
    }
}

/// A strategy name with its validated parameter table.
#[derive(Debug, Clone, PartialEq)]
pub enum StrategyConfig {
    Random,
    Grid(GridParams),
    Bayes(BayesParams),
    DeepTune(DeepTuneParams),
}

fn params<P: DeserializeOwned>(spec: &StrategySpec) -> Result<P, StrategyError> {
    serde_json::from_value(serde_json::Value::Object(spec.params.clone())).map_err(|e| StrategyError::Params {
        strategy: spec.name.clone(),
        message: e.to_string(),
    })
}

impl StrategyConfig {
    pub fn from_spec(spec: &StrategySpec) -> Result<Self, StrategyError> {
        let config = match spec.name.as_str() {
            "random" => {
                if !spec.params.is_empty() {
                    return Err(StrategyError::Params {
                        strategy: spec.name.clone(),
                        message: "random takes no parameters".into(),
                    });
                }
                StrategyConfig::Random
            }
            "grid" => StrategyConfig::Grid(params(spec)?),
            "bayes" => StrategyConfig::Bayes(params(spec)?),
            "deeptune" => StrategyConfig::DeepTune(params(spec)?),
            other => return Err(StrategyError::Unknown(other.into())),
        };
        config.validate().map_err(|message| StrategyError::Params {
            strategy: spec.name.clone(),
            message,
        })?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), String> {
        match self {
            StrategyConfig::Random => Ok(()),
            StrategyConfig::Grid(p) => p.validate(),
            StrategyConfig::Bayes(p) => p.validate(),
            StrategyConfig::DeepTune(p) => p.validate(),
        }
    }

    /// Instantiate for a session. `warm_start` is only used by `deeptune`.
    pub fn build(
        &self,
        space: &ConfigSpace,
        seed: u64,
        warm_start: Option<DeepTuneModel<f64>>,
    ) -> Result<Box<dyn Strategy>, StrategyError> {
        Ok(match self {
            StrategyConfig::Random => Box::new(RandomStrategy),
            StrategyConfig::Grid(p) => Box::new(GridStrategy::new(space, p)),
            StrategyConfig::Bayes(p) => Box::new(BayesStrategy::new(p.clone())),
            StrategyConfig::DeepTune(p) => Box::new(DeepTuneStrategy::new(space, p.clone(), seed, warm_start)?),
        })
    }
}
