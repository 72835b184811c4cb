use serde::{Deserialize, Serialize};

use super::{SearchContext, Strategy, StrategyError};
use crate::deeptune::{select_next, DeepTuneModel, ScoringParams, TrainSchedule, TrainingSet};
use crate::seeding::{self, Purpose};
use crate::space::{ConfigSpace, Configuration};

/// Job-file parameters of the `deeptune` strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeepTuneParams {
    pub alpha: f64,
    pub pool_size: usize,
    pub crash_gate: f64,
    pub exploit_fraction: f64,
    pub train_steps: usize,
    pub batch_size: usize,
}

impl Default for DeepTuneParams {
    fn default() -> Self {
        let s = ScoringParams::default();
        let t = TrainSchedule::default();
        Self {
            alpha: s.alpha,
            pool_size: s.pool_size,
            crash_gate: s.crash_gate,
            exploit_fraction: s.exploit_fraction,
            train_steps: t.steps,
            batch_size: t.batch_size,
        }
    }
}

impl DeepTuneParams {
    pub fn scoring(&self) -> ScoringParams {
        ScoringParams {
            alpha: self.alpha,
            pool_size: self.pool_size,
            crash_gate: self.crash_gate,
            exploit_fraction: self.exploit_fraction,
        }
    }

    pub fn schedule(&self) -> TrainSchedule {
        TrainSchedule {
            steps: self.train_steps,
            batch_size: self.batch_size,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.scoring().validate().map_err(|e| e.to_string())?;
        if self.batch_size == 0 {
            return Err("batch_size must be >= 1".into());
        }
        Ok(())
    }
}

/// Proposes with [`select_next`] and retrains the surrogate after every observation.
#[derive(Debug, Clone)]
pub struct DeepTuneStrategy {
    model: DeepTuneModel<f64>,
    params: DeepTuneParams,
}

impl DeepTuneStrategy {
    pub fn new(
        space: &ConfigSpace,
        params: DeepTuneParams,
        seed: u64,
        warm_start: Option<DeepTuneModel<f64>>,
    ) -> Result<Self, StrategyError> {
        let model = match warm_start {
            Some(m) => m,
            None => DeepTuneModel::build(space, &mut seeding::stream(seed, Purpose::ModelInit, 0))?,
        };
        Ok(Self { model, params })
    }
}

impl Strategy for DeepTuneStrategy {
    fn name(&self) -> &'static str {
        "deeptune"
    }

    fn propose(&mut self, ctx: &SearchContext<'_>) -> Result<Configuration, StrategyError> {
        let mut rng = seeding::stream(ctx.seed, Purpose::Propose, ctx.iteration());
        Ok(select_next(ctx.space, ctx.trials, Some(&self.model), &self.params.scoring(), &mut rng)?)
    }

    fn observe(&mut self, ctx: &SearchContext<'_>) -> Result<(), StrategyError> {
        if ctx.trials.is_empty() {
            return Ok(());
        }
        let set = TrainingSet::from_history(ctx.space, ctx.trials, ctx.objective, ctx.stats)?;
        let mut rng = seeding::stream(ctx.seed, Purpose::Train, ctx.iteration());
        self.model.train(&set, &self.params.schedule(), &mut rng)?;
        Ok(())
    }

    fn model(&self) -> Option<&DeepTuneModel<f64>> {
        Some(&self.model)
    }
}
