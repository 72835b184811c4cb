use std::collections::HashSet;

use log::warn;
use rand::Rng;

use super::{SearchContext, Strategy, StrategyError};
use crate::harness::TrialResult;
use crate::seeding::{self, Purpose};
use crate::space::{ConfigSpace, Configuration};

/// Uniform draws rejected against the history before a duplicate is accepted.
pub const RANDOM_ATTEMPTS: usize = 100;

/// A uniform sample that is not already in `trials`, if one turns up within
/// [`RANDOM_ATTEMPTS`] draws; otherwise the last draw, with a warning.
pub fn random_propose<R: Rng + ?Sized>(space: &ConfigSpace, trials: &[TrialResult], rng: &mut R) -> Configuration {
    let seen: HashSet<String> = trials.iter().map(|t| t.config.key()).collect();
    let mut last = None;
    for _ in 0..RANDOM_ATTEMPTS {
        let c = space.sample_uniform(rng);
        if !seen.contains(&c.key()) {
            return c;
        }
        last = Some(c);
    }
    warn!("no unseen configuration after {RANDOM_ATTEMPTS} draws; repeating one");
    last.expect("at least one draw")
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RandomStrategy;

impl Strategy for RandomStrategy {
    fn name(&self) -> &'static str {
        "random"
    }

    fn propose(&mut self, ctx: &SearchContext<'_>) -> Result<Configuration, StrategyError> {
        let mut rng = seeding::stream(ctx.seed, Purpose::Propose, ctx.iteration());
        Ok(random_propose(ctx.space, ctx.trials, &mut rng))
    }
}
