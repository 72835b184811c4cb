//! Evaluation targets.
//!
//! A target turns a [`Configuration`] into a [`TrialResult`]. Build failures,
//! boot/run failures, hangs and unparsable output are all recorded as crashes;
//! only misconfiguration of the target itself (e.g. a command that does not
//! exist) is reported as an error.

mod command;
mod synthetic;

pub use command::{CommandTarget, CommandEvaluator, MetricRule};
pub use synthetic::{Bump, Condition, CrashBox, LandscapeBuilder, Region, SyntheticLandscape};

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deeptune::multi_metric_score;
use crate::seeding::{self, Purpose};
use crate::space::{ConfigSpace, Configuration, Objective};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("command not found: {0}")]
    CommandNotFound(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("trial did not run; it has no objective value")]
    NotRan,
    #[error("metric `{0}` missing from trial result")]
    MissingMetric(String),
    #[error("invalid landscape: {0}")]
    Landscape(String),
    #[error("invalid command target: {0}")]
    Target(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrashReason {
    Build,
    BootOrRun,
    Timeout,
    Parse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ran,
    Crashed(CrashReason),
}

/// Outcome of evaluating one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub iteration: u64,
    pub config: Configuration,
    pub outcome: Outcome,
    /// Present iff the trial ran.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metrics: BTreeMap<String, f64>,
    pub build_seconds: f64,
    pub test_seconds: f64,
}

impl TrialResult {
    pub fn crashed(&self) -> bool {
        matches!(self.outcome, Outcome::Crashed(_))
    }

    pub fn ran(&self) -> bool {
        self.outcome == Outcome::Ran
    }
}

/// Observed min/max per metric.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub bounds: BTreeMap<String, (f64, f64)>,
}

impl MetricStats {
    pub fn observe(&mut self, metrics: &BTreeMap<String, f64>) {
        for (name, &v) in metrics {
            if !v.is_finite() {
                continue;
            }
            self.bounds
                .entry(name.clone())
                .and_modify(|(lo, hi)| {
                    *lo = lo.min(v);
                    *hi = hi.max(v);
                })
                .or_insert((v, v));
        }
    }

    pub fn get(&self, name: &str) -> Option<(f64, f64)> {
        self.bounds.get(name).copied()
    }
}

/// Scalar objective of a ran trial, framed so that larger is better.
pub fn objective_value(
    result: &TrialResult,
    objective: &Objective,
    stats: &MetricStats,
) -> Result<f64, HarnessError> {
    if !result.ran() {
        return Err(HarnessError::NotRan);
    }
    match objective {
        Objective::Single { metric, direction } => result
            .metrics
            .get(metric)
            .map(|v| v * direction.sign())
            .ok_or_else(|| HarnessError::MissingMetric(metric.clone())),
        Objective::Multi { metrics } => {
            for name in metrics.keys() {
                if !result.metrics.contains_key(name) {
                    return Err(HarnessError::MissingMetric(name.clone()));
                }
            }
            let weights: BTreeMap<String, f64> =
                metrics.iter().map(|(k, w)| (k.clone(), w.signed())).collect();
            Ok(multi_metric_score(&result.metrics, stats, &weights))
        }
    }
}

/// Evaluator description as written in job files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvaluatorSpec {
    Synthetic { landscape: SyntheticLandscape },
    Command(CommandTarget),
}

impl EvaluatorSpec {
    pub fn validate(&self, space: &ConfigSpace) -> Result<(), HarnessError> {
        match self {
            EvaluatorSpec::Synthetic { landscape } => landscape.validate(space),
            EvaluatorSpec::Command(t) => t.validate(),
        }
    }
}

/// A stateful evaluator for one session.
#[derive(Debug)]
pub enum Evaluator {
    Synthetic {
        landscape: SyntheticLandscape,
        seed: u64,
    },
    Command(CommandEvaluator),
}

impl Evaluator {
    /// `workdir` holds per-trial files for command targets.
    pub fn new(spec: &EvaluatorSpec, seed: u64, workdir: PathBuf) -> Self {
        match spec {
            EvaluatorSpec::Synthetic { landscape } => Evaluator::Synthetic {
                landscape: landscape.clone(),
                seed,
            },
            EvaluatorSpec::Command(target) => {
                Evaluator::Command(CommandEvaluator::new(target.clone(), workdir))
            }
        }
    }

    pub fn evaluate(
        &mut self,
        space: &ConfigSpace,
        config: &Configuration,
        iteration: u64,
        objective: &Objective,
    ) -> Result<TrialResult, HarnessError> {
        match self {
            Evaluator::Synthetic { landscape, seed } => {
                let mut rng = seeding::stream(*seed, Purpose::Evaluate, iteration);
                Ok(landscape.evaluate(space, config, iteration, &mut rng))
            }
            Evaluator::Command(ev) => ev.evaluate(space, config, iteration, objective),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{Direction, MetricWeight};

    fn ran(metrics: &[(&str, f64)]) -> TrialResult {
        TrialResult {
            iteration: 0,
            config: Configuration::default(),
            outcome: Outcome::Ran,
            metrics: metrics.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            build_seconds: 0.0,
            test_seconds: 0.0,
        }
    }

    #[test]
    fn minimized_metric_is_negated() {
        let obj = Objective::Single {
            metric: "latency".into(),
            direction: Direction::Minimize,
        };
        let v = objective_value(&ran(&[("latency", 284.0)]), &obj, &MetricStats::default()).unwrap();
        assert_eq!(v, -284.0);
        let obj = Objective::maximize("rps");
        let v = objective_value(&ran(&[("rps", 42.5)]), &obj, &MetricStats::default()).unwrap();
        assert_eq!(v, 42.5);
    }

    #[test]
    fn multi_metric_boundary() {
        let obj = Objective::Multi {
            metrics: [
                ("t".to_string(), MetricWeight { weight: 1.0, direction: Direction::Maximize }),
                ("m".to_string(), MetricWeight { weight: 1.0, direction: Direction::Minimize }),
            ]
            .into_iter()
            .collect(),
        };
        let mut stats = MetricStats::default();
        stats.observe(&ran(&[("t", 10.0), ("m", 300.0)]).metrics);
        stats.observe(&ran(&[("t", 20.0), ("m", 330.0)]).metrics);
        let best = objective_value(&ran(&[("t", 20.0), ("m", 300.0)]), &obj, &stats).unwrap();
        assert_eq!(best, 1.0);
    }

    #[test]
    fn missing_metric_and_crash_are_errors() {
        let obj = Objective::maximize("rps");
        assert_eq!(
            objective_value(&ran(&[("x", 1.0)]), &obj, &MetricStats::default()),
            Err(HarnessError::MissingMetric("rps".into()))
        );
        let mut r = ran(&[]);
        r.outcome = Outcome::Crashed(CrashReason::Timeout);
        assert_eq!(objective_value(&r, &obj, &MetricStats::default()), Err(HarnessError::NotRan));
    }

    #[test]
    fn outcome_wire_format() {
        assert_eq!(serde_json::to_string(&Outcome::Ran).unwrap(), "\"ran\"");
        assert_eq!(
            serde_json::to_string(&Outcome::Crashed(CrashReason::BootOrRun)).unwrap(),
            "{\"crashed\":\"boot_or_run\"}"
        );
    }
}
