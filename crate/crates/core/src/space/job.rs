//! Job files: the space plus evaluator, objective, budget, strategy and seed.
//!
//! JSON and YAML are both accepted; a document whose first non-blank
//! character is `{` is read as JSON.

use std::collections::BTreeMap;
use std::path::PathBuf;

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ConfigSpace, Domain, Kind, ParameterDef, SpaceError, Stage, StageWeights, Value};
use crate::harness::EvaluatorSpec;
use crate::strategies::StrategyConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Maximize => 1.0,
            Direction::Minimize => -1.0,
        }
    }
}

/// Nonnegative weight plus direction for one metric of a multi-metric objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricWeight {
    pub weight: f64,
    pub direction: Direction,
}

impl MetricWeight {
    /// Weight with the direction folded into its sign.
    pub fn signed(&self) -> f64 {
        self.weight * self.direction.sign()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Objective {
    Single { metric: String, direction: Direction },
    Multi { metrics: BTreeMap<String, MetricWeight> },
}

impl Objective {
    pub fn maximize(metric: impl Into<String>) -> Self {
        Objective::Single {
            metric: metric.into(),
            direction: Direction::Maximize,
        }
    }

    /// Names of the metrics the evaluator must report.
    pub fn metric_names(&self) -> Vec<&str> {
        match self {
            Objective::Single { metric, .. } => vec![metric.as_str()],
            Objective::Multi { metrics } => metrics.keys().map(String::as_str).collect(),
        }
    }
}

/// Stop after this many iterations or this much wall-clock time, whichever comes first.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_secs: Option<f64>,
}

impl Budget {
    pub fn iterations(n: u64) -> Self {
        Self {
            iterations: Some(n),
            wall_clock_secs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub params: serde_json::Map<String, serde_json::Value>,
}

impl StrategySpec {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            params: Default::default(),
        }
    }
}

impl Default for StrategySpec {
    fn default() -> Self {
        Self::named("random")
    }
}

/// A validated job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    pub space: ConfigSpace,
    pub evaluator: EvaluatorSpec,
    pub objective: Objective,
    pub budget: Budget,
    #[serde(default)]
    pub strategy: StrategySpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warm_start: Option<PathBuf>,
}

impl JobSpec {
    /// Check cross-field invariants.
    pub fn validate(&self) -> Result<(), SpaceError> {
        if self.budget.iterations.is_none() && self.budget.wall_clock_secs.is_none() {
            return Err(SpaceError::Job(
                "budget needs `iterations` and/or `wall_clock_secs`".into(),
            ));
        }
        if let Some(w) = self.budget.wall_clock_secs {
            if !(w >= 0.0) {
                return Err(SpaceError::Job(format!("wall_clock_secs must be >= 0, got {w}")));
            }
        }
        match &self.objective {
            Objective::Single { metric, .. } if metric.is_empty() => {
                return Err(SpaceError::Job("objective metric name is empty".into()))
            }
            Objective::Multi { metrics } => {
                if metrics.is_empty() {
                    return Err(SpaceError::Job("multi-metric objective has no metrics".into()));
                }
                for (name, w) in metrics {
                    if !(w.weight >= 0.0) || !w.weight.is_finite() {
                        return Err(SpaceError::Job(format!(
                            "metric `{name}`: weight must be finite and nonnegative, got {}",
                            w.weight
                        )));
                    }
                }
            }
            _ => {}
        }
        self.evaluator
            .validate(&self.space)
            .map_err(|e| SpaceError::Job(format!("evaluator: {e}")))?;
        StrategyConfig::from_spec(&self.strategy)
            .map_err(|e| SpaceError::Job(format!("strategy: {e}")))?;
        Ok(())
    }

    /// Identity of the search problem, used to refuse resuming a foreign log.
    ///
    /// The budget is left out so a session can be resumed with a larger one.
    pub fn fingerprint(&self) -> String {
        let ident = serde_json::json!({
            "space": &self.space,
            "evaluator": &self.evaluator,
            "objective": &self.objective,
            "strategy": &self.strategy,
            "seed": self.seed,
            "warm_start": &self.warm_start,
        });
        let digest = Sha256::digest(ident.to_string().as_bytes());
        hex::encode(&digest[..16])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("job serializes")
    }
}

/// Parse and validate a job document.
pub fn parse_job(text: &str) -> Result<JobSpec, SpaceError> {
    let job: JobSpec = if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| {
            use serde_json::error::Category;
            match e.classify() {
                Category::Syntax | Category::Eof | Category::Io => SpaceError::Syntax {
                    line: e.line(),
                    column: e.column(),
                    message: e.to_string(),
                },
                Category::Data => unwrap_space_error(e.to_string()),
            }
        })?
    } else {
        serde_yaml::from_str(text).map_err(|e| match e.location() {
            Some(loc) if !e.to_string().contains(SEMANTIC_TAG) => SpaceError::Syntax {
                line: loc.line(),
                column: loc.column(),
                message: e.to_string(),
            },
            _ => unwrap_space_error(e.to_string()),
        })?
    };
    job.validate()?;
    Ok(job)
}

const SEMANTIC_TAG: &str = "[semantic] ";

fn unwrap_space_error(message: String) -> SpaceError {
    match message.find(SEMANTIC_TAG) {
        Some(i) => {
            let rest = &message[i + SEMANTIC_TAG.len()..];
            SpaceError::Job(rest.to_string())
        }
        None => SpaceError::Job(message),
    }
}

// ---- wire format of spaces -------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParam {
    name: String,
    kind: Kind,
    #[serde(default)]
    stage: Stage,
    default: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    range: Option<[Value; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    choices: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fixed: Option<Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawSpace {
    params: Vec<RawParam>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stage_weights: Option<BTreeMap<Stage, f64>>,
}

fn semantic(name: &str, reason: impl std::fmt::Display) -> String {
    format!("{SEMANTIC_TAG}parameter `{name}`: {reason}")
}

impl RawParam {
    fn into_def(self) -> Result<Option<ParameterDef>, String> {
        let name = self.name.clone();
        let bound = |v: &Value| {
            v.as_f64()
                .filter(|_| !matches!(v, Value::Bool(_)))
                .ok_or_else(|| semantic(&name, format!("range bound {v} is not a number")))
        };
        let domain = match self.kind {
            Kind::Boolean => Domain::Boolean,
            Kind::Integer => {
                let [lo, hi] = self
                    .range
                    .as_ref()
                    .ok_or_else(|| semantic(&name, "integer parameter needs `range`"))?;
                match (lo, hi) {
                    (Value::Int(lo), Value::Int(hi)) => Domain::Integer { lo: *lo, hi: *hi },
                    _ => return Err(semantic(&name, "integer range bounds must be integers")),
                }
            }
            Kind::Continuous => {
                let [lo, hi] = self
                    .range
                    .as_ref()
                    .ok_or_else(|| semantic(&name, "continuous parameter needs `range`"))?;
                Domain::Continuous {
                    lo: bound(lo)?,
                    hi: bound(hi)?,
                }
            }
            Kind::Categorical => Domain::Categorical {
                choices: self
                    .choices
                    .clone()
                    .ok_or_else(|| semantic(&name, "categorical parameter needs `choices`"))?,
            },
            Kind::String => match self.choices.clone() {
                Some(choices) => Domain::Text { choices },
                None => {
                    warn!("string parameter `{name}` has no enumerated choices; excluded from the space");
                    return Ok(None);
                }
            },
        };
        ParameterDef::new(self.name, domain, self.stage, self.default, self.fixed)
            .map(Some)
            .map_err(|e| format!("{SEMANTIC_TAG}{e}"))
    }
}

impl TryFrom<RawSpace> for ConfigSpace {
    type Error = String;

    fn try_from(raw: RawSpace) -> Result<Self, Self::Error> {
        let mut params = Vec::with_capacity(raw.params.len());
        for p in raw.params {
            if let Some(def) = p.into_def()? {
                params.push(def);
            }
        }
        let weights = match raw.stage_weights {
            Some(map) => {
                let get = |s| map.get(&s).copied().unwrap_or(0.0);
                Some(
                    StageWeights::new(get(Stage::Compile), get(Stage::Boot), get(Stage::Run))
                        .map_err(|e| format!("{SEMANTIC_TAG}{e}"))?,
                )
            }
            None => None,
        };
        ConfigSpace::new(params, weights).map_err(|e| format!("{SEMANTIC_TAG}{e}"))
    }
}

impl From<ConfigSpace> for RawSpace {
    fn from(space: ConfigSpace) -> Self {
        let params = space
            .params()
            .iter()
            .map(|p| {
                let (range, choices) = match &p.domain {
                    Domain::Boolean => (None, None),
                    Domain::Integer { lo, hi } => (Some([Value::Int(*lo), Value::Int(*hi)]), None),
                    Domain::Continuous { lo, hi } => {
                        (Some([Value::Float(*lo), Value::Float(*hi)]), None)
                    }
                    Domain::Categorical { choices } | Domain::Text { choices } => {
                        (None, Some(choices.clone()))
                    }
                };
                RawParam {
                    name: p.name.clone(),
                    kind: p.kind(),
                    stage: p.stage,
                    default: p.default.clone(),
                    range,
                    choices,
                    fixed: p.fixed.clone(),
                }
            })
            .collect();
        RawSpace {
            params,
            stage_weights: Some(space.stage_weights().as_map()),
        }
    }
}

impl Serialize for ConfigSpace {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        RawSpace::from(self.clone()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ConfigSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawSpace::deserialize(d)?;
        ConfigSpace::try_from(raw).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn job(params: &str, budget: &str) -> String {
        format!(
            r#"{{
  "space": {{ "params": [{params}] }},
  "evaluator": {{ "kind": "command", "test": "echo 1", "timeout_secs": 5 }},
  "objective": {{ "metric": "perf", "direction": "maximize" }},
  "budget": {budget},
  "strategy": {{ "name": "random" }},
  "seed": 3
}}"#
        )
    }

    #[test]
    fn minimal_boolean_job() {
        let j = parse_job(&job(
            r#"{"name": "f", "kind": "boolean", "default": false}"#,
            r#"{"iterations": 10}"#,
        ))
        .unwrap();
        assert_eq!(j.space.len(), 1);
        assert_eq!(j.space.params()[0].kind(), Kind::Boolean);
        assert_eq!(j.seed, 3);
    }

    #[test]
    fn default_outside_range_names_the_parameter() {
        let err = parse_job(&job(
            r#"{"name": "n", "kind": "integer", "range": [0, 10], "default": 12}"#,
            r#"{"iterations": 10}"#,
        ))
        .unwrap_err();
        match err {
            SpaceError::Job(msg) => assert!(msg.contains("`n`"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_report_position() {
        let err = parse_job("{\n  \"space\": [,\n}").unwrap_err();
        assert!(matches!(err, SpaceError::Syntax { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn both_budget_bounds_are_kept() {
        let j = parse_job(&job(
            r#"{"name": "f", "kind": "boolean", "default": false}"#,
            r#"{"iterations": 250, "wall_clock_secs": 10800}"#,
        ))
        .unwrap();
        assert_eq!(j.budget.iterations, Some(250));
        assert_eq!(j.budget.wall_clock_secs, Some(10800.0));
    }

    #[test]
    fn empty_budget_is_rejected() {
        let err = parse_job(&job(
            r#"{"name": "f", "kind": "boolean", "default": false}"#,
            "{}",
        ))
        .unwrap_err();
        assert!(matches!(err, SpaceError::Job(_)));
    }

    #[test]
    fn yaml_is_accepted_and_round_trips() {
        let yaml = r#"
space:
  params:
    - { name: somaxconn, kind: integer, range: [128, 65536], default: 4096 }
    - { name: qdisc, kind: string, choices: [pfifo, bfifo, fq], default: pfifo, stage: boot }
    - { name: hostname, kind: string, default: box }
evaluator: { kind: command, test: "echo 1", timeout_secs: 5 }
objective: { metric: rps, direction: maximize }
budget: { iterations: 5 }
"#;
        let j = parse_job(yaml).unwrap();
        // `hostname` has no choices and is dropped.
        assert_eq!(j.space.len(), 2);
        let again = parse_job(&j.to_json()).unwrap();
        assert_eq!(again, j);
        assert_eq!(again.fingerprint(), j.fingerprint());
    }

    #[test]
    fn fingerprint_ignores_budget_but_not_seed() {
        let a = parse_job(&job(
            r#"{"name": "f", "kind": "boolean", "default": false}"#,
            r#"{"iterations": 5}"#,
        ))
        .unwrap();
        let mut b = a.clone();
        b.budget.iterations = Some(10);
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed = 4;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn multi_metric_weights_must_be_nonnegative() {
        let text = job(r#"{"name": "f", "kind": "boolean", "default": false}"#, r#"{"iterations": 5}"#)
            .replace(
                r#"{ "metric": "perf", "direction": "maximize" }"#,
                r#"{ "metrics": { "t": {"weight": -1, "direction": "maximize"} } }"#,
            );
        assert!(parse_job(&text).is_err());
    }
}
