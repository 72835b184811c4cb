//! Typed, staged configuration spaces.
//!
//! A [`ConfigSpace`] is an ordered list of [`ParameterDef`]s plus a weight per
//! lifecycle [`Stage`]. Configurations are plain name → [`Value`] maps that are
//! validated against the space they belong to.

mod encode;
mod infer;
mod job;

pub use encode::{EncodedVector, FeatureEncoding, FeatureSlice, Layout};
pub use infer::{infer_space, InferredSpace, Probe, PROBE_DECADES};
pub use job::{parse_job, Budget, Direction, JobSpec, MetricWeight, Objective, StrategySpec};

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while building, parsing or checking spaces and configurations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("invalid stage weights: {0}")]
    StageWeights(String),
    #[error("configuration is missing parameter `{0}`")]
    MissingValue(String),
    #[error("configuration names unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("parameter `{name}`: value {value} is not valid ({reason})")]
    InvalidValue {
        name: String,
        value: String,
        reason: String,
    },
    #[error("invalid job: {0}")]
    Job(String),
}

/// Lifecycle phase at which a parameter takes effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Compile,
    Boot,
    Run,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Compile, Stage::Boot, Stage::Run];

    /// Compile- and boot-stage values are baked into the built image.
    pub fn requires_build(self) -> bool {
        matches!(self, Stage::Compile | Stage::Boot)
    }
}

impl Default for Stage {
    fn default() -> Self {
        Stage::Run
    }
}

/// Parameter type tag, as written in job files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Boolean,
    Integer,
    Continuous,
    Categorical,
    String,
}

/// A single parameter value.
///
/// Categorical and string parameters both hold [`Value::Text`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            Value::Text(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x}"),
            Value::Text(s) => write!(f, "{s}"),
        }
    }
}

/// The set of values a parameter may take.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Boolean,
    Integer { lo: i64, hi: i64 },
    Continuous { lo: f64, hi: f64 },
    Categorical { choices: Vec<String> },
    Text { choices: Vec<String> },
}

impl Domain {
    pub fn kind(&self) -> Kind {
        match self {
            Domain::Boolean => Kind::Boolean,
            Domain::Integer { .. } => Kind::Integer,
            Domain::Continuous { .. } => Kind::Continuous,
            Domain::Categorical { .. } => Kind::Categorical,
            Domain::Text { .. } => Kind::String,
        }
    }

    /// Choices of an enumerated domain.
    pub fn choices(&self) -> Option<&[String]> {
        match self {
            Domain::Categorical { choices } | Domain::Text { choices } => Some(choices),
            _ => None,
        }
    }

    /// Coerce `value` into this domain's canonical representation, or explain why not.
    pub fn coerce(&self, value: &Value) -> Result<Value, String> {
        match (self, value) {
            (Domain::Boolean, Value::Bool(b)) => Ok(Value::Bool(*b)),
            (Domain::Boolean, Value::Int(i)) if *i == 0 || *i == 1 => Ok(Value::Bool(*i == 1)),
            (Domain::Integer { lo, hi }, Value::Int(i)) => {
                if i < lo || i > hi {
                    Err(format!("outside [{lo}, {hi}]"))
                } else {
                    Ok(Value::Int(*i))
                }
            }
            (Domain::Integer { lo, hi }, Value::Float(f)) if f.fract() == 0.0 && f.is_finite() => {
                let i = *f as i64;
                if i < *lo || i > *hi {
                    Err(format!("outside [{lo}, {hi}]"))
                } else {
                    Ok(Value::Int(i))
                }
            }
            (Domain::Continuous { lo, hi }, v @ (Value::Int(_) | Value::Float(_))) => {
                let x = v.as_f64().unwrap_or(f64::NAN);
                if !x.is_finite() || x < *lo || x > *hi {
                    Err(format!("outside [{lo}, {hi}]"))
                } else {
                    Ok(Value::Float(x))
                }
            }
            (Domain::Categorical { choices } | Domain::Text { choices }, Value::Text(s)) => {
                if choices.iter().any(|c| c == s) {
                    Ok(Value::Text(s.clone()))
                } else {
                    Err(format!("not one of {choices:?}"))
                }
            }
            (d, v) => Err(format!("{v:?} does not match kind {:?}", d.kind())),
        }
    }

    /// Position of a (valid) value inside the domain, scaled to `[0, 1]`.
    ///
    /// Booleans map to 0/1, enumerated kinds to `index / (len - 1)`, ranged
    /// kinds linearly over the declared range. Degenerate domains map to 0.
    pub fn unit_position(&self, value: &Value) -> f64 {
        match (self, value) {
            (Domain::Boolean, Value::Bool(b)) => f64::from(u8::from(*b)),
            (Domain::Integer { lo, hi }, Value::Int(i)) => {
                if hi > lo {
                    (*i - *lo) as f64 / (*hi - *lo) as f64
                } else {
                    0.0
                }
            }
            (Domain::Continuous { lo, hi }, v) => {
                let x = v.as_f64().unwrap_or(*lo);
                if hi > lo {
                    (x - lo) / (hi - lo)
                } else {
                    0.0
                }
            }
            (Domain::Categorical { choices } | Domain::Text { choices }, Value::Text(s)) => {
                let idx = choices.iter().position(|c| c == s).unwrap_or(0);
                if choices.len() > 1 {
                    idx as f64 / (choices.len() - 1) as f64
                } else {
                    0.0
                }
            }
            _ => 0.0,
        }
    }

    /// Draw a value uniformly over the domain.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Value {
        match self {
            Domain::Boolean => Value::Bool(rng.gen_bool(0.5)),
            Domain::Integer { lo, hi } => Value::Int(rng.gen_range(*lo..=*hi)),
            Domain::Continuous { lo, hi } => {
                if hi > lo {
                    Value::Float(rng.gen_range(*lo..=*hi))
                } else {
                    Value::Float(*lo)
                }
            }
            Domain::Categorical { choices } | Domain::Text { choices } => {
                Value::Text(choices.choose(rng).cloned().unwrap_or_default())
            }
        }
    }
}

/// One tunable parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterDef {
    pub name: String,
    pub domain: Domain,
    pub stage: Stage,
    pub default: Value,
    pub fixed: Option<Value>,
}

impl ParameterDef {
    /// Build and validate a parameter definition.
    pub fn new(
        name: impl Into<String>,
        domain: Domain,
        stage: Stage,
        default: Value,
        fixed: Option<Value>,
    ) -> Result<Self, SpaceError> {
        let name = name.into();
        let invalid = |reason: String| SpaceError::InvalidParameter {
            name: name.clone(),
            reason,
        };
        if name.is_empty() {
            return Err(invalid("empty name".into()));
        }
        match &domain {
            Domain::Integer { lo, hi } if lo > hi => {
                return Err(invalid(format!("range [{lo}, {hi}] is empty")))
            }
            Domain::Continuous { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo <= hi) => {
                return Err(invalid(format!("range [{lo}, {hi}] is not a finite interval")))
            }
            Domain::Categorical { choices } | Domain::Text { choices } => {
                if choices.is_empty() {
                    return Err(invalid("choices must not be empty".into()));
                }
                for (i, c) in choices.iter().enumerate() {
                    if choices[..i].contains(c) {
                        return Err(invalid(format!("duplicate choice `{c}`")));
                    }
                }
            }
            _ => {}
        }
        let default = domain
            .coerce(&default)
            .map_err(|r| invalid(format!("default {default}: {r}")))?;
        let fixed = match fixed {
            Some(v) => Some(
                domain
                    .coerce(&v)
                    .map_err(|r| invalid(format!("fixed value {v}: {r}")))?,
            ),
            None => None,
        };
        Ok(Self {
            name,
            domain,
            stage,
            default,
            fixed,
        })
    }

    pub fn kind(&self) -> Kind {
        self.domain.kind()
    }

    /// The value this parameter takes when it is not varied.
    pub fn resting_value(&self) -> &Value {
        self.fixed.as_ref().unwrap_or(&self.default)
    }
}

/// Nonnegative sampling weight per stage, summing to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageWeights {
    weights: [f64; 3],
}

impl StageWeights {
    pub fn new(compile: f64, boot: f64, run: f64) -> Result<Self, SpaceError> {
        let weights = [compile, boot, run];
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(SpaceError::StageWeights(format!(
                "weights must be finite and nonnegative, got {weights:?}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SpaceError::StageWeights(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self { weights })
    }

    /// Uniform over the stages that have at least one parameter.
    pub fn uniform_over(params: &[ParameterDef]) -> Self {
        let mut present = [false; 3];
        for p in params {
            present[p.stage as usize] = true;
        }
        let count = present.iter().filter(|p| **p).count();
        if count == 0 {
            return Self {
                weights: [0.0, 0.0, 1.0],
            };
        }
        let w = 1.0 / count as f64;
        let mut weights = [0.0; 3];
        for (slot, p) in weights.iter_mut().zip(present) {
            if p {
                *slot = w;
            }
        }
        Self { weights }
    }

    pub fn get(&self, stage: Stage) -> f64 {
        self.weights[stage as usize]
    }

    pub fn as_map(&self) -> BTreeMap<Stage, f64> {
        Stage::ALL.iter().map(|s| (*s, self.get(*s))).collect()
    }
}

/// An ordered, validated list of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSpace {
    params: Vec<ParameterDef>,
    stage_weights: StageWeights,
}

impl ConfigSpace {
    /// Validate a space. `stage_weights` defaults to uniform over present stages.
    pub fn new(
        params: Vec<ParameterDef>,
        stage_weights: Option<StageWeights>,
    ) -> Result<Self, SpaceError> {
        for (i, p) in params.iter().enumerate() {
            if params[..i].iter().any(|q| q.name == p.name) {
                return Err(SpaceError::DuplicateName(p.name.clone()));
            }
        }
        let stage_weights = stage_weights.unwrap_or_else(|| StageWeights::uniform_over(&params));
        Ok(Self {
            params,
            stage_weights,
        })
    }

    pub fn params(&self) -> &[ParameterDef] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn stage_weights(&self) -> StageWeights {
        self.stage_weights
    }

    pub fn param(&self, name: &str) -> Option<&ParameterDef> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Every parameter at its default (or pinned) value.
    pub fn default_config(&self) -> Configuration {
        Configuration {
            values: self
                .params
                .iter()
                .map(|p| (p.name.clone(), p.resting_value().clone()))
                .collect(),
        }
    }

    /// Check that `config` assigns exactly one valid value to every parameter.
    pub fn validate(&self, config: &Configuration) -> Result<(), SpaceError> {
        for name in config.values.keys() {
            if self.param(name).is_none() {
                return Err(SpaceError::UnknownParameter(name.clone()));
            }
        }
        for p in &self.params {
            let v = config
                .values
                .get(&p.name)
                .ok_or_else(|| SpaceError::MissingValue(p.name.clone()))?;
            let canonical = p.domain.coerce(v).map_err(|reason| SpaceError::InvalidValue {
                name: p.name.clone(),
                value: v.to_string(),
                reason,
            })?;
            if &canonical != v {
                return Err(SpaceError::InvalidValue {
                    name: p.name.clone(),
                    value: v.to_string(),
                    reason: format!("expected {:?} representation", p.kind()),
                });
            }
            if let Some(fixed) = &p.fixed {
                if fixed != v {
                    return Err(SpaceError::InvalidValue {
                        name: p.name.clone(),
                        value: v.to_string(),
                        reason: format!("parameter is fixed to {fixed}"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Bring loosely typed values (e.g. `1` for a continuous parameter) into canonical form.
    pub fn canonicalize(&self, config: &Configuration) -> Result<Configuration, SpaceError> {
        let mut values = BTreeMap::new();
        for p in &self.params {
            let v = config
                .values
                .get(&p.name)
                .ok_or_else(|| SpaceError::MissingValue(p.name.clone()))?;
            let c = p.domain.coerce(v).map_err(|reason| SpaceError::InvalidValue {
                name: p.name.clone(),
                value: v.to_string(),
                reason,
            })?;
            values.insert(p.name.clone(), c);
        }
        let out = Configuration { values };
        self.validate(&out)?;
        Ok(out)
    }

    /// Draw one configuration.
    ///
    /// A single stage is drawn according to the stage weights; parameters of
    /// that stage are drawn uniformly over their domains and every other
    /// parameter keeps its default. Fixed parameters always hold their pin.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        let stage = self.draw_stage(rng);
        let values = self
            .params
            .iter()
            .map(|p| {
                let v = if Some(p.stage) == stage {
                    let drawn = p.domain.sample(rng);
                    p.fixed.clone().unwrap_or(drawn)
                } else {
                    p.resting_value().clone()
                };
                (p.name.clone(), v)
            })
            .collect();
        Configuration { values }
    }

    fn draw_stage<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Stage> {
        let r: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = None;
        for s in Stage::ALL {
            let w = self.stage_weights.get(s);
            if w <= 0.0 {
                continue;
            }
            acc += w;
            last = Some(s);
            if r < acc {
                return Some(s);
            }
        }
        last
    }

    /// Whether moving from `prev` to `next` changes any compile- or boot-stage value.
    pub fn needs_rebuild(&self, prev: &Configuration, next: &Configuration) -> bool {
        self.params
            .iter()
            .filter(|p| p.stage.requires_build())
            .any(|p| prev.values.get(&p.name) != next.values.get(&p.name))
    }

    /// Encoding layout of this space.
    pub fn layout(&self) -> Layout {
        Layout::of(self)
    }

    /// Encode a configuration into its z-scored / one-hot feature vector.
    pub fn encode(&self, config: &Configuration) -> Result<EncodedVector, SpaceError> {
        self.layout().encode(self, config)
    }
}

/// One assignment of values to every parameter of a space.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration {
    pub values: BTreeMap<String, Value>,
}

impl Configuration {
    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values.get(name)
    }

    pub fn set(&mut self, name: impl Into<String>, value: Value) {
        self.values.insert(name.into(), value);
    }

    /// Stable textual key, equal for equal configurations.
    pub fn key(&self) -> String {
        serde_json::to_string(&self.values).unwrap_or_default()
    }
}

impl FromIterator<(String, Value)> for Configuration {
    fn from_iter<I: IntoIterator<Item = (String, Value)>>(iter: I) -> Self {
        Self {
            values: iter.into_iter().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn int_param(name: &str, lo: i64, hi: i64, default: i64, stage: Stage) -> ParameterDef {
        ParameterDef::new(name, Domain::Integer { lo, hi }, stage, Value::Int(default), None).unwrap()
    }

    fn bool_param(name: &str, stage: Stage) -> ParameterDef {
        ParameterDef::new(name, Domain::Boolean, stage, Value::Bool(false), None).unwrap()
    }

    #[test]
    fn default_outside_range_is_rejected() {
        let err = ParameterDef::new(
            "x",
            Domain::Integer { lo: 0, hi: 10 },
            Stage::Run,
            Value::Int(11),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, SpaceError::InvalidParameter { ref name, .. } if name == "x"));
    }

    #[test]
    fn duplicate_choices_and_names_are_rejected() {
        let dup = ParameterDef::new(
            "q",
            Domain::Categorical {
                choices: vec!["a".into(), "a".into()],
            },
            Stage::Run,
            Value::Text("a".into()),
            None,
        );
        assert!(dup.is_err());
        let err = ConfigSpace::new(vec![bool_param("a", Stage::Run), bool_param("a", Stage::Boot)], None)
            .unwrap_err();
        assert_eq!(err, SpaceError::DuplicateName("a".into()));
    }

    #[test]
    fn stage_weights_must_sum_to_one() {
        assert!(StageWeights::new(0.2, 0.2, 0.2).is_err());
        assert!(StageWeights::new(-0.5, 0.5, 1.0).is_err());
        assert!(StageWeights::new(0.0, 0.0, 1.0).is_ok());
    }

    #[test]
    fn default_stage_weights_cover_present_stages() {
        let space = ConfigSpace::new(
            vec![bool_param("a", Stage::Run), bool_param("b", Stage::Compile)],
            None,
        )
        .unwrap();
        let w = space.stage_weights();
        assert_eq!(w.get(Stage::Run), 0.5);
        assert_eq!(w.get(Stage::Compile), 0.5);
        assert_eq!(w.get(Stage::Boot), 0.0);
    }

    #[test]
    fn boolean_sampling_is_balanced() {
        let space = ConfigSpace::new(vec![bool_param("b", Stage::Run)], None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trues = (0..10_000)
            .filter(|_| space.sample_uniform(&mut rng).get("b") == Some(&Value::Bool(true)))
            .count();
        let frac = trues as f64 / 10_000.0;
        assert!((0.47..=0.53).contains(&frac), "fraction {frac}");
    }

    #[test]
    fn fixed_parameter_is_pinned() {
        let p = ParameterDef::new(
            "n",
            Domain::Integer { lo: 0, hi: 100 },
            Stage::Run,
            Value::Int(3),
            Some(Value::Int(7)),
        )
        .unwrap();
        let space = ConfigSpace::new(vec![p], None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(space.sample_uniform(&mut rng).get("n"), Some(&Value::Int(7)));
        }
    }

    #[test]
    fn zero_weight_stages_keep_defaults() {
        let space = ConfigSpace::new(
            vec![
                int_param("c", 0, 100, 50, Stage::Compile),
                int_param("b", 0, 100, 40, Stage::Boot),
                int_param("r", 0, 100, 30, Stage::Run),
            ],
            Some(StageWeights::new(0.0, 0.0, 1.0).unwrap()),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut run_moved = false;
        for _ in 0..1000 {
            let c = space.sample_uniform(&mut rng);
            assert_eq!(c.get("c"), Some(&Value::Int(50)));
            assert_eq!(c.get("b"), Some(&Value::Int(40)));
            run_moved |= c.get("r") != Some(&Value::Int(30));
        }
        assert!(run_moved);
    }

    #[test]
    fn rebuild_only_for_compile_or_boot_changes() {
        let space = ConfigSpace::new(
            vec![
                int_param("c", 0, 10, 5, Stage::Compile),
                int_param("r", 0, 10, 5, Stage::Run),
            ],
            None,
        )
        .unwrap();
        let prev = space.default_config();
        let mut run_only = prev.clone();
        run_only.set("r", Value::Int(9));
        let mut compile = prev.clone();
        compile.set("c", Value::Int(1));
        assert!(!space.needs_rebuild(&prev, &run_only));
        assert!(space.needs_rebuild(&prev, &compile));
        assert!(!space.needs_rebuild(&prev, &prev));
    }

    #[test]
    fn validate_rejects_broken_configs() {
        let space = ConfigSpace::new(vec![int_param("r", 0, 10, 5, Stage::Run)], None).unwrap();
        let mut c = space.default_config();
        c.set("r", Value::Int(11));
        assert!(matches!(space.validate(&c), Err(SpaceError::InvalidValue { .. })));
        c.set("zzz", Value::Int(1));
        assert!(matches!(space.validate(&c), Err(SpaceError::UnknownParameter(_))));
        assert!(matches!(
            space.validate(&Configuration::default()),
            Err(SpaceError::MissingValue(_))
        ));
    }
}
