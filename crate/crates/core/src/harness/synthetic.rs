//! Synthetic landscapes with a known optimum and known crash regions.
//!
//! The metric is a weighted sum of unimodal bumps, one per important
//! parameter, each peaking at a designated best value; every other parameter
//! contributes nothing. A configuration crashes when it falls in any crash box
//! (a conjunction of per-parameter regions).

use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CrashReason, HarnessError, Outcome, TrialResult};
use crate::space::{ConfigSpace, Configuration, Domain, ParameterDef, Stage, StageWeights, Value};

/// Contribution `weight · exp(-(u - u*)² / (2·width²))` of one parameter,
/// where `u` is the value's position in `[0, 1]` and `u*` that of `best`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub param: String,
    pub weight: f64,
    pub best: Value,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// Inclusive numeric interval (booleans read as 0/1).
    Range([f64; 2]),
    Values(Vec<Value>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    pub param: String,
    pub region: Region,
}

/// Crash when every condition holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrashBox {
    pub all_of: Vec<Condition>,
}

fn default_metric() -> String {
    "perf".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticLandscape {
    #[serde(default = "default_metric")]
    pub metric: String,
    pub important: Vec<Bump>,
    #[serde(default)]
    pub crash_regions: Vec<CrashBox>,
    #[serde(default)]
    pub noise_std: f64,
}

impl Region {
    fn contains(&self, v: &Value) -> bool {
        match self {
            Region::Range([lo, hi]) => v.as_f64().is_some_and(|x| x >= *lo && x <= *hi),
            Region::Values(vals) => vals.iter().any(|w| w == v || (w.as_f64().is_some() && w.as_f64() == v.as_f64())),
        }
    }

    /// Probability that a uniform draw from `domain` lands in the region.
    fn probability(&self, domain: &Domain) -> f64 {
        match (self, domain) {
            (Region::Range([a, b]), Domain::Integer { lo, hi }) => {
                let from = (a.ceil() as i64).max(*lo);
                let to = (b.floor() as i64).min(*hi);
                if to < from {
                    0.0
                } else {
                    (to - from + 1) as f64 / (hi - lo + 1) as f64
                }
            }
            (Region::Range([a, b]), Domain::Continuous { lo, hi }) => {
                if hi > lo {
                    ((b.min(*hi) - a.max(*lo)) / (hi - lo)).max(0.0)
                } else {
                    f64::from(u8::from(*a <= *lo && *lo <= *b))
                }
            }
            (Region::Range(_), Domain::Boolean) => {
                [0.0, 1.0].iter().filter(|x| self.contains(&Value::Float(**x))).count() as f64 / 2.0
            }
            (Region::Values(_), Domain::Boolean) => {
                [false, true].iter().filter(|b| self.contains(&Value::Bool(**b))).count() as f64 / 2.0
            }
            (Region::Values(_), Domain::Categorical { choices } | Domain::Text { choices }) => {
                choices.iter().filter(|c| self.contains(&Value::Text((*c).clone()))).count() as f64
                    / choices.len() as f64
            }
            (Region::Values(vals), Domain::Integer { lo, hi }) => {
                let hits: BTreeSet<i64> = vals
                    .iter()
                    .filter_map(|v| match v {
                        Value::Int(i) if i >= lo && i <= hi => Some(*i),
                        _ => None,
                    })
                    .collect();
                hits.len() as f64 / (hi - lo + 1) as f64
            }
            _ => 0.0,
        }
    }
}

impl SyntheticLandscape {
    pub fn validate(&self, space: &ConfigSpace) -> Result<(), HarnessError> {
        let err = |m: String| Err(HarnessError::Landscape(m));
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return err(format!("noise_std must be finite and >= 0, got {}", self.noise_std));
        }
        for b in &self.important {
            let Some(p) = space.param(&b.param) else {
                return err(format!("bump on unknown parameter `{}`", b.param));
            };
            if let Err(r) = p.domain.coerce(&b.best) {
                return err(format!("best value of `{}`: {r}", b.param));
            }
            if !(b.weight >= 0.0) || !b.weight.is_finite() || !(b.width > 0.0) || !b.width.is_finite() {
                return err(format!("bump on `{}` needs weight >= 0 and width > 0", b.param));
            }
        }
        for c in self.crash_regions.iter().flat_map(|b| &b.all_of) {
            if space.param(&c.param).is_none() {
                return err(format!("crash condition on unknown parameter `{}`", c.param));
            }
        }
        let (opt, _) = self.optimum(space);
        if self.crashes(&opt) {
            return err("the optimum configuration lies inside a crash region".into());
        }
        Ok(())
    }

    pub fn crashes(&self, config: &Configuration) -> bool {
        self.crash_regions.iter().any(|b| {
            !b.all_of.is_empty()
                && b.all_of
                    .iter()
                    .all(|c| config.get(&c.param).is_some_and(|v| c.region.contains(v)))
        })
    }

    /// Noise-free metric value.
    pub fn value(&self, space: &ConfigSpace, config: &Configuration) -> f64 {
        self.important
            .iter()
            .map(|b| {
                let Some(p) = space.param(&b.param) else {
                    return 0.0;
                };
                let v = config.get(&b.param).unwrap_or(&p.default);
                let u = p.domain.unit_position(v);
                let best = p.domain.unit_position(&b.best);
                let d = u - best;
                b.weight * (-(d * d) / (2.0 * b.width * b.width)).exp()
            })
            .sum()
    }

    /// Important parameters at their best values, everything else at rest.
    pub fn optimum(&self, space: &ConfigSpace) -> (Configuration, f64) {
        let mut config = space.default_config();
        for b in &self.important {
            if let Some(p) = space.param(&b.param) {
                if p.fixed.is_none() {
                    if let Ok(v) = p.domain.coerce(&b.best) {
                        config.set(b.param.clone(), v);
                    }
                }
            }
        }
        let value = self.value(space, &config);
        (config, value)
    }

    /// Exact crash probability under uniform sampling of every parameter.
    ///
    /// `None` when two boxes share a parameter (the boxes are then not independent).
    pub fn crash_fraction(&self, space: &ConfigSpace) -> Option<f64> {
        let mut seen = BTreeSet::new();
        let mut survive = 1.0;
        for b in &self.crash_regions {
            let mut p_box = 1.0;
            for c in &b.all_of {
                if !seen.insert(c.param.clone()) {
                    return None;
                }
                let p = space.param(&c.param)?;
                p_box *= c.region.probability(&p.domain);
            }
            if b.all_of.is_empty() {
                p_box = 0.0;
            }
            survive *= 1.0 - p_box;
        }
        Some(1.0 - survive)
    }

    pub fn evaluate<R: Rng + ?Sized>(
        &self,
        space: &ConfigSpace,
        config: &Configuration,
        iteration: u64,
        rng: &mut R,
    ) -> TrialResult {
        let mut result = TrialResult {
            iteration,
            config: config.clone(),
            outcome: Outcome::Ran,
            metrics: Default::default(),
            build_seconds: 0.0,
            test_seconds: 0.0,
        };
        if self.crashes(config) {
            result.outcome = Outcome::Crashed(CrashReason::BootOrRun);
            return result;
        }
        let mut v = self.value(space, config);
        if self.noise_std > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            v += self.noise_std * z;
        }
        result.metrics.insert(self.metric.clone(), v);
        result
    }

    fn used_params(&self) -> BTreeSet<String> {
        self.important
            .iter()
            .map(|b| b.param.clone())
            .chain(self.crash_regions.iter().flat_map(|b| b.all_of.iter().map(|c| c.param.clone())))
            .collect()
    }

    /// A landscape over the same space and crash regions that keeps `shared`
    /// of this landscape's bumps and replaces the rest with fresh parameters.
    pub fn related<R: Rng + ?Sized>(&self, space: &ConfigSpace, shared: usize, width: f64, rng: &mut R) -> Self {
        let shared = shared.min(self.important.len());
        let keep = index::sample(rng, self.important.len(), shared).into_vec();
        let mut important: Vec<Bump> = keep.iter().map(|&i| self.important[i].clone()).collect();
        let fresh = self.important.len() - shared;
        important.extend(fresh_bumps(space, &self.used_params(), fresh, width, rng));
        Self {
            metric: self.metric.clone(),
            important,
            crash_regions: self.crash_regions.clone(),
            noise_std: self.noise_std,
        }
    }
}

fn fresh_bumps<R: Rng + ?Sized>(
    space: &ConfigSpace,
    exclude: &BTreeSet<String>,
    count: usize,
    width: f64,
    rng: &mut R,
) -> Vec<Bump> {
    let mut pool: Vec<&ParameterDef> = space
        .params()
        .iter()
        .filter(|p| !exclude.contains(&p.name) && p.fixed.is_none())
        .collect();
    pool.shuffle(rng);
    pool.into_iter()
        .take(count)
        .map(|p| Bump {
            param: p.name.clone(),
            weight: rng.gen_range(0.5..=1.5),
            best: best_value(&p.domain, rng),
            width,
        })
        .collect()
}

fn best_value<R: Rng + ?Sized>(domain: &Domain, rng: &mut R) -> Value {
    match domain {
        Domain::Integer { lo, hi } => {
            let u = rng.gen_range(0.1..=0.9);
            Value::Int(lo + ((hi - lo) as f64 * u).round() as i64)
        }
        Domain::Continuous { lo, hi } => Value::Float(lo + (hi - lo) * rng.gen_range(0.1..=0.9)),
        other => other.sample(rng),
    }
}

/// Generates random landscapes over a mixed-kind, run-stage space.
#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeBuilder {
    pub dims: usize,
    pub important: usize,
    pub crash_fraction: f64,
    /// Conditions per crash box; one box per entry.
    pub crash_box_sizes: Vec<usize>,
    pub noise_std: f64,
    pub bump_width: f64,
}

impl Default for LandscapeBuilder {
    /// 50 parameters, 8 important, 30 % of the space crashing.
    fn default() -> Self {
        Self {
            dims: 50,
            important: 8,
            crash_fraction: 0.30,
            crash_box_sizes: vec![1, 2, 2],
            noise_std: 0.01,
            bump_width: 0.15,
        }
    }
}

impl LandscapeBuilder {
    /// Build the space and its landscape.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(ConfigSpace, SyntheticLandscape), HarnessError> {
        let crash_params: usize = self.crash_box_sizes.iter().sum();
        let continuous = (0..self.dims).filter(|i| i % 5 == 1 || i % 5 == 4).count();
        if crash_params > continuous || self.important + crash_params > self.dims {
            return Err(HarnessError::Landscape(format!(
                "{} dims cannot hold {} important and {crash_params} crash parameters",
                self.dims, self.important
            )));
        }
        if !(0.0..1.0).contains(&self.crash_fraction) {
            return Err(HarnessError::Landscape("crash fraction must be in [0, 1)".into()));
        }

        let mut params = Vec::with_capacity(self.dims);
        for i in 0..self.dims {
            // Defaults sit in the lower part of each range; crash intervals at the top.
            let rest = rng.gen_range(0.0..0.3);
            let (name, domain, default) = match i % 5 {
                0 => {
                    let hi = rng.gen_range(50..=5000);
                    (format!("int_{i:02}"), Domain::Integer { lo: 0, hi }, Value::Int((hi as f64 * rest) as i64))
                }
                1 | 4 => {
                    let hi = rng.gen_range(1.0..100.0);
                    (format!("real_{i:02}"), Domain::Continuous { lo: 0.0, hi }, Value::Float(hi * rest))
                }
                2 => (format!("flag_{i:02}"), Domain::Boolean, Value::Bool(rng.gen_bool(0.5))),
                _ => {
                    let n = rng.gen_range(3..=6);
                    let choices: Vec<String> = (0..n).map(|c| format!("c{c}")).collect();
                    let default = Value::Text(choices[0].clone());
                    (format!("cat_{i:02}"), Domain::Categorical { choices }, default)
                }
            };
            params.push(
                ParameterDef::new(name, domain, Stage::Run, default, None)
                    .expect("generated parameters are valid"),
            );
        }
        let space = ConfigSpace::new(params, Some(StageWeights::new(0.0, 0.0, 1.0).expect("valid")))
            .expect("generated names are unique");

        let mut continuous_idx: Vec<usize> = (0..self.dims).filter(|i| i % 5 == 1 || i % 5 == 4).collect();
        continuous_idx.shuffle(rng);
        let boxes = self.crash_box_sizes.len().max(1) as f64;
        let p_box = 1.0 - (1.0 - self.crash_fraction).powf(1.0 / boxes);
        let mut crash_regions = Vec::new();
        let mut cursor = continuous_idx.into_iter();
        for &size in &self.crash_box_sizes {
            let q = p_box.powf(1.0 / size.max(1) as f64);
            let all_of = (0..size)
                .map(|_| {
                    let p = &space.params()[cursor.next().expect("checked above")];
                    let Domain::Continuous { lo, hi } = p.domain else {
                        unreachable!("crash parameters are continuous")
                    };
                    Condition {
                        param: p.name.clone(),
                        region: Region::Range([hi - (hi - lo) * q, hi]),
                    }
                })
                .collect();
            crash_regions.push(CrashBox { all_of });
        }

        let mut landscape = SyntheticLandscape {
            metric: default_metric(),
            important: Vec::new(),
            crash_regions,
            noise_std: self.noise_std,
        };
        landscape.important =
            fresh_bumps(&space, &landscape.used_params(), self.important, self.bump_width, rng);
        landscape.validate(&space)?;
        Ok((space, landscape))
    }
}
