use serde::{Deserialize, Serialize};

use super::{SearchContext, Strategy, StrategyError};
use crate::space::{ConfigSpace, Configuration, Domain, ParameterDef, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridParams {
    /// Levels per integer or continuous parameter.
    pub levels: usize,
}

impl Default for GridParams {
    fn default() -> Self {
        Self { levels: 10 }
    }
}

impl GridParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.levels < 2 {
            return Err("levels must be >= 2".into());
        }
        Ok(())
    }
}

/// Move `default` to the front; if it is not a level, it replaces the nearest one.
fn default_first(mut levels: Vec<Value>, default: &Value) -> Vec<Value> {
    if let Some(i) = levels.iter().position(|v| v == default) {
        let d = levels.remove(i);
        levels.insert(0, d);
        return levels;
    }
    if let Some(dv) = default.as_f64() {
        if let Some((i, _)) = levels
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.as_f64().map(|x| (i, (x - dv).abs())))
            .min_by(|a, b| a.1.total_cmp(&b.1))
        {
            levels.remove(i);
        }
    }
    levels.insert(0, default.clone());
    levels
}

/// Discretized values of one parameter, default first.
pub fn grid_levels(param: &ParameterDef, levels: usize, varies: bool) -> Vec<Value> {
    let default = param.resting_value().clone();
    if !varies || param.fixed.is_some() {
        return vec![default];
    }
    let all = match &param.domain {
        Domain::Boolean => vec![Value::Bool(false), Value::Bool(true)],
        Domain::Categorical { choices } | Domain::Text { choices } => {
            choices.iter().cloned().map(Value::Text).collect()
        }
        Domain::Integer { lo, hi } => {
            let span = (hi - lo) as u64 + 1;
            if span <= levels as u64 {
                (*lo..=*hi).map(Value::Int).collect()
            } else {
                let mut v: Vec<i64> = (0..levels)
                    .map(|k| lo + ((hi - lo) as f64 * k as f64 / (levels - 1) as f64).round() as i64)
                    .collect();
                v.dedup();
                v.into_iter().map(Value::Int).collect()
            }
        }
        Domain::Continuous { lo, hi } => (0..levels)
            .map(|k| Value::Float(lo + (hi - lo) * k as f64 / (levels - 1) as f64))
            .collect(),
    };
    default_first(all, &default)
}

/// Mixed-radix traversal of the discretized cross-product; the first
/// parameter changes fastest. Iteration `n` of the search visits point `n`.
#[derive(Debug, Clone)]
pub struct GridStrategy {
    levels: Vec<(String, Vec<Value>)>,
}

impl GridStrategy {
    pub fn new(space: &ConfigSpace, params: &GridParams) -> Self {
        let weights = space.stage_weights();
        let levels = space
            .params()
            .iter()
            .map(|p| (p.name.clone(), grid_levels(p, params.levels, weights.get(p.stage) > 0.0)))
            .collect();
        Self { levels }
    }

    /// Number of grid points, saturating at `u128::MAX`.
    pub fn size(&self) -> u128 {
        self.levels
            .iter()
            .fold(1u128, |acc, (_, l)| acc.saturating_mul(l.len() as u128))
    }

    pub fn point(&self, mut index: u128) -> Option<Configuration> {
        if index >= self.size() {
            return None;
        }
        Some(
            self.levels
                .iter()
                .map(|(name, l)| {
                    let radix = l.len() as u128;
                    let v = l[(index % radix) as usize].clone();
                    index /= radix;
                    (name.clone(), v)
                })
                .collect(),
        )
    }
}

impl Strategy for GridStrategy {
    fn name(&self) -> &'static str {
        "grid"
    }

    fn propose(&mut self, ctx: &SearchContext<'_>) -> Result<Configuration, StrategyError> {
        let n = ctx.iteration();
        self.point(n as u128).ok_or(StrategyError::Exhausted(n))
    }
}
