//! Candidate scoring and selection.

use std::collections::HashSet;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DeepTuneError, DeepTuneModel};
use crate::harness::TrialResult;
use crate::space::{ConfigSpace, Configuration};
use crate::{scalar, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringParams {
    /// Weight of dissimilarity against uncertainty.
    pub alpha: f64,
    /// Uniform candidates drawn per proposal.
    pub pool_size: usize,
    /// Candidates predicted to crash with probability above this are dropped.
    pub crash_gate: f64,
    /// Fraction of the gated pool, ranked by predicted performance, that is
    /// passed on to scoring. `1.0` scores every gated candidate.
    pub exploit_fraction: f64,
}

impl Default for ScoringParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            pool_size: 1000,
            crash_gate: 0.5,
            exploit_fraction: 0.02,
        }
    }
}

impl ScoringParams {
    pub fn validate(&self) -> Result<(), DeepTuneError> {
        let bad = |m: &str| Err(DeepTuneError::Params(m.into()));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must be in [0, 1]");
        }
        if self.pool_size == 0 {
            return bad("pool_size must be >= 1");
        }
        if !(self.crash_gate > 0.0 && self.crash_gate <= 1.0) {
            return bad("crash_gate must be in (0, 1]");
        }
        if !(self.exploit_fraction > 0.0 && self.exploit_fraction <= 1.0) {
            return bad("exploit_fraction must be in (0, 1]");
        }
        Ok(())
    }
}

/// Squared distance from `x` to its nearest row of `known`.
fn nearest_sq(x: &[f64], known: ArrayView2<f64>) -> f64 {
    known
        .rows()
        .into_iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// `1 - 1/(1 + d²)` with `d` the distance from `x` to the nearest known vector.
pub fn dissimilarity(x: &[f64], known: ArrayView2<f64>) -> Result<f64, DeepTuneError> {
    if known.nrows() == 0 {
        return Err(DeepTuneError::EmptyKnown);
    }
    if known.ncols() != x.len() {
        return Err(DeepTuneError::Shape {
            expected: known.ncols(),
            got: x.len(),
        });
    }
    let d2 = nearest_sq(x, known);
    Ok(1.0 - 1.0 / (1.0 + d2))
}

/// `α·ds + (1 − α)·u`.
pub fn score(ds: f64, u: f64, alpha: f64) -> f64 {
    alpha * ds + (1.0 - alpha) * u
}

/// Min-max normalization into `[0, 1]`; all zeros when every value is equal.
pub fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        values.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; values.len()]
    }
}

/// Up to `size` distinct uniform samples that are not in `seen`.
fn fresh_pool<R: Rng + ?Sized>(
    space: &ConfigSpace,
    seen: &HashSet<String>,
    size: usize,
    rng: &mut R,
) -> Vec<Configuration> {
    let mut keys = HashSet::with_capacity(size);
    let mut pool = Vec::with_capacity(size);
    let attempts = size.saturating_mul(20).max(1000);
    for _ in 0..attempts {
        if pool.len() == size {
            break;
        }
        let c = space.sample_uniform(rng);
        let key = c.key();
        if !seen.contains(&key) && keys.insert(key) {
            pool.push(c);
        }
    }
    pool
}

/// Pick the next configuration to evaluate.
///
/// Without a trained model this is a uniform sample outside the history.
/// Otherwise a pool of fresh uniform candidates is crash-gated, narrowed to
/// the best predicted performers, and ranked by [`score`].
pub fn select_next<T: Scalar, R: Rng + ?Sized>(
    space: &ConfigSpace,
    trials: &[TrialResult],
    model: Option<&DeepTuneModel<T>>,
    params: &ScoringParams,
    rng: &mut R,
) -> Result<Configuration, DeepTuneError> {
    params.validate()?;
    let seen: HashSet<String> = trials.iter().map(|t| t.config.key()).collect();
    let model = model.filter(|m| m.is_trained());
    let Some(model) = model else {
        return fresh_pool(space, &seen, 1, rng).pop().ok_or(DeepTuneError::Exhausted);
    };
    let pool = fresh_pool(space, &seen, params.pool_size, rng);
    if pool.is_empty() {
        return Err(DeepTuneError::Exhausted);
    }

    let layout = space.layout();
    if layout.width() != model.input_width() {
        return Err(DeepTuneError::Shape {
            expected: model.input_width(),
            got: layout.width(),
        });
    }
    let mut encoded = Array2::<f64>::zeros((pool.len(), layout.width()));
    let mut buf = vec![0.0; layout.width()];
    for (i, c) in pool.iter().enumerate() {
        layout.encode_into(space, c, &mut buf)?;
        encoded.row_mut(i).assign(&ndarray::ArrayView1::from(&buf));
    }
    let preds = model.predict_batch(encoded.mapv(scalar::<T>).view())?;

    let mut alive: Vec<usize> = (0..pool.len())
        .filter(|&i| preds[i].crash_prob <= params.crash_gate)
        .collect();
    if alive.is_empty() {
        let safest = (0..pool.len())
            .min_by(|&a, &b| preds[a].crash_prob.total_cmp(&preds[b].crash_prob))
            .expect("pool is non-empty");
        return Ok(pool[safest].clone());
    }

    if params.exploit_fraction < 1.0 {
        let keep = ((alive.len() as f64 * params.exploit_fraction).ceil() as usize).max(1);
        alive.sort_by(|&a, &b| preds[b].performance.total_cmp(&preds[a].performance).then(a.cmp(&b)));
        alive.truncate(keep);
        alive.sort_unstable();
    }

    let known = if trials.is_empty() {
        None
    } else {
        let mut known = Array2::<f64>::zeros((trials.len(), layout.width()));
        for (i, t) in trials.iter().enumerate() {
            layout.encode_into(space, &t.config, &mut buf)?;
            known.row_mut(i).assign(&ndarray::ArrayView1::from(&buf));
        }
        Some(known)
    };
    let ds: Vec<f64> = alive
        .iter()
        .map(|&i| match &known {
            Some(k) => dissimilarity(encoded.row(i).as_slice().expect("contiguous"), k.view()),
            None => Ok(1.0),
        })
        .collect::<Result<_, _>>()?;
    let sigma: Vec<f64> = alive.iter().map(|&i| preds[i].uncertainty).collect();
    let u = min_max(&sigma);
    let best = rank(&ds, &u, params.alpha);
    Ok(pool[alive[best]].clone())
}

/// Index of the highest score; the first one wins ties.
fn rank(ds: &[f64], u: &[f64], alpha: f64) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, (d, v)) in ds.iter().zip(u).enumerate() {
        let s = score(*d, *v, alpha);
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}
