//! Permutation importance and cross-task similarity.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{DeepTuneError, DeepTuneModel, TrainingSet};
use crate::harness::{MetricStats, TrialResult};
use crate::space::{ConfigSpace, Objective};
use crate::Scalar;

pub const IMPORTANCE_MIN_SAMPLES: usize = 20;
pub const IMPORTANCE_SHUFFLES: usize = 50;

fn mse<T: Scalar>(pred: &[T], target: &[T]) -> f64 {
    pred.iter()
        .zip(target)
        .map(|(p, y)| {
            let d = (*p - *y).to_f64().unwrap_or(f64::NAN);
            d * d
        })
        .sum::<f64>()
        / pred.len() as f64
}

/// Mean increase in performance-prediction error when a parameter's feature
/// columns are shuffled across the ran samples, clamped at 0 and sorted
/// from most to least important.
pub fn feature_importance<T: Scalar, R: Rng + ?Sized>(
    model: &DeepTuneModel<T>,
    space: &ConfigSpace,
    trials: &[TrialResult],
    objective: &Objective,
    stats: &MetricStats,
    rng: &mut R,
) -> Result<Vec<(String, f64)>, DeepTuneError> {
    let ran: Vec<TrialResult> = trials.iter().filter(|t| t.ran()).cloned().collect();
    if ran.len() < IMPORTANCE_MIN_SAMPLES {
        return Err(DeepTuneError::InsufficientHistory {
            needed: IMPORTANCE_MIN_SAMPLES,
            have: ran.len(),
        });
    }
    let set: TrainingSet<T> = TrainingSet::from_history(space, &ran, objective, stats)?;
    let target: Vec<T> = set.perf.iter().map(|p| p.expect("ran samples")).collect();
    let base = mse(&model.predict_performance(set.inputs.view())?, &target);

    let layout = space.layout();
    let n = set.len();
    let mut out = Vec::with_capacity(space.len());
    for slice in layout.slices() {
        let mut total = 0.0;
        let mut shuffled = set.inputs.clone();
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..IMPORTANCE_SHUFFLES {
            order.shuffle(rng);
            for (row, &src) in order.iter().enumerate() {
                for col in slice.range() {
                    shuffled[[row, col]] = set.inputs[[src, col]];
                }
            }
            total += mse(&model.predict_performance(shuffled.view())?, &target) - base;
        }
        out.push((slice.name.clone(), (total / IMPORTANCE_SHUFFLES as f64).max(0.0)));
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

/// Pairwise similarity `1 / (1 + ‖v̂ᵢ − v̂ⱼ‖)` of L2-normalized vectors.
pub fn cross_similarity(vectors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, DeepTuneError> {
    if let Some(first) = vectors.first() {
        if let Some(v) = vectors.iter().find(|v| v.len() != first.len()) {
            return Err(DeepTuneError::LengthMismatch(first.len(), v.len()));
        }
    }
    let unit: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter().map(|x| x / norm).collect()
            } else {
                v.clone()
            }
        })
        .collect();
    Ok(unit
        .iter()
        .map(|a| {
            unit.iter()
                .map(|b| {
                    let d = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                    1.0 / (1.0 + d)
                })
                .collect()
        })
        .collect())
}
