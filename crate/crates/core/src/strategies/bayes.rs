use std::collections::HashSet;

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::random::random_propose;
use super::{SearchContext, Strategy, StrategyError};
use crate::harness::objective_value;
use crate::seeding::{self, Purpose};
use crate::space::Configuration;

const JITTERS: [f64; 6] = [0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BayesParams {
    pub length_scale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
    /// Random candidates scored by expected improvement per proposal.
    pub pool_size: usize,
    /// Ran samples needed before the GP is used.
    pub min_samples: usize,
}

impl Default for BayesParams {
    fn default() -> Self {
        Self {
            length_scale: 1.0,
            signal_variance: 1.0,
            noise_variance: 1e-2,
            pool_size: 500,
            min_samples: 3,
        }
    }
}

impl BayesParams {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [self.length_scale, self.signal_variance];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err("length_scale and signal_variance must be > 0".into());
        }
        if !(self.noise_variance >= 0.0) || !self.noise_variance.is_finite() {
            return Err("noise_variance must be >= 0".into());
        }
        if self.pool_size == 0 {
            return Err("pool_size must be >= 1".into());
        }
        Ok(())
    }
}

/// Exact GP regression with a squared-exponential kernel. Targets are
/// standardized internally; predictions are in the original units.
#[derive(Debug, Clone)]
pub struct GpModel {
    x: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    params: BayesParams,
    y_mean: f64,
    y_std: f64,
}

impl GpModel {
    fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        se_kernel(&self.params, a, b)
    }

    /// `None` if the kernel matrix stays singular with the largest jitter.
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: &BayesParams) -> Option<Self> {
        let n = x.len();
        if n == 0 || y.len() != n {
            return None;
        }
        let d = x[0].len();
        let xm = DMatrix::from_fn(n, d, |i, j| x[i][j]);
        let mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        let yn = DVector::from_iterator(n, y.iter().map(|v| (v - mean) / std));
        let k = DMatrix::from_fn(n, n, |i, j| se_kernel(params, &x[i], &x[j]));
        for jitter in JITTERS {
            let mut kk = k.clone();
            for i in 0..n {
                kk[(i, i)] += params.noise_variance + jitter;
            }
            if let Some(chol) = Cholesky::new(kk) {
                let alpha = chol.solve(&yn);
                return Some(Self {
                    x: xm,
                    chol,
                    alpha,
                    params: params.clone(),
                    y_mean: mean,
                    y_std: std,
                });
            }
        }
        None
    }

    /// Posterior mean and variance at each row of `xs`.
    pub fn predict(&self, xs: &[Vec<f64>]) -> Vec<(f64, f64)> {
        let n = self.x.nrows();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| self.x.row(i).iter().copied().collect()).collect();
        let kstar = DMatrix::from_fn(n, xs.len(), |i, j| self.kernel(&rows[i], &xs[j]));
        let mean = kstar.transpose() * &self.alpha;
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&kstar)
            .expect("Cholesky factor is non-singular");
        (0..xs.len())
            .map(|j| {
                let var = (self.params.signal_variance - v.column(j).norm_squared()).max(0.0);
                (
                    self.y_mean + self.y_std * mean[j],
                    var * self.y_std * self.y_std,
                )
            })
            .collect()
    }
}

fn se_kernel(p: &BayesParams, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    p.signal_variance * (-d2 / (2.0 * p.length_scale * p.length_scale)).exp()
}

/// Expected improvement of a Gaussian posterior over `best` (maximization).
pub fn expected_improvement(mean: f64, std: f64, best: f64) -> f64 {
    let gain = mean - best;
    if !(std > 0.0) {
        return gain.max(0.0);
    }
    let z = gain / std;
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    gain * n.cdf(z) + std * n.pdf(z)
}

#[derive(Debug, Clone)]
pub struct BayesStrategy {
    params: BayesParams,
}

impl BayesStrategy {
    pub fn new(params: BayesParams) -> Self {
        Self { params }
    }
}

impl Strategy for BayesStrategy {
    fn name(&self) -> &'static str {
        "bayes"
    }

    fn propose(&mut self, ctx: &SearchContext<'_>) -> Result<Configuration, StrategyError> {
        let mut rng = seeding::stream(ctx.seed, Purpose::Propose, ctx.iteration());
        let layout = ctx.space.layout();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for t in ctx.trials.iter().filter(|t| t.ran()) {
            x.push(layout.encode(ctx.space, &t.config)?.features);
            y.push(objective_value(t, ctx.objective, ctx.stats)?);
        }
        if y.len() < self.params.min_samples.max(1) {
            return Ok(random_propose(ctx.space, ctx.trials, &mut rng));
        }
        let Some(gp) = GpModel::fit(&x, &y, &self.params) else {
            warn!("kernel matrix singular even with jitter; proposing at random");
            return Ok(random_propose(ctx.space, ctx.trials, &mut rng));
        };

        let seen: HashSet<String> = ctx.trials.iter().map(|t| t.config.key()).collect();
        let mut keys = HashSet::new();
        let mut pool = Vec::with_capacity(self.params.pool_size);
        for _ in 0..self.params.pool_size * 20 {
            if pool.len() == self.params.pool_size {
                break;
            }
            let c = ctx.space.sample_uniform(&mut rng);
            let key = c.key();
            if !seen.contains(&key) && keys.insert(key) {
                pool.push(c);
            }
        }
        if pool.is_empty() {
            return Ok(random_propose(ctx.space, ctx.trials, &mut rng));
        }
        let encoded = pool
            .iter()
            .map(|c| layout.encode(ctx.space, c).map(|e| e.features))
            .collect::<Result<Vec<_>, _>>()?;
        let best = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let posterior = gp.predict(&encoded);
        let mut pick = 0;
        let mut pick_ei = f64::NEG_INFINITY;
        for (i, (m, v)) in posterior.into_iter().enumerate() {
            let ei = expected_improvement(m, v.sqrt(), best);
            if ei > pick_ei {
                pick = i;
                pick_ei = ei;
            }
        }
        Ok(pool.swap_remove(pick))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_observations() {
        let p = BayesParams {
            noise_variance: 1e-10,
            ..Default::default()
        };
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 * 0.4, (i as f64).sin()]).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v[0] - v[1] * v[1]).collect();
        let gp = GpModel::fit(&x, &y, &p).unwrap();
        for ((m, var), t) in gp.predict(&x).into_iter().zip(&y) {
            assert!((m - t).abs() < 1e-3, "{m} vs {t}");
            assert!(var < 1e-3);
        }
    }

    #[test]
    fn ei_closed_forms() {
        assert_eq!(expected_improvement(2.0, 0.0, 2.0), 0.0);
        assert_eq!(expected_improvement(1.0, 0.0, 2.0), 0.0);
        assert_eq!(expected_improvement(3.0, 0.0, 2.0), 1.0);
        // At mean == best, EI = σ·φ(0).
        let v = expected_improvement(2.0, 0.5, 2.0);
        assert!((v - 0.5 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn duplicate_points_need_jitter_only_without_noise() {
        let p = BayesParams {
            noise_variance: 0.0,
            ..Default::default()
        };
        let x = vec![vec![0.5], vec![0.5], vec![1.0]];
        assert!(GpModel::fit(&x, &[1.0, 1.0, 2.0], &p).is_some());
    }
}
