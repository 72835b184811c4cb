//! Helpers shared by the integration tests.
#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crashtune::harness::LandscapeBuilder;
use crashtune::nn::Network;
use crashtune::orchestrator::synthetic_job;
use crashtune::space::{JobSpec, StrategySpec};

/// Five-point central difference of `f` at `x` along one coordinate.
pub fn stencil(mut f: impl FnMut(f64) -> f64, x: f64) -> f64 {
    const H: f64 = 1e-5;
    (-f(x + 2.0 * H) + 8.0 * f(x + H) - 8.0 * f(x - H) + f(x - 2.0 * H)) / (12.0 * H)
}

/// `|a − n| / max(|a|, |n|, 1e-6)`: relative, with entries below 1e-6 compared
/// at that scale, where the difference quotient's rounding noise dominates.
pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Largest relative error between analytic and finite-difference gradients
/// of `sum(out ⊙ r)` over every parameter and input entry of `net`.
pub fn gradient_error(net: &mut Network<f64>, x: &Array2<f64>, rng: &mut ChaCha8Rng) -> f64 {
    let (out, cache) = net.forward(x.view(), rng).unwrap();
    let r = Array2::from_shape_fn(out.raw_dim(), |_| rng.gen_range(-1.0..1.0));
    let (grads, dx) = net.backward(&cache, r.view()).unwrap();
    let analytic: Vec<Vec<f64>> = grads.flat().into_iter().map(<[f64]>::to_vec).collect();
    let objective = |net: &Network<f64>, x: &Array2<f64>, rng: &mut ChaCha8Rng| {
        (&net.forward(x.view(), rng).unwrap().0 * &r).sum()
    };
    let mut worst = 0.0f64;
    for (t, g) in analytic.iter().enumerate() {
        for (k, &a) in g.iter().enumerate() {
            let orig = net.params_mut()[t].1[k];
            let n = stencil(
                |v| {
                    net.params_mut()[t].1[k] = v;
                    objective(net, x, rng)
                },
                orig,
            );
            net.params_mut()[t].1[k] = orig;
            worst = worst.max(relative_error(a, n));
        }
    }
    let mut xp = x.clone();
    for ((i, j), &a) in dx.indexed_iter() {
        let n = stencil(
            |v| {
                xp[[i, j]] = v;
                objective(net, &xp, rng)
            },
            x[[i, j]],
        );
        xp[[i, j]] = x[[i, j]];
        worst = worst.max(relative_error(a, n));
    }
    worst
}

/// A job over a 10-parameter synthetic landscape with 3 important parameters.
pub fn small_job(strategy: &str, iterations: u64, seed: u64) -> JobSpec {
    let builder = LandscapeBuilder {
        dims: 10,
        important: 3,
        crash_box_sizes: vec![1, 2],
        ..Default::default()
    };
    synthetic_job(&builder, seed, StrategySpec::named(strategy), iterations, seed).unwrap()
}
