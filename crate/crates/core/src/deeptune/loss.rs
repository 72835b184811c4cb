//! The three training losses and their gradients.

use ndarray::{Array2, ArrayView2};

use crate::{scalar, Scalar};

/// Index of the "crashed" class in the crash logits.
pub const CRASHED: usize = 0;
/// Index of the "ran" class in the crash logits.
pub const RAN: usize = 1;

/// Bounds applied to the log-variance head before it is used.
pub const LOG_VAR_CLAMP: f64 = 8.0;

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum = exps.iter().copied().fold(T::zero(), |a, b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-log softmax(logits)[label]`.
pub fn loss_cce<T: Scalar>(logits: &[T], label: usize) -> T {
    let top = (0..logits.len())
        .reduce(|a, b| if logits[b] > logits[a] { b } else { a })
        .expect("at least one logit");
    let max = logits[top];
    let rest = logits
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != top)
        .fold(T::zero(), |acc, (_, &l)| acc + (l - max).exp());
    rest.ln_1p() + (max - logits[label])
}

/// Heteroscedastic regression loss `(y - ŷ)²·e^{-s}/2 + s/2`.
pub fn loss_reg<T: Scalar>(yhat: T, log_var: T, y: T) -> T {
    let r = y - yhat;
    let half: T = scalar(0.5);
    r * r * (-log_var).exp() * half + log_var * half
}

/// Gradients of [`loss_reg`] with respect to `ŷ` and `s`.
pub fn loss_reg_grad<T: Scalar>(yhat: T, log_var: T, y: T) -> (T, T) {
    let r = y - yhat;
    let e = (-log_var).exp();
    let half: T = scalar(0.5);
    (-r * e, half - r * r * e * half)
}

fn sq_dist<T: Scalar>(a: ndarray::ArrayView1<T>, b: ndarray::ArrayView1<T>) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

/// Nearest row of `set` to `x`, with its squared distance.
fn nearest<T: Scalar>(x: ndarray::ArrayView1<T>, set: ArrayView2<T>) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (j, row) in set.rows().into_iter().enumerate() {
        let d = sq_dist(x, row);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Symmetric Chamfer distance: mean squared distance from each latent to its
/// nearest centroid plus mean squared distance from each centroid to its
/// nearest latent.
pub fn loss_cham<T: Scalar>(centroids: ArrayView2<T>, latents: ArrayView2<T>) -> T {
    loss_cham_grad(centroids, latents).0
}

/// [`loss_cham`] and its gradient with respect to the centroids.
pub fn loss_cham_grad<T: Scalar>(centroids: ArrayView2<T>, latents: ArrayView2<T>) -> (T, Array2<T>) {
    let mut grad = Array2::zeros(centroids.raw_dim());
    let (n, m) = (latents.nrows(), centroids.nrows());
    if n == 0 || m == 0 {
        return (T::zero(), grad);
    }
    let two: T = scalar(2.0);
    let (nt, mt): (T, T) = (scalar(n as f64), scalar(m as f64));
    let mut forward = T::zero();
    for z in latents.rows() {
        let (j, d) = nearest(z, centroids);
        forward = forward + d;
        let mut g = grad.row_mut(j);
        for (gk, (&c, &zk)) in g.iter_mut().zip(centroids.row(j).iter().zip(z)) {
            *gk = *gk + two * (c - zk) / nt;
        }
    }
    let mut backward = T::zero();
    for (j, c) in centroids.rows().into_iter().enumerate() {
        let (i, d) = nearest(c, latents);
        backward = backward + d;
        let mut g = grad.row_mut(j);
        for (gk, (&ck, &zk)) in g.iter_mut().zip(c.iter().zip(latents.row(i))) {
            *gk = *gk + two * (ck - zk) / mt;
        }
    }
    (forward / nt + backward / mt, grad)
}
