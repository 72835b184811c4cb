use crate::{scalar, Scalar};

use super::NnError;

/// One named parameter tensor and its gradient.
pub struct ParamMut<'a, T> {
    pub name: String,
    pub value: &'a mut [T],
    pub grad: &'a [T],
}

/// Adaptive-moment optimizer with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> Default for Adam<T> {
    fn default() -> Self {
        Self::new(scalar(1e-3))
    }
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: T) -> Self {
        Self {
            lr,
            beta1: scalar(0.9),
            beta2: scalar(0.999),
            eps: scalar(1e-8),
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Forget accumulated moments.
    pub fn reset(&mut self) {
        self.step = 0;
        self.first.clear();
        self.second.clear();
    }

    /// Update every parameter in place. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: Vec<ParamMut<'_, T>>) -> Result<(), NnError> {
        for p in &params {
            if p.value.len() != p.grad.len() {
                return Err(NnError::Shape(format!(
                    "`{}` has {} values but {} gradients",
                    p.name,
                    p.value.len(),
                    p.grad.len()
                )));
            }
            if p.grad.iter().any(|g| !g.is_finite()) {
                return Err(NnError::NonFiniteGradient(p.name.clone()));
            }
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![T::zero(); p.value.len()]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != params.len()
            || self.first.iter().zip(&params).any(|(m, p)| m.len() != p.value.len())
        {
            return Err(NnError::Shape("optimizer state does not match parameters".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = T::one() - self.beta1.powi(t);
        let c2 = T::one() - self.beta2.powi(t);
        for ((p, m), v) in params.into_iter().zip(&mut self.first).zip(&mut self.second) {
            for (((w, &g), m), v) in p.value.iter_mut().zip(p.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = self.beta1 * *m + (T::one() - self.beta1) * g;
                *v = self.beta2 * *v + (T::one() - self.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w = *w - self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_run(lr: f64, steps: usize) -> f64 {
        let mut opt = Adam::new(lr);
        let mut w = [1.0f64];
        for _ in 0..steps {
            let g = [2.0 * w[0]];
            opt.step(vec![ParamMut {
                name: "w".into(),
                value: &mut w,
                grad: &g,
            }])
            .unwrap();
        }
        w[0]
    }

    /// Textbook scalar update, written out independently.
    fn reference_quad_run(lr: f64, steps: usize) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut w, mut m, mut v) = (1.0f64, 0.0, 0.0);
        for t in 1..=steps {
            let g = 2.0 * w;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            w -= lr * mh / (vh.sqrt() + eps);
        }
        w
    }

    #[test]
    fn minimizes_a_quadratic() {
        let w = quad_run(0.1, 200);
        assert!(w.abs() < 0.01, "w = {w}");
        assert_eq!(w, reference_quad_run(0.1, 200));
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut opt = Adam::<f64>::default();
        let mut w = [0.3, -1.2];
        opt.step(vec![ParamMut {
            name: "w".into(),
            value: &mut w,
            grad: &[0.0, 0.0],
        }])
        .unwrap();
        assert_eq!(w, [0.3, -1.2]);
    }

    #[test]
    fn identical_states_give_identical_updates() {
        let run = || {
            let mut opt = Adam::<f64>::new(0.01);
            let mut w = [0.5, 0.25, -3.0];
            for k in 0..10 {
                let g = [k as f64 * 0.1, -0.3, 1.0 / (k as f64 + 1.0)];
                opt.step(vec![ParamMut {
                    name: "w".into(),
                    value: &mut w,
                    grad: &g,
                }])
                .unwrap();
            }
            w.map(f64::to_bits)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut opt = Adam::<f64>::default();
        let mut a = [1.0];
        let mut b = [1.0];
        let err = opt
            .step(vec![
                ParamMut {
                    name: "a".into(),
                    value: &mut a,
                    grad: &[0.1],
                },
                ParamMut {
                    name: "b".into(),
                    value: &mut b,
                    grad: &[f64::NAN],
                },
            ])
            .unwrap_err();
        assert_eq!(err, NnError::NonFiniteGradient("b".into()));
        assert_eq!(a, [1.0]);
    }
}
