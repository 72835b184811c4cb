//! Small feed-forward network core.
//!
//! The layer vocabulary is fixed: dense, ReLU, dropout and Gaussian RBF
//! layers. Every layer has an exact analytic backward pass. Activations are
//! batch-major (`batch × width`).

mod adam;
mod io;

pub use adam::{Adam, ParamMut};
pub use io::{LayerDoc, NetworkDoc, NN_FORMAT, NN_VERSION};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use thiserror::Error;

use crate::{scalar, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid layer: {0}")]
    InvalidLayer(String),
    #[error("non-finite gradient in `{0}`")]
    NonFiniteGradient(String),
    #[error("weight document: {0}")]
    Format(String),
}

/// `y = x · Wᵀ + b`, with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad<T> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(weights: Array2<T>, bias: Array1<T>) -> Result<Self, NnError> {
        if weights.nrows() != bias.len() {
            return Err(NnError::InvalidLayer(format!(
                "dense weights have {} rows but bias has {} entries",
                weights.nrows(),
                bias.len()
            )));
        }
        if weights.iter().chain(bias.iter()).any(|x| !x.is_finite()) {
            return Err(NnError::InvalidLayer("dense layer has non-finite entries".into()));
        }
        Ok(Self { weights, bias })
    }

    /// He-style uniform initialization, `U(-√(6/fan_in), √(6/fan_in))`, zero bias.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / inputs.max(1) as f64).sqrt();
        let weights =
            Array2::from_shape_fn((outputs, inputs), |_| scalar(rng.gen_range(-limit..=limit)));
        Self {
            weights,
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Result<Array2<T>, NnError> {
        if x.ncols() != self.inputs() {
            return Err(NnError::Shape(format!(
                "dense layer expects width {}, got {}",
                self.inputs(),
                x.ncols()
            )));
        }
        Ok(x.dot(&self.weights.t()) + &self.bias)
    }

    /// Gradients for weights and bias, plus the gradient w.r.t. `x`.
    pub fn backward(&self, x: ArrayView2<T>, dy: ArrayView2<T>) -> (DenseGrad<T>, Array2<T>) {
        let grad = DenseGrad {
            weights: dy.t().dot(&x).as_standard_layout().into_owned(),
            bias: dy.sum_axis(Axis(0)),
        };
        (grad, dy.dot(&self.weights))
    }
}

/// Gaussian radial-basis layer: `φ_i(z) = exp(-‖z - c_i‖² / (2γ²))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rbf<T> {
    /// One centroid per row (`m × d`).
    pub centroids: Array2<T>,
    pub gamma: T,
}

impl<T: Scalar> Rbf<T> {
    pub fn new(centroids: Array2<T>, gamma: T) -> Result<Self, NnError> {
        if !(gamma > T::zero()) || !gamma.is_finite() {
            return Err(NnError::InvalidLayer(format!("rbf gamma must be positive, got {gamma}")));
        }
        if centroids.iter().any(|x| !x.is_finite()) {
            return Err(NnError::InvalidLayer("rbf centroids must be finite".into()));
        }
        Ok(Self { centroids, gamma })
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }

    pub fn len(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.nrows() == 0
    }

    fn scale(&self) -> T {
        scalar::<T>(2.0) * self.gamma * self.gamma
    }

    /// Activations of a single latent vector.
    pub fn activation(&self, z: ArrayView1<T>) -> Result<Array1<T>, NnError> {
        if z.len() != self.dim() {
            return Err(NnError::Shape(format!(
                "rbf layer expects width {}, got {}",
                self.dim(),
                z.len()
            )));
        }
        let scale = self.scale();
        Ok(self
            .centroids
            .rows()
            .into_iter()
            .map(|c| {
                let d2 = Zip::from(&z)
                    .and(&c)
                    .fold(T::zero(), |acc, &a, &b| acc + (a - b) * (a - b));
                (-d2 / scale).exp()
            })
            .collect())
    }

    pub fn forward(&self, z: ArrayView2<T>) -> Result<Array2<T>, NnError> {
        if z.ncols() != self.dim() {
            return Err(NnError::Shape(format!(
                "rbf layer expects width {}, got {}",
                self.dim(),
                z.ncols()
            )));
        }
        let scale = self.scale();
        let mut out = Array2::zeros((z.nrows(), self.len()));
        for (zb, mut ob) in z.rows().into_iter().zip(out.rows_mut()) {
            for (c, o) in self.centroids.rows().into_iter().zip(ob.iter_mut()) {
                let d2 = Zip::from(&zb)
                    .and(&c)
                    .fold(T::zero(), |acc, &a, &b| acc + (a - b) * (a - b));
                *o = (-d2 / scale).exp();
            }
        }
        Ok(out)
    }

    /// Given inputs `z`, activations `phi` and upstream `dphi`, return
    /// `(∂L/∂centroids, ∂L/∂z)`. Uses `∂φ/∂c = φ·(z − c)/γ²`.
    pub fn backward(
        &self,
        z: ArrayView2<T>,
        phi: ArrayView2<T>,
        dphi: ArrayView2<T>,
    ) -> (Array2<T>, Array2<T>) {
        let g2 = self.gamma * self.gamma;
        let a = (&dphi * &phi).mapv(|x| x / g2);
        let col = a.sum_axis(Axis(0));
        let row = a.sum_axis(Axis(1));
        let mut dc = a.t().dot(&z).as_standard_layout().into_owned();
        for (mut r, (c, s)) in dc.rows_mut().into_iter().zip(self.centroids.rows().into_iter().zip(&col)) {
            r.scaled_add(-*s, &c);
        }
        let mut dz = a.dot(&self.centroids);
        for (mut r, (zb, s)) in dz.rows_mut().into_iter().zip(z.rows().into_iter().zip(&row)) {
            r.scaled_add(-*s, &zb);
        }
        (dc, dz)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Dense(Dense<T>),
    Relu,
    Dropout { rate: T },
    Rbf(Rbf<T>),
}

impl<T: Scalar> Layer<T> {
    fn check(&self) -> Result<(), NnError> {
        match self {
            Layer::Dropout { rate } if !(*rate >= T::zero() && *rate < T::one()) => Err(
                NnError::InvalidLayer(format!("dropout rate must be in [0, 1), got {rate}")),
            ),
            _ => Ok(()),
        }
    }

    fn output_width(&self, input: usize) -> Result<usize, NnError> {
        match self {
            Layer::Dense(d) if d.inputs() == input => Ok(d.outputs()),
            Layer::Rbf(r) if r.dim() == input => Ok(r.len()),
            Layer::Dense(d) => Err(NnError::Shape(format!(
                "dense layer expects width {}, previous layer gives {input}",
                d.inputs()
            ))),
            Layer::Rbf(r) => Err(NnError::Shape(format!(
                "rbf layer expects width {}, previous layer gives {input}",
                r.dim()
            ))),
            Layer::Relu | Layer::Dropout { .. } => Ok(input),
        }
    }

    fn fixed_input(&self) -> Option<usize> {
        match self {
            Layer::Dense(d) => Some(d.inputs()),
            Layer::Rbf(r) => Some(r.dim()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Everything `backward` needs from a `forward` call.
#[derive(Debug, Clone)]
pub struct Cache<T> {
    /// Input to each layer; the final entry is the network output.
    activations: Vec<Array2<T>>,
    masks: Vec<Option<Array2<T>>>,
}

impl<T> Cache<T> {
    /// Input of layer `i` (equivalently the output of layer `i - 1`).
    pub fn input_of(&self, i: usize) -> &Array2<T> {
        &self.activations[i]
    }

    pub fn output(&self) -> &Array2<T> {
        self.activations.last().expect("cache holds the input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerGrad<T> {
    None,
    Dense(DenseGrad<T>),
    Rbf { centroids: Array2<T> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<LayerGrad<T>>,
}

impl<T: Scalar> Gradients<T> {
    /// Flattened gradients in the same order as [`Network::params_mut`].
    pub fn flat(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for g in &self.layers {
            match g {
                LayerGrad::None => {}
                LayerGrad::Dense(d) => {
                    out.push(d.weights.as_slice().expect("standard layout"));
                    out.push(d.bias.as_slice().expect("standard layout"));
                }
                LayerGrad::Rbf { centroids } => out.push(centroids.as_slice().expect("standard layout")),
            }
        }
        out
    }
}

/// An ordered stack of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    layers: Vec<Layer<T>>,
    mode: Mode,
}

impl<T: Scalar> Network<T> {
    /// Validate layer compatibility. Starts in [`Mode::Eval`].
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self, NnError> {
        let mut width = None;
        for (i, layer) in layers.iter().enumerate() {
            layer.check()?;
            match width {
                None => width = layer.fixed_input().map(|w| layer.output_width(w)).transpose()?,
                Some(w) => {
                    width = Some(
                        layer
                            .output_width(w)
                            .map_err(|e| NnError::Shape(format!("layer {i}: {e}")))?,
                    )
                }
            }
        }
        Ok(Self {
            layers,
            mode: Mode::Eval,
        })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Width expected at the input, if any layer pins it.
    pub fn input_width(&self) -> Option<usize> {
        self.layers.iter().find_map(Layer::fixed_input)
    }

    /// Run the network on a batch. Dropout is only active in [`Mode::Train`]
    /// (inverted scaling, so evaluation needs no mask).
    pub fn forward<R: Rng + ?Sized>(
        &self,
        input: ArrayView2<T>,
        rng: &mut R,
    ) -> Result<(Array2<T>, Cache<T>), NnError> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut masks = Vec::with_capacity(self.layers.len());
        activations.push(input.to_owned());
        for layer in &self.layers {
            let x = activations.last().expect("non-empty").view();
            let (y, mask) = match layer {
                Layer::Dense(d) => (d.forward(x)?, None),
                Layer::Rbf(r) => (r.forward(x)?, None),
                Layer::Relu => (x.mapv(|v| v.max(T::zero())), None),
                Layer::Dropout { rate } => {
                    if self.mode == Mode::Eval || *rate == T::zero() {
                        (x.to_owned(), None)
                    } else {
                        let keep = T::one() - *rate;
                        let p = keep.to_f64().unwrap_or(1.0);
                        let mask = Array2::from_shape_fn(x.raw_dim(), |_| {
                            if rng.gen_bool(p) {
                                T::one() / keep
                            } else {
                                T::zero()
                            }
                        });
                        (&x * &mask, Some(mask))
                    }
                }
            };
            activations.push(y);
            masks.push(mask);
        }
        let out = activations.last().expect("non-empty").clone();
        Ok((out, Cache { activations, masks }))
    }

    /// Reverse pass. Returns per-layer parameter gradients and the input gradient.
    pub fn backward(
        &self,
        cache: &Cache<T>,
        upstream: ArrayView2<T>,
    ) -> Result<(Gradients<T>, Array2<T>), NnError> {
        if cache.activations.len() != self.layers.len() + 1 {
            return Err(NnError::Shape(format!(
                "cache covers {} layers, network has {}",
                cache.activations.len().saturating_sub(1),
                self.layers.len()
            )));
        }
        if upstream.raw_dim() != cache.output().raw_dim() {
            return Err(NnError::Shape(format!(
                "upstream gradient {:?} does not match output {:?}",
                upstream.shape(),
                cache.output().shape()
            )));
        }
        let mut grads = vec![LayerGrad::None; self.layers.len()];
        let mut dy = upstream.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = cache.activations[i].view();
            dy = match layer {
                Layer::Dense(d) => {
                    if x.ncols() != d.inputs() {
                        return Err(NnError::Shape(format!("stale cache at layer {i}")));
                    }
                    let (g, dx) = d.backward(x, dy.view());
                    grads[i] = LayerGrad::Dense(g);
                    dx
                }
                Layer::Rbf(r) => {
                    if x.ncols() != r.dim() {
                        return Err(NnError::Shape(format!("stale cache at layer {i}")));
                    }
                    let phi = cache.activations[i + 1].view();
                    let (dc, dz) = r.backward(x, phi, dy.view());
                    grads[i] = LayerGrad::Rbf { centroids: dc };
                    dz
                }
                Layer::Relu => {
                    Zip::from(&mut dy).and(&x).for_each(|g, &v| {
                        if v <= T::zero() {
                            *g = T::zero();
                        }
                    });
                    dy
                }
                Layer::Dropout { .. } => match &cache.masks[i] {
                    Some(mask) => dy * mask,
                    None => dy,
                },
            };
        }
        Ok((Gradients { layers: grads }, dy))
    }

    /// Mutable views of every trainable tensor, with stable names.
    pub fn params_mut(&mut self) -> Vec<(String, &mut [T])> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                Layer::Dense(d) => {
                    out.push((format!("layer{i}.weights"), d.weights.as_slice_mut().expect("standard layout")));
                    out.push((format!("layer{i}.bias"), d.bias.as_slice_mut().expect("standard layout")));
                }
                Layer::Rbf(r) => {
                    out.push((format!("layer{i}.centroids"), r.centroids.as_slice_mut().expect("standard layout")))
                }
                _ => {}
            }
        }
        out
    }

    /// Apply one optimizer step with `grads` from [`Network::backward`].
    pub fn apply(&mut self, opt: &mut Adam<T>, grads: &Gradients<T>) -> Result<(), NnError> {
        let flat = grads.flat();
        let params = self.params_mut();
        if flat.len() != params.len() {
            return Err(NnError::Shape(format!(
                "{} gradient tensors for {} parameters",
                flat.len(),
                params.len()
            )));
        }
        opt.step(
            params
                .into_iter()
                .zip(flat)
                .map(|((name, value), grad)| ParamMut { name, value, grad })
                .collect(),
        )
    }
}
