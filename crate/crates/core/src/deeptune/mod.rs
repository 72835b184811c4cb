//! The multitask surrogate and the candidate selection policy.
//!
//! A [`DeepTuneModel`] maps an encoded configuration to a crash probability
//! `k̂`, a performance estimate `ŷ` (in z-scored units) and an uncertainty
//! `σ̂`. The prediction branch is a ReLU trunk with a crash head and a
//! performance head. The uncertainty branch holds one RBF layer per hidden
//! trunk layer, each reading that layer's activations (without passing
//! gradients back into the trunk), followed by a dense log-variance head.

mod importance;
mod loss;
mod persist;
mod select;

pub use importance::{cross_similarity, feature_importance, IMPORTANCE_MIN_SAMPLES, IMPORTANCE_SHUFFLES};
pub use loss::{loss_cce, loss_cham, loss_cham_grad, loss_reg, loss_reg_grad, softmax, CRASHED, LOG_VAR_CLAMP, RAN};
pub use persist::{ModelDoc, MODEL_FORMAT, MODEL_VERSION};
pub use select::{dissimilarity, min_max, score, select_next, ScoringParams};

use std::collections::BTreeMap;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{objective_value, HarnessError, MetricStats, TrialResult};
use crate::nn::{Adam, Cache, Dense, Gradients, Layer, LayerGrad, Mode, Network, NnError, Rbf};
use crate::space::{ConfigSpace, Objective, SpaceError};
use crate::{scalar, Scalar};

#[derive(Debug, Error)]
pub enum DeepTuneError {
    #[error("cannot build a model for a space without parameters")]
    EmptySpace,
    #[error("input has {got} features, the model expects {expected}")]
    Shape { expected: usize, got: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("non-finite training loss (cce {cce}, reg {reg}, cham {cham})")]
    NonFiniteLoss { cce: f64, reg: f64, cham: f64 },
    #[error("network: {0}")]
    Nn(#[from] NnError),
    #[error("encoding: {0}")]
    Space(#[from] SpaceError),
    #[error("objective: {0}")]
    Objective(#[from] HarnessError),
    #[error("model does not match this space: {0}")]
    LayoutMismatch(String),
    #[error("model document: {0}")]
    Format(String),
    #[error("need at least {needed} ran samples, history has {have}")]
    InsufficientHistory { needed: usize, have: usize },
    #[error("every configuration of the space has been evaluated")]
    Exhausted,
    #[error("importance vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("the known set is empty")]
    EmptyKnown,
    #[error("invalid scoring parameters: {0}")]
    Params(String),
}

/// Architecture constants of the surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub centroids: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    /// Weight the crash loss by inverse class frequency over the training set.
    #[serde(default)]
    pub balance_classes: bool,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            hidden: vec![128, 64, 32],
            dropout: 0.1,
            centroids: 32,
            gamma: 0.1,
            learning_rate: 1e-3,
            balance_classes: true,
        }
    }
}

/// How much training happens after each observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSchedule {
    /// Gradient steps per update.
    pub steps: usize,
    /// Histories up to this size are used whole; larger ones are sampled.
    pub batch_size: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            steps: 30,
            batch_size: 128,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Probability of crashing, `k̂`.
    pub crash_prob: f64,
    /// Expected performance `ŷ` in z-scored units.
    pub performance: f64,
    /// Predicted standard deviation `σ̂`.
    pub uncertainty: f64,
}

/// Encoded inputs with crash labels and z-scored performance labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet<T> {
    pub inputs: Array2<T>,
    pub crashed: Vec<bool>,
    /// Normalized performance; `Some` exactly for samples that ran.
    pub perf: Vec<Option<T>>,
    pub perf_mean: f64,
    pub perf_std: f64,
}

impl<T: Scalar> TrainingSet<T> {
    /// Normalizes `raw_perf` by the mean and standard deviation of its present values.
    pub fn new(inputs: Array2<T>, crashed: Vec<bool>, raw_perf: Vec<Option<f64>>) -> Result<Self, DeepTuneError> {
        let n = inputs.nrows();
        if crashed.len() != n || raw_perf.len() != n {
            return Err(DeepTuneError::Shape {
                expected: n,
                got: crashed.len().min(raw_perf.len()),
            });
        }
        if crashed.iter().zip(&raw_perf).any(|(c, p)| *c == p.is_some()) {
            return Err(DeepTuneError::Format(
                "performance label must be present exactly for samples that ran".into(),
            ));
        }
        let present: Vec<f64> = raw_perf.iter().flatten().copied().collect();
        let (mean, std) = mean_std(&present);
        let perf = raw_perf.iter().map(|p| p.map(|v| scalar((v - mean) / std))).collect();
        Ok(Self {
            inputs,
            crashed,
            perf,
            perf_mean: mean,
            perf_std: std,
        })
    }

    /// Encode a trial history; objective values come from [`objective_value`].
    pub fn from_history(
        space: &ConfigSpace,
        trials: &[TrialResult],
        objective: &Objective,
        stats: &MetricStats,
    ) -> Result<Self, DeepTuneError> {
        let layout = space.layout();
        let mut inputs = Array2::zeros((trials.len(), layout.width()));
        let mut buf = vec![0.0; layout.width()];
        let mut crashed = Vec::with_capacity(trials.len());
        let mut raw = Vec::with_capacity(trials.len());
        for (i, t) in trials.iter().enumerate() {
            layout.encode_into(space, &t.config, &mut buf)?;
            inputs.row_mut(i).assign(&ndarray::ArrayView1::from(&buf).mapv(scalar::<T>));
            crashed.push(t.crashed());
            raw.push(if t.ran() { Some(objective_value(t, objective, stats)?) } else { None });
        }
        Self::new(inputs, crashed, raw)
    }

    pub fn len(&self) -> usize {
        self.crashed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.crashed.is_empty()
    }

    pub fn ran_count(&self) -> usize {
        self.perf.iter().filter(|p| p.is_some()).count()
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 1.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 1e-12 { std } else { 1.0 })
}

/// Loss components of one batch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub cce: f64,
    pub reg: f64,
    pub cham: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.cce + self.reg + self.cham
    }
}

/// Parameter gradients of every sub-network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradients<T> {
    pub trunk: Gradients<T>,
    pub crash_head: Gradients<T>,
    pub perf_head: Gradients<T>,
    pub rbf: Vec<Gradients<T>>,
    pub var_head: Gradients<T>,
}

struct Pass<T> {
    trunk: Cache<T>,
    crash: Cache<T>,
    perf: Cache<T>,
    latents: Vec<Array2<T>>,
    rbf: Vec<Cache<T>>,
    var: Cache<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepTuneModel<T> {
    arch: Architecture,
    fingerprint: String,
    input_width: usize,
    trunk: Network<T>,
    crash_head: Network<T>,
    perf_head: Network<T>,
    rbf: Vec<Network<T>>,
    var_head: Network<T>,
    /// Order: trunk, crash head, perf head, var head, then one per RBF layer.
    optimizers: Vec<Adam<T>>,
    centroids_ready: bool,
    trained: bool,
}

impl<T: Scalar> DeepTuneModel<T> {
    /// Default architecture sized to `space`'s encoding.
    pub fn build<R: Rng + ?Sized>(space: &ConfigSpace, rng: &mut R) -> Result<Self, DeepTuneError> {
        Self::with_architecture(space, &Architecture::default(), rng)
    }

    pub fn with_architecture<R: Rng + ?Sized>(
        space: &ConfigSpace,
        arch: &Architecture,
        rng: &mut R,
    ) -> Result<Self, DeepTuneError> {
        if space.is_empty() {
            return Err(DeepTuneError::EmptySpace);
        }
        let layout = space.layout();
        Self::new(layout.width(), layout.fingerprint(space), arch, rng)
    }

    /// A model over raw `input_width`-wide feature vectors.
    pub fn new<R: Rng + ?Sized>(
        input_width: usize,
        fingerprint: String,
        arch: &Architecture,
        rng: &mut R,
    ) -> Result<Self, DeepTuneError> {
        if input_width == 0 {
            return Err(DeepTuneError::EmptySpace);
        }
        if arch.hidden.is_empty() || arch.hidden.contains(&0) || arch.centroids == 0 {
            return Err(DeepTuneError::Format("architecture needs non-empty layers".into()));
        }
        if !(arch.gamma > 0.0) || !(0.0..1.0).contains(&arch.dropout) || !(arch.learning_rate > 0.0) {
            return Err(DeepTuneError::Format("gamma and learning rate must be > 0, dropout in [0, 1)".into()));
        }
        let mut layers = Vec::new();
        let mut width = input_width;
        for &h in &arch.hidden {
            layers.push(Layer::Dense(Dense::init(width, h, rng)));
            layers.push(Layer::Relu);
            layers.push(Layer::Dropout {
                rate: scalar(arch.dropout),
            });
            width = h;
        }
        let trunk = Network::new(layers)?;
        let crash_head = Network::new(vec![Layer::Dense(Dense::init(width, 2, rng))])?;
        let perf_head = Network::new(vec![Layer::Dense(Dense::init(width, 1, rng))])?;
        let rbf = arch
            .hidden
            .iter()
            .map(|&h| {
                let c = Array2::from_shape_fn((arch.centroids, h), |_| scalar::<T>(unit_normal(rng)));
                Network::new(vec![Layer::Rbf(Rbf::new(c, scalar(arch.gamma))?)])
            })
            .collect::<Result<Vec<_>, _>>()?;
        let phi_width = arch.centroids * arch.hidden.len();
        let mut var_dense = Dense::init(phi_width, 1, rng);
        var_dense.weights.mapv_inplace(|w| w * scalar(0.1));
        let var_head = Network::new(vec![Layer::Dense(var_dense)])?;
        let optimizers = (0..4 + rbf.len()).map(|_| optimizer(arch)).collect();
        Ok(Self {
            arch: arch.clone(),
            fingerprint,
            input_width,
            trunk,
            crash_head,
            perf_head,
            rbf,
            var_head,
            optimizers,
            centroids_ready: false,
            trained: false,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    /// Fingerprint of the encoding layout the model was built for.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn gamma(&self) -> f64 {
        self.arch.gamma
    }

    /// True once [`DeepTuneModel::train`] (or a variant) has run.
    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn trunk(&self) -> &Network<T> {
        &self.trunk
    }

    pub fn crash_head(&self) -> &Network<T> {
        &self.crash_head
    }

    pub fn perf_head(&self) -> &Network<T> {
        &self.perf_head
    }

    pub fn rbf_layers(&self) -> &[Network<T>] {
        &self.rbf
    }

    pub fn var_head(&self) -> &Network<T> {
        &self.var_head
    }

    fn rbf_layer(net: &Network<T>) -> &Rbf<T> {
        match &net.layers()[0] {
            Layer::Rbf(r) => r,
            _ => unreachable!("uncertainty layers are RBF"),
        }
    }

    fn rbf_layer_mut(net: &mut Network<T>) -> &mut Rbf<T> {
        match &mut net.layers_mut()[0] {
            Layer::Rbf(r) => r,
            _ => unreachable!("uncertainty layers are RBF"),
        }
    }

    /// Latent scale for hidden layer `k`: activations are divided by the
    /// square root of the layer width before reaching the RBF layer.
    fn latent_scale(&self, k: usize) -> T {
        scalar(1.0 / (self.arch.hidden[k] as f64).sqrt())
    }

    fn check_width(&self, x: &ArrayView2<T>) -> Result<(), DeepTuneError> {
        if x.ncols() != self.input_width {
            return Err(DeepTuneError::Shape {
                expected: self.input_width,
                got: x.ncols(),
            });
        }
        Ok(())
    }

    fn latents(&self, trunk: &Cache<T>) -> Vec<Array2<T>> {
        (0..self.arch.hidden.len())
            .map(|k| trunk.input_of(3 * k + 2) * self.latent_scale(k))
            .collect()
    }

    fn pass<R: Rng + ?Sized>(&self, x: ArrayView2<T>, rng: &mut R) -> Result<Pass<T>, DeepTuneError> {
        self.check_width(&x)?;
        let (h, trunk) = self.trunk.forward(x, rng)?;
        let (_, crash) = self.crash_head.forward(h.view(), rng)?;
        let (_, perf) = self.perf_head.forward(h.view(), rng)?;
        let latents = self.latents(&trunk);
        let mut rbf = Vec::with_capacity(self.rbf.len());
        let mut phis = Vec::with_capacity(self.rbf.len());
        for (net, z) in self.rbf.iter().zip(&latents) {
            let (phi, cache) = net.forward(z.view(), rng)?;
            phis.push(phi);
            rbf.push(cache);
        }
        let views: Vec<_> = phis.iter().map(|p| p.view()).collect();
        let phi = concatenate(Axis(1), &views).map_err(|e| NnError::Shape(e.to_string()))?;
        let (_, var) = self.var_head.forward(phi.view(), rng)?;
        Ok(Pass {
            trunk,
            crash,
            perf,
            latents,
            rbf,
            var,
        })
    }

    /// Predict a batch of encoded inputs (one row each).
    pub fn predict_batch(&self, x: ArrayView2<T>) -> Result<Vec<Prediction>, DeepTuneError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pass = self.pass(x, &mut rng)?;
        let logits = pass.crash.output();
        let perf = pass.perf.output();
        let s = pass.var.output();
        let clamp: T = scalar(LOG_VAR_CLAMP);
        Ok((0..x.nrows())
            .map(|i| {
                let k = softmax(&[logits[[i, 0]], logits[[i, 1]]])[CRASHED];
                let log_var = s[[i, 0]].max(-clamp).min(clamp);
                Prediction {
                    crash_prob: k.to_f64().unwrap_or(1.0),
                    performance: perf[[i, 0]].to_f64().unwrap_or(f64::NAN),
                    uncertainty: (log_var * scalar(0.5)).exp().to_f64().unwrap_or(f64::MAX),
                }
            })
            .collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction, DeepTuneError> {
        let row = Array2::from_shape_vec((1, x.len()), x.iter().map(|v| scalar::<T>(*v)).collect())
            .expect("one row");
        Ok(self.predict_batch(row.view())?[0])
    }

    /// Performance head only, for each row.
    pub fn predict_performance(&self, x: ArrayView2<T>) -> Result<Vec<T>, DeepTuneError> {
        self.check_width(&x)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (h, _) = self.trunk.forward(x, &mut rng)?;
        let (y, _) = self.perf_head.forward(h.view(), &mut rng)?;
        Ok(y.column(0).to_vec())
    }

    /// RBF activations of every uncertainty layer, concatenated.
    pub fn rbf_activations(&self, x: ArrayView2<T>) -> Result<Array2<T>, DeepTuneError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pass = self.pass(x, &mut rng)?;
        let views: Vec<_> = pass.rbf.iter().map(|c| c.output().view()).collect();
        Ok(concatenate(Axis(1), &views).map_err(|e| NnError::Shape(e.to_string()))?)
    }

    fn set_mode(&mut self, mode: Mode) {
        self.trunk.set_mode(mode);
    }

    /// Loss and gradients on the rows `idx` of `set`. Dropout is applied only when `dropout` is set.
    pub fn loss_and_gradients<R: Rng + ?Sized>(
        &mut self,
        set: &TrainingSet<T>,
        idx: &[usize],
        dropout: bool,
        rng: &mut R,
    ) -> Result<(LossParts, ModelGradients<T>), DeepTuneError> {
        if idx.is_empty() {
            return Err(DeepTuneError::EmptyTrainingSet);
        }
        self.set_mode(if dropout { Mode::Train } else { Mode::Eval });
        let result = self.loss_and_gradients_inner(set, idx, rng);
        self.set_mode(Mode::Eval);
        result
    }

    fn loss_and_gradients_inner<R: Rng + ?Sized>(
        &self,
        set: &TrainingSet<T>,
        idx: &[usize],
        rng: &mut R,
    ) -> Result<(LossParts, ModelGradients<T>), DeepTuneError> {
        let x = set.inputs.select(Axis(0), idx);
        let pass = self.pass(x.view(), rng)?;
        let b = idx.len();
        let bt: T = scalar(b as f64);
        let logits = pass.crash.output();
        let yhat = pass.perf.output();
        let s = pass.var.output();

        let weights = self.class_weights(set);
        let mut parts = LossParts::default();
        let mut d_logits = Array2::zeros((b, 2));
        for (r, &i) in idx.iter().enumerate() {
            let label = if set.crashed[i] { CRASHED } else { RAN };
            let w: T = scalar(weights[label]);
            let l = [logits[[r, 0]], logits[[r, 1]]];
            parts.cce += weights[label] * loss_cce(&l, label).to_f64().unwrap_or(f64::NAN);
            let p = softmax(&l);
            for c in 0..2 {
                let target = if c == label { T::one() } else { T::zero() };
                d_logits[[r, c]] = w * (p[c] - target) / bt;
            }
        }
        parts.cce /= b as f64;

        let n_ran = idx.iter().filter(|&&i| set.perf[i].is_some()).count();
        let mut d_yhat = Array2::zeros((b, 1));
        let mut d_s = Array2::zeros((b, 1));
        if n_ran > 0 {
            let nr: T = scalar(n_ran as f64);
            let clamp: T = scalar(LOG_VAR_CLAMP);
            for (r, &i) in idx.iter().enumerate() {
                let Some(y) = set.perf[i] else { continue };
                let raw = s[[r, 0]];
                let sc = raw.max(-clamp).min(clamp);
                parts.reg += loss_reg(yhat[[r, 0]], sc, y).to_f64().unwrap_or(f64::NAN);
                let (gy, gs) = loss_reg_grad(yhat[[r, 0]], sc, y);
                d_yhat[[r, 0]] = gy / nr;
                d_s[[r, 0]] = if raw == sc { gs / nr } else { T::zero() };
            }
            parts.reg /= n_ran as f64;
        }

        let (crash_head, dh_crash) = self.crash_head.backward(&pass.crash, d_logits.view())?;
        let (perf_head, dh_perf) = self.perf_head.backward(&pass.perf, d_yhat.view())?;
        let (trunk, _) = self.trunk.backward(&pass.trunk, (dh_crash + dh_perf).view())?;
        let (var_head, d_phi) = self.var_head.backward(&pass.var, d_s.view())?;

        let m = self.arch.centroids;
        let mut rbf = Vec::with_capacity(self.rbf.len());
        for (k, (net, cache)) in self.rbf.iter().zip(&pass.rbf).enumerate() {
            let slice = d_phi.slice(s![.., k * m..(k + 1) * m]);
            let (mut g, _) = net.backward(cache, slice)?;
            let centroids = Self::rbf_layer(net).centroids.view();
            let (cham, g_cham) = loss_cham_grad(centroids, pass.latents[k].view());
            parts.cham += cham.to_f64().unwrap_or(f64::NAN);
            if let LayerGrad::Rbf { centroids } = &mut g.layers[0] {
                *centroids = &*centroids + &g_cham;
            }
            rbf.push(g);
        }

        if !parts.total().is_finite() {
            return Err(DeepTuneError::NonFiniteLoss {
                cce: parts.cce,
                reg: parts.reg,
                cham: parts.cham,
            });
        }
        Ok((
            parts,
            ModelGradients {
                trunk,
                crash_head,
                perf_head,
                rbf,
                var_head,
            },
        ))
    }

    /// Per-class weights of the crash loss, indexed like the logits. With
    /// balancing on, each present class carries half the total weight.
    fn class_weights(&self, set: &TrainingSet<T>) -> [f64; 2] {
        let n = set.len() as f64;
        let crashed = set.crashed.iter().filter(|&&c| c).count() as f64;
        let ran = n - crashed;
        if !self.arch.balance_classes || crashed == 0.0 || ran == 0.0 {
            return [1.0, 1.0];
        }
        let mut w = [0.0; 2];
        w[CRASHED] = n / (2.0 * crashed);
        w[RAN] = n / (2.0 * ran);
        w
    }

    /// Loss over the whole set without dropout.
    pub fn loss(&mut self, set: &TrainingSet<T>) -> Result<LossParts, DeepTuneError> {
        let idx: Vec<usize> = (0..set.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.loss_and_gradients(set, &idx, false, &mut rng)?.0)
    }

    /// Sub-networks in optimizer order.
    fn networks_mut(&mut self) -> Vec<&mut Network<T>> {
        let mut nets = vec![&mut self.trunk, &mut self.crash_head, &mut self.perf_head, &mut self.var_head];
        nets.extend(self.rbf.iter_mut());
        nets
    }

    fn apply(&mut self, g: &ModelGradients<T>) -> Result<(), DeepTuneError> {
        let grads = [&g.trunk, &g.crash_head, &g.perf_head, &g.var_head].into_iter().chain(&g.rbf);
        let mut optimizers = std::mem::take(&mut self.optimizers);
        let result = self
            .networks_mut()
            .into_iter()
            .zip(optimizers.iter_mut())
            .zip(grads)
            .try_for_each(|((net, opt), grad)| net.apply(opt, grad));
        self.optimizers = optimizers;
        Ok(result?)
    }

    /// Place centroids on (jittered) latents of the training inputs.
    fn init_centroids<R: Rng + ?Sized>(&mut self, set: &TrainingSet<T>, rng: &mut R) -> Result<(), DeepTuneError> {
        let (_, cache) = self.trunk.forward(set.inputs.view(), rng)?;
        let latents = self.latents(&cache);
        let n = set.len();
        for (net, z) in self.rbf.iter_mut().zip(&latents) {
            let rbf = Self::rbf_layer_mut(net);
            for mut c in rbf.centroids.rows_mut() {
                let row = z.row(rng.gen_range(0..n));
                for (ck, &zk) in c.iter_mut().zip(row) {
                    *ck = zk + scalar(rng.gen_range(-0.01..0.01));
                }
            }
        }
        self.centroids_ready = true;
        Ok(())
    }

    fn step<R: Rng + ?Sized>(&mut self, set: &TrainingSet<T>, idx: &[usize], rng: &mut R) -> Result<LossParts, DeepTuneError> {
        let dropout = self.arch.dropout > 0.0;
        let (parts, grads) = self.loss_and_gradients(set, idx, dropout, rng)?;
        self.apply(&grads)?;
        Ok(parts)
    }

    fn prepare<R: Rng + ?Sized>(&mut self, set: &TrainingSet<T>, rng: &mut R) -> Result<(), DeepTuneError> {
        if set.is_empty() {
            return Err(DeepTuneError::EmptyTrainingSet);
        }
        if set.inputs.ncols() != self.input_width {
            return Err(DeepTuneError::Shape {
                expected: self.input_width,
                got: set.inputs.ncols(),
            });
        }
        if !self.centroids_ready {
            self.init_centroids(set, rng)?;
        }
        Ok(())
    }

    /// Incremental update: `schedule.steps` gradient steps, each on the full
    /// set or, above `schedule.batch_size` samples, on a random batch.
    pub fn train<R: Rng + ?Sized>(
        &mut self,
        set: &TrainingSet<T>,
        schedule: &TrainSchedule,
        rng: &mut R,
    ) -> Result<LossParts, DeepTuneError> {
        self.prepare(set, rng)?;
        let n = set.len();
        let all: Vec<usize> = (0..n).collect();
        let mut last = LossParts::default();
        for _ in 0..schedule.steps {
            last = if n <= schedule.batch_size {
                self.step(set, &all, rng)?
            } else {
                let idx = index::sample(rng, n, schedule.batch_size).into_vec();
                self.step(set, &idx, rng)?
            };
        }
        self.trained = true;
        Ok(last)
    }

    /// `epochs` passes over the set: full-batch below 512 samples, shuffled
    /// mini-batches of 128 otherwise.
    pub fn train_epochs<R: Rng + ?Sized>(
        &mut self,
        set: &TrainingSet<T>,
        epochs: usize,
        rng: &mut R,
    ) -> Result<LossParts, DeepTuneError> {
        self.prepare(set, rng)?;
        let n = set.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut last = LossParts::default();
        for _ in 0..epochs {
            if n < 512 {
                last = self.step(set, &order, rng)?;
            } else {
                order.shuffle(rng);
                for chunk in order.clone().chunks(128) {
                    last = self.step(set, chunk, rng)?;
                }
            }
        }
        self.trained = true;
        Ok(last)
    }
}

pub(crate) fn optimizer<T: Scalar>(arch: &Architecture) -> Adam<T> {
    Adam::new(scalar(arch.learning_rate))
}

fn unit_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    StandardNormal.sample(rng)
}

/// Weighted sum of min-max normalized metrics. A metric whose observed min
/// equals its max (or that has no stats) contributes 0.
pub fn multi_metric_score(
    metrics: &BTreeMap<String, f64>,
    stats: &MetricStats,
    weights: &BTreeMap<String, f64>,
) -> f64 {
    weights
        .iter()
        .map(|(name, w)| {
            let (Some(v), Some((lo, hi))) = (metrics.get(name), stats.get(name)) else {
                return 0.0;
            };
            if hi > lo {
                w * (v - lo) / (hi - lo)
            } else {
                0.0
            }
        })
        .sum()
}

#[cfg(test)]
mod tests;
