use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::arch::{Architecture, LayerSpec, Shape};
use super::ops;
use super::scalar::Scalar;
use crate::error::NnError;

/// Probabilities are clamped here before any logarithm.
pub const PROB_EPS: f64 = 1e-10;

/// Items per chunk when running large inputs through the network.
const CHUNK: usize = 128;

/// How dropout layers behave during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForwardMode {
    /// Fresh Bernoulli masks scaled by `1/(1-p)`, used while training.
    TrainDropout,
    /// Same masking as training, used to sample the approximate posterior.
    McDropout,
    /// No masking and no scaling.
    Deterministic,
}

/// Weights and biases of one conv or dense layer. `weights` is stored
/// `in_dim x out_dim` row-major; for convolutions `in_dim = k*k*c_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Param<S: Scalar> {
    pub weights: Vec<S>,
    pub bias: Vec<S>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl<S: Scalar> Param<S> {
    fn zeros_like(&self) -> Self {
        Self {
            weights: vec![S::zero(); self.weights.len()],
            bias: vec![S::zero(); self.bias.len()],
            in_dim: self.in_dim,
            out_dim: self.out_dim,
        }
    }

    fn sq_norm(&self) -> f64 {
        self.weights.iter().map(|w| w.as_f64() * w.as_f64()).sum()
    }
}

/// Per-layer gradients, aligned with `ModelState::layers`.
pub type Grads<S> = Vec<Option<Param<S>>>;

/// Network weights plus the snapshot taken at initialisation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<S: Scalar> {
    arch: Architecture,
    shapes: Vec<Shape>,
    params: Vec<Option<Param<S>>>,
    init_snapshot: Vec<Option<Param<S>>>,
}

/// Values saved during a taped forward pass for backpropagation.
pub(crate) enum Cache<S> {
    Conv { input: Vec<S> },
    Relu { active: Vec<bool> },
    Pool { arg: Vec<u32>, input_len: usize },
    Dropout { mask: Option<Vec<S>> },
    Dense { input: Vec<S> },
    Softmax,
}

impl<S: Scalar> ModelState<S> {
    /// Fan-in scaled uniform initialisation, `U(-sqrt(6/fan_in), +)`, zero
    /// biases. Deterministic in `seed`.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self, NnError> {
        let shapes = arch.shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(arch.layers.len());
        for (i, layer) in arch.layers.iter().enumerate() {
            let dims = match *layer {
                LayerSpec::Conv { filters, kernel } => {
                    Some((kernel * kernel * shapes[i].channels, filters))
                }
                LayerSpec::Dense { units } => Some((shapes[i].len(), units)),
                _ => None,
            };
            params.push(dims.map(|(in_dim, out_dim)| {
                let limit = (6.0 / in_dim as f64).sqrt();
                Param {
                    weights: (0..in_dim * out_dim)
                        .map(|_| S::of(rng.random_range(-limit..limit)))
                        .collect(),
                    bias: vec![S::zero(); out_dim],
                    in_dim,
                    out_dim,
                }
            }));
        }
        Ok(Self {
            arch,
            shapes,
            init_snapshot: params.clone(),
            params,
        })
    }

    pub(crate) fn from_parts(
        arch: Architecture,
        params: Vec<Option<Param<S>>>,
        init_snapshot: Vec<Option<Param<S>>>,
    ) -> Result<Self, NnError> {
        let shapes = arch.shapes()?;
        let model = Self {
            arch,
            shapes,
            params,
            init_snapshot,
        };
        let fresh = Self::init(model.arch.clone(), 0)?;
        let same_layout = |ps: &[Option<Param<S>>]| {
            ps.len() == fresh.params.len()
                && ps.iter().zip(&fresh.params).all(|(a, b)| match (a, b) {
                    (Some(a), Some(b)) => {
                        a.weights.len() == b.weights.len()
                            && a.bias.len() == b.bias.len()
                            && a.in_dim == b.in_dim
                            && a.out_dim == b.out_dim
                    }
                    (None, None) => true,
                    _ => false,
                })
        };
        if !same_layout(&model.params) || !same_layout(&model.init_snapshot) {
            return Err(NnError::Checkpoint(
                "parameter shapes do not match the architecture".into(),
            ));
        }
        if !model.all_finite() {
            return Err(NnError::Checkpoint("non-finite weights".into()));
        }
        Ok(model)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes
    }

    pub fn input_len(&self) -> usize {
        self.arch.input.len()
    }

    pub fn params(&self) -> &[Option<Param<S>>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Option<Param<S>>] {
        &mut self.params
    }

    pub fn init_snapshot(&self) -> &[Option<Param<S>>] {
        &self.init_snapshot
    }

    /// Restores the weights captured at initialisation.
    pub fn reset_to_init(&mut self) {
        self.params.clone_from(&self.init_snapshot);
    }

    /// Makes the current weights the new reset target (e.g. after
    /// loading pre-trained weights).
    pub fn snapshot_current(&mut self) {
        self.init_snapshot.clone_from(&self.params);
    }

    pub fn weight_sq_norm(&self) -> f64 {
        self.params.iter().flatten().map(Param::sq_norm).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params
            .iter()
            .chain(&self.init_snapshot)
            .flatten()
            .all(|p| p.weights.iter().chain(&p.bias).all(|v| v.is_finite()))
    }

    /// SHA-256 over the bit patterns of all live weights, hex encoded.
    pub fn weights_digest(&self) -> String {
        digest(&self.params)
    }

    pub fn init_digest(&self) -> String {
        digest(&self.init_snapshot)
    }

    /// Index of the first layer whose output depends on the dropout masks.
    pub fn stochastic_start(&self) -> usize {
        self.arch.stochastic_start()
    }

    /// Per-item length of the activation entering layer `layer`.
    pub fn activation_len(&self, layer: usize) -> usize {
        self.shapes[layer].len()
    }

    fn batch_len(&self, input: &[S], layer: usize) -> Result<usize, NnError> {
        let item = self.shapes[layer].len();
        if input.len() % item != 0 {
            return Err(NnError::InputShape {
                expected: item,
                found: input.len(),
            });
        }
        Ok(input.len() / item)
    }

    /// Runs the dropout-free prefix of the network (every layer before the
    /// first dropout) in chunks, returning the activations that feed the
    /// stochastic part.
    pub fn features(&self, inputs: &[S]) -> Result<Vec<S>, NnError> {
        let n = self.batch_len(inputs, 0)?;
        let split = self.stochastic_start();
        let item = self.shapes[0].len();
        let mut out = Vec::with_capacity(n * self.shapes[split].len());
        let mut noop = NoRng;
        for start in (0..n).step_by(CHUNK) {
            let end = (start + CHUNK).min(n);
            let chunk = inputs[start * item..end * item].to_vec();
            let f = self.run_layers(
                0..split,
                chunk,
                end - start,
                ForwardMode::Deterministic,
                &mut noop,
                None,
            )?;
            out.extend_from_slice(&f);
        }
        Ok(out)
    }

    /// Runs the stochastic suffix on prefix activations from [`features`],
    /// in chunks of 128 items. Within a chunk, masks are drawn layer by
    /// layer, item-major within a layer; chunks draw in order.
    ///
    /// [`features`]: ModelState::features
    pub fn forward_from_features<R: Rng + ?Sized>(
        &self,
        features: &[S],
        mode: ForwardMode,
        rng: &mut R,
    ) -> Result<Vec<S>, NnError> {
        let split = self.stochastic_start();
        let n = self.batch_len(features, split)?;
        let item = self.shapes[split].len();
        let layers = split..self.arch.layers.len();
        if n <= CHUNK {
            return self.run_layers(layers, features.to_vec(), n, mode, rng, None);
        }
        let mut out = Vec::with_capacity(n * self.num_classes());
        for start in (0..n).step_by(CHUNK) {
            let end = (start + CHUNK).min(n);
            let chunk = features[start * item..end * item].to_vec();
            out.extend(self.run_layers(layers.clone(), chunk, end - start, mode, rng, None)?);
        }
        Ok(out)
    }

    /// Softmax probabilities, `batch x C`.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        batch: &[S],
        mode: ForwardMode,
        rng: &mut R,
    ) -> Result<Vec<S>, NnError> {
        let features = self.features(batch)?;
        self.forward_from_features(&features, mode, rng)
    }

    /// Softmax probabilities with dropout disabled.
    pub fn forward_deterministic(&self, batch: &[S]) -> Result<Vec<S>, NnError> {
        self.forward(batch, ForwardMode::Deterministic, &mut NoRng)
    }

    pub(crate) fn run_layers<R: Rng + ?Sized>(
        &self,
        layers: std::ops::Range<usize>,
        mut x: Vec<S>,
        batch: usize,
        mode: ForwardMode,
        rng: &mut R,
        mut tape: Option<&mut Vec<Cache<S>>>,
    ) -> Result<Vec<S>, NnError> {
        for i in layers {
            let s = self.shapes[i];
            x = match self.arch.layers[i] {
                LayerSpec::Conv { kernel, .. } => {
                    let p = self.params[i].as_ref().expect("conv params");
                    let out = ops::conv2d(&x, batch, s, kernel, &p.weights, &p.bias);
                    if let Some(t) = tape.as_deref_mut() {
                        t.push(Cache::Conv { input: x });
                    }
                    out
                }
                LayerSpec::Relu => {
                    ops::relu_inplace(&mut x);
                    if let Some(t) = tape.as_deref_mut() {
                        t.push(Cache::Relu {
                            active: x.iter().map(|&v| v > S::zero()).collect(),
                        });
                    }
                    x
                }
                LayerSpec::MaxPool { size } => {
                    let input_len = x.len();
                    let (out, arg) = ops::maxpool_forward(&x, batch, s, size);
                    if let Some(t) = tape.as_deref_mut() {
                        t.push(Cache::Pool { arg, input_len });
                    }
                    out
                }
                LayerSpec::Dropout { rate } => {
                    let mask = if mode != ForwardMode::Deterministic && rate > 0.0 {
                        ops::dropout_inplace(&mut x, rate, rng, tape.is_some())
                    } else {
                        None
                    };
                    if let Some(t) = tape.as_deref_mut() {
                        t.push(Cache::Dropout { mask });
                    }
                    x
                }
                LayerSpec::Dense { .. } => {
                    let p = self.params[i].as_ref().expect("dense params");
                    let out = ops::dense_forward(&x, batch, &p.weights, &p.bias);
                    if let Some(t) = tape.as_deref_mut() {
                        t.push(Cache::Dense { input: x });
                    }
                    out
                }
                LayerSpec::Softmax => {
                    ops::softmax_rows(&mut x, self.arch.num_classes);
                    if let Some(t) = tape.as_deref_mut() {
                        t.push(Cache::Softmax);
                    }
                    x
                }
            };
            if x.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite { layer: i });
            }
        }
        Ok(x)
    }

    /// Mean cross-entropy of the true class (probabilities clamped at
    /// [`PROB_EPS`]) plus `weight_decay / 2 * sum ||W||^2`, and its gradient.
    /// Dropout masks come from `rng` exactly as in a training forward pass.
    pub fn loss_and_grads<R: Rng + ?Sized>(
        &self,
        batch: &[S],
        labels: &[u8],
        weight_decay: f64,
        rng: &mut R,
    ) -> Result<(f64, Grads<S>), NnError> {
        let n = self.batch_len(batch, 0)?;
        let c = self.arch.num_classes;
        if labels.len() != n {
            return Err(NnError::InputShape {
                expected: n,
                found: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= c) {
            return Err(NnError::Label {
                label: bad as usize,
                num_classes: c,
            });
        }
        let mut tape = Vec::with_capacity(self.arch.layers.len());
        let probs = self.run_layers(
            0..self.arch.layers.len(),
            batch.to_vec(),
            n,
            ForwardMode::TrainDropout,
            rng,
            Some(&mut tape),
        )?;

        let mut data_loss = 0.0;
        let inv_n = S::of(1.0 / n as f64);
        let mut delta = probs.clone();
        for (b, &label) in labels.iter().enumerate() {
            let p = probs[b * c + label as usize].as_f64();
            data_loss -= p.max(PROB_EPS).ln();
            delta[b * c + label as usize] -= S::one();
        }
        for d in delta.iter_mut() {
            *d *= inv_n;
        }
        let loss = data_loss / n as f64 + 0.5 * weight_decay * self.weight_sq_norm();

        let mut grads: Grads<S> = self
            .params
            .iter()
            .map(|p| p.as_ref().map(Param::zeros_like))
            .collect();
        // The softmax cache is the last entry; `delta` is already the
        // gradient with respect to the logits.
        let last = self.arch.layers.len() - 1;
        for i in (0..last).rev() {
            let need_dx = i > 0;
            let cache = &tape[i];
            delta = match (cache, &self.arch.layers[i]) {
                (Cache::Conv { input }, LayerSpec::Conv { kernel, .. }) => {
                    let p = self.params[i].as_ref().expect("conv params");
                    let g = grads[i].as_mut().expect("conv grads");
                    ops::conv2d_backward(
                        input,
                        n,
                        self.shapes[i],
                        *kernel,
                        &p.weights,
                        &delta,
                        &mut g.weights,
                        &mut g.bias,
                        need_dx,
                    )
                    .unwrap_or_default()
                }
                (Cache::Dense { input }, LayerSpec::Dense { .. }) => {
                    let p = self.params[i].as_ref().expect("dense params");
                    let g = grads[i].as_mut().expect("dense grads");
                    ops::linear_backward(
                        input,
                        n,
                        &p.weights,
                        &delta,
                        &mut g.weights,
                        &mut g.bias,
                        need_dx,
                    )
                    .unwrap_or_default()
                }
                (Cache::Relu { active }, _) => {
                    for (d, &a) in delta.iter_mut().zip(active) {
                        if !a {
                            *d = S::zero();
                        }
                    }
                    delta
                }
                (Cache::Pool { arg, input_len }, _) => {
                    ops::maxpool_backward(&delta, arg, *input_len)
                }
                (Cache::Dropout { mask }, _) => {
                    if let Some(m) = mask {
                        for (d, &k) in delta.iter_mut().zip(m) {
                            *d *= k;
                        }
                    }
                    delta
                }
                (Cache::Softmax, _) | (Cache::Conv { .. }, _) | (Cache::Dense { .. }, _) => {
                    unreachable!("tape out of sync with layers")
                }
            };
        }
        if weight_decay != 0.0 {
            let wd = S::of(weight_decay);
            for (g, p) in grads.iter_mut().zip(&self.params) {
                if let (Some(g), Some(p)) = (g, p) {
                    for (gw, &w) in g.weights.iter_mut().zip(&p.weights) {
                        *gw += wd * w;
                    }
                }
            }
        }
        Ok((loss, grads))
    }

    /// Plain SGD update `w <- w - lr * g`.
    pub fn apply_sgd(&mut self, grads: &Grads<S>, learning_rate: f64) {
        let lr = S::of(learning_rate);
        for (p, g) in self.params.iter_mut().zip(grads) {
            if let (Some(p), Some(g)) = (p, g) {
                for (w, &d) in p.weights.iter_mut().zip(&g.weights) {
                    *w -= lr * d;
                }
                for (b, &d) in p.bias.iter_mut().zip(&g.bias) {
                    *b -= lr * d;
                }
            }
        }
    }
}

fn digest<S: Scalar>(params: &[Option<Param<S>>]) -> String {
    let mut h = Sha256::new();
    for p in params.iter().flatten() {
        for v in p.weights.iter().chain(&p.bias) {
            h.update(v.as_f64().to_bits().to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Rng stand-in for passes that never draw masks.
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("deterministic pass drew randomness")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("deterministic pass drew randomness")
    }
    fn fill_bytes(&mut self, _dst: &mut [u8]) {
        unreachable!("deterministic pass drew randomness")
    }
}
