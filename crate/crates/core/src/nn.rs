//! MLP networks with batch normalization, the conditional generator,
//! optimizers and a plain supervised training loop for the teacher.
//!
//! `forward` never mutates a network. Running-statistic and activation-range
//! updates come back in [`Forward`] and are applied with
//! [`Mlp::apply_updates`], so a network borrowed immutably is frozen by
//! construction.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::data::SeededRng;
use crate::error::{Error, Result};
use crate::quant::{fake_quant, FakeQuantState, QuantSpec, Range};
use crate::tensor::{Gradients, Graph, Tensor, Var};

/// How batch normalization and activation observers behave in a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Batch statistics; running statistics and activation ranges update.
    Train,
    /// Running statistics; activation ranges frozen.
    Eval,
    /// Running statistics; activation ranges update. Used to calibrate Q.
    Calibrate,
    /// Batch statistics without any update. Used to re-probe a generator.
    Probe,
}

impl Mode {
    fn batch_stats(self) -> bool {
        matches!(self, Mode::Train | Mode::Probe)
    }

    fn updates_bn(self) -> bool {
        matches!(self, Mode::Train)
    }

    fn observes(self) -> bool {
        matches!(self, Mode::Train | Mode::Calibrate)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `[out × in]`
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    /// Uniform init in `±1/√in`.
    pub fn new(inputs: usize, outputs: usize, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let w = (0..inputs * outputs).map(|_| rng.uniform_in(-bound, bound)).collect();
        let b = (0..outputs).map(|_| rng.uniform_in(-bound, bound)).collect();
        Linear {
            weight: Tensor::new(vec![outputs, inputs], w).expect("shape").with_grad(),
            bias: Tensor::new(vec![outputs], b).expect("shape").with_grad(),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }
}

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// Batch normalization over the feature axis.
///
/// Batch variance is the biased (population) estimator. Running statistics
/// follow `new = (1 − momentum)·old + momentum·batch`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        BatchNorm {
            gamma: Tensor::full(&[width], 1.0).with_grad(),
            beta: Tensor::zeros(&[width]).with_grad(),
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }

    pub fn width(&self) -> usize {
        self.running_mean.len()
    }

    /// Running mean and standard deviation `√(σ² + eps)`.
    pub fn running_stats(&self) -> BnStats {
        BnStats {
            mean: self.running_mean.clone(),
            std: self.running_var.iter().map(|v| (v + self.eps).sqrt()).collect(),
            eps: self.eps,
        }
    }
}

/// Reference statistics of one BN site.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Linear(Linear),
    BatchNorm(BatchNorm),
    Relu,
}

/// Widths of an MLP: `input → hidden… → output`, with BN + ReLU after each
/// hidden linear layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::config(format!("zero width in architecture {self:?}")));
        }
        Ok(())
    }
}

/// Fake quantization attached to a network: weights of every linear layer
/// and the output of every hidden ReLU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantization {
    pub spec: QuantSpec,
    /// One per ReLU, in layer order.
    pub sites: Vec<FakeQuantState>,
}

#[derive(Debug, Clone, Default)]
struct Updates {
    bn: Vec<(usize, Vec<f64>, Vec<f64>)>,
    ranges: Vec<(usize, Range)>,
}

/// Result of a forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub output: Var,
    /// Input of each BatchNorm layer, in layer order.
    pub bn_inputs: Vec<Var>,
    /// Parameter leaves, aligned with [`Mlp::params`].
    pub params: Vec<Var>,
    updates: Updates,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    arch: Architecture,
    layers: Vec<Layer>,
    mode: Mode,
    quant: Option<Quantization>,
}

impl Mlp {
    pub fn new(arch: Architecture, rng: &mut SeededRng) -> Result<Self> {
        arch.validate()?;
        let mut layers = Vec::new();
        let mut width = arch.input_dim;
        for &h in &arch.hidden {
            layers.push(Layer::Linear(Linear::new(width, h, rng)));
            layers.push(Layer::BatchNorm(BatchNorm::new(h)));
            layers.push(Layer::Relu);
            width = h;
        }
        layers.push(Layer::Linear(Linear::new(width, arch.output_dim, rng)));
        Ok(Mlp {
            arch,
            layers,
            mode: Mode::Train,
            quant: None,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.arch.output_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn quantization(&self) -> Option<&Quantization> {
        self.quant.as_ref()
    }

    pub fn set_quantization(&mut self, quant: Option<Quantization>) -> Result<()> {
        if let Some(q) = &quant {
            let relus = self.layers.iter().filter(|l| matches!(l, Layer::Relu)).count();
            if q.sites.len() != relus {
                return Err(Error::contract(format!(
                    "{} activation sites for {relus} ReLU layers",
                    q.sites.len()
                )));
            }
        }
        self.quant = quant;
        Ok(())
    }

    pub fn bn_layers(&self) -> impl Iterator<Item = &BatchNorm> {
        self.layers.iter().filter_map(|l| match l {
            Layer::BatchNorm(bn) => Some(bn),
            _ => None,
        })
    }

    pub fn bn_stats(&self) -> Vec<BnStats> {
        self.bn_layers().map(BatchNorm::running_stats).collect()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                Layer::Linear(lin) => out.extend([&lin.weight, &lin.bias]),
                Layer::BatchNorm(bn) => out.extend([&bn.gamma, &bn.beta]),
                Layer::Relu => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Linear(lin) => out.extend([&mut lin.weight, &mut lin.bias]),
                Layer::BatchNorm(bn) => out.extend([&mut bn.gamma, &mut bn.beta]),
                Layer::Relu => {}
            }
        }
        out
    }

    /// Parameter names in [`Mlp::params`] order.
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            match l {
                Layer::Linear(_) => out.extend([format!("layers.{i}.weight"), format!("layers.{i}.bias")]),
                Layer::BatchNorm(_) => out.extend([format!("layers.{i}.gamma"), format!("layers.{i}.beta")]),
                Layer::Relu => {}
            }
        }
        out
    }

    pub fn set_trainable(&mut self, on: bool) {
        self.params_mut().into_iter().for_each(|p| p.set_requires_grad(on));
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Tensor::zero_grad);
    }

    pub fn accumulate_grads(&mut self, grads: &Gradients, fwd: &Forward) -> Result<()> {
        let vars = fwd.params.clone();
        for (p, v) in self.params_mut().into_iter().zip(vars) {
            if p.requires_grad() {
                grads.accumulate_into(v, p)?;
            }
        }
        Ok(())
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Forward> {
        match g.shape(x) {
            [_, d] if *d == self.arch.input_dim => {}
            s => return Err(Error::dim("forward", s, &[0, self.arch.input_dim])),
        }
        let mode = self.mode;
        let mut h = x;
        let mut bn_inputs = Vec::new();
        let mut params = Vec::new();
        let mut updates = Updates::default();
        let mut site = 0;
        for (li, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Linear(lin) => {
                    let w = g.leaf(&lin.weight);
                    let b = g.leaf(&lin.bias);
                    params.extend([w, b]);
                    let w_used = match &self.quant {
                        Some(q) => fake_quant(g, w, q.spec, Range::of(lin.weight.data()))?,
                        None => w,
                    };
                    let y = g.matmul_nt(h, w_used)?;
                    h = g.add_row(y, b)?;
                }
                Layer::BatchNorm(bn) => {
                    bn_inputs.push(h);
                    let gamma = g.leaf(&bn.gamma);
                    let beta = g.leaf(&bn.beta);
                    params.extend([gamma, beta]);
                    let normed = if mode.batch_stats() {
                        if g.shape(h)[0] < 2 {
                            return Err(Error::contract("batch statistics need at least 2 rows"));
                        }
                        let mean = g.col_mean(h)?;
                        let neg_mean = g.neg(mean);
                        let centered = g.add_row(h, neg_mean)?;
                        let sq = g.square(centered);
                        let var = g.col_mean(sq)?;
                        if mode.updates_bn() {
                            updates.bn.push((li, g.value(mean).to_vec(), g.value(var).to_vec()));
                        }
                        let var_eps = g.add_scalar(var, bn.eps);
                        let inv_std = g.powf(var_eps, -0.5);
                        g.mul_row(centered, inv_std)?
                    } else {
                        let neg_mean = Tensor::new(vec![bn.width()], bn.running_mean.iter().map(|m| -m).collect())?;
                        let inv_std = Tensor::new(
                            vec![bn.width()],
                            bn.running_var.iter().map(|v| 1.0 / (v + bn.eps).sqrt()).collect(),
                        )?;
                        let neg_mean = g.constant(&neg_mean);
                        let inv_std = g.constant(&inv_std);
                        let centered = g.add_row(h, neg_mean)?;
                        g.mul_row(centered, inv_std)?
                    };
                    let scaled = g.mul_row(normed, gamma)?;
                    h = g.add_row(scaled, beta)?;
                }
                Layer::Relu => {
                    h = g.relu(h);
                    if let Some(q) = &self.quant {
                        let state = &q.sites[site];
                        let range = if mode.observes() {
                            let batch = Range::of(g.value(h)).expect("non-empty activation");
                            let r = state.updated_range(batch);
                            updates.ranges.push((site, r));
                            Some(r)
                        } else {
                            state.range
                        };
                        h = fake_quant(g, h, q.spec, range)?;
                    }
                    site += 1;
                }
            }
        }
        Ok(Forward {
            output: h,
            bn_inputs,
            params,
            updates,
        })
    }

    /// Applies the running-statistic and activation-range updates recorded
    /// by a forward pass.
    pub fn apply_updates(&mut self, fwd: &Forward) {
        for (li, mean, var) in &fwd.updates.bn {
            if let Layer::BatchNorm(bn) = &mut self.layers[*li] {
                let m = bn.momentum;
                for (r, b) in bn.running_mean.iter_mut().zip(mean) {
                    *r = (1.0 - m) * *r + m * b;
                }
                for (r, b) in bn.running_var.iter_mut().zip(var) {
                    *r = (1.0 - m) * *r + m * b;
                }
            }
        }
        if let Some(q) = &mut self.quant {
            for (site, r) in &fwd.updates.ranges {
                if !q.sites[*site].frozen {
                    q.sites[*site].range = Some(*r);
                }
            }
        }
    }

    /// Eval-mode logits for a plain feature matrix.
    pub fn predict_logits(&self, x: &Tensor) -> Result<Tensor> {
        let mut net = self.clone();
        net.set_mode(Mode::Eval);
        let mut g = Graph::new();
        let xv = g.constant(x);
        let fwd = net.forward(&mut g, xv)?;
        Ok(g.tensor(fwd.output))
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let logits = self.predict_logits(x)?;
        Ok((0..logits.rows()).map(|r| argmax(logits.row(r))).collect())
    }

    /// Hash over every parameter, running statistic and activation range.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for p in self.params() {
            p.shape().hash(&mut h);
            p.data().iter().for_each(|v| v.to_bits().hash(&mut h));
        }
        for bn in self.bn_layers() {
            bn.running_mean
                .iter()
                .chain(&bn.running_var)
                .for_each(|v| v.to_bits().hash(&mut h));
        }
        if let Some(q) = &self.quant {
            q.spec.bits().hash(&mut h);
            for s in &q.sites {
                if let Some(r) = s.range {
                    r.min.to_bits().hash(&mut h);
                    r.max.to_bits().hash(&mut h);
                }
            }
        }
        h.finish()
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Maps `concat(z, embed(y))` to the teacher's input space.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalGenerator {
    /// `[C × e]`
    pub embedding: Tensor,
    pub body: Mlp,
    noise_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorShape {
    pub noise_dim: usize,
    pub embed_dim: usize,
    pub hidden: [usize; 2],
}

impl Default for GeneratorShape {
    fn default() -> Self {
        GeneratorShape {
            noise_dim: 64,
            embed_dim: 8,
            hidden: [64, 64],
        }
    }
}

impl ConditionalGenerator {
    pub fn new(shape: GeneratorShape, classes: usize, sample_dim: usize, rng: &mut SeededRng) -> Result<Self> {
        if shape.noise_dim == 0 || shape.embed_dim == 0 || classes < 2 {
            return Err(Error::config(format!(
                "generator shape {shape:?} with {classes} classes"
            )));
        }
        let emb = (0..classes * shape.embed_dim).map(|_| rng.normal()).collect();
        let body = Mlp::new(
            Architecture {
                input_dim: shape.noise_dim + shape.embed_dim,
                hidden: shape.hidden.to_vec(),
                output_dim: sample_dim,
            },
            rng,
        )?;
        Ok(ConditionalGenerator {
            embedding: Tensor::new(vec![classes, shape.embed_dim], emb)?.with_grad(),
            body,
            noise_dim: shape.noise_dim,
        })
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn classes(&self) -> usize {
        self.embedding.shape()[0]
    }

    pub fn sample_dim(&self) -> usize {
        self.body.output_dim()
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.body.set_mode(mode);
    }

    pub fn set_trainable(&mut self, on: bool) {
        self.embedding.set_requires_grad(on);
        self.body.set_trainable(on);
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.embedding];
        out.extend(self.body.params_mut());
        out
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Tensor::zero_grad);
    }

    /// `x = G(z | y)`. The returned forward's `params` lists the embedding
    /// first, then the body's parameters.
    pub fn generate(&self, g: &mut Graph, z: Var, y: Var) -> Result<Forward> {
        let classes = self.classes();
        match (g.shape(z), g.shape(y)) {
            ([b, nz], [b2, c]) if b == b2 && *nz == self.noise_dim && *c == classes => {}
            (zs, ys) => return Err(Error::dim("generate", zs, ys)),
        }
        for row in g.value(y).chunks(classes) {
            let ones = row.iter().filter(|v| **v == 1.0).count();
            let zeros = row.iter().filter(|v| **v == 0.0).count();
            if ones != 1 || zeros != classes - 1 {
                return Err(Error::contract(format!("label row {row:?} is not one-hot")));
            }
        }
        let table = g.leaf(&self.embedding);
        let embedded = g.matmul(y, table)?;
        let input = g.concat_cols(z, embedded)?;
        let mut fwd = self.body.forward(g, input)?;
        fwd.params.insert(0, table);
        Ok(fwd)
    }

    pub fn apply_updates(&mut self, fwd: &Forward) {
        self.body.apply_updates(fwd);
    }

    pub fn accumulate_grads(&mut self, grads: &Gradients, fwd: &Forward) -> Result<()> {
        let vars = fwd.params.clone();
        for (p, v) in self.params_mut().into_iter().zip(vars) {
            if p.requires_grad() {
                grads.accumulate_into(v, p)?;
            }
        }
        Ok(())
    }
}

pub trait Optimizer {
    /// Updates every parameter that requires grad. A trainable parameter
    /// without a gradient is a contract error.
    fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()>;
}

fn ensure_state(state: &mut Vec<Vec<f64>>, params: &[&mut Tensor]) -> Result<()> {
    if state.is_empty() {
        *state = params.iter().map(|p| vec![0.0; p.numel()]).collect();
    }
    if state.len() != params.len() || state.iter().zip(params).any(|(s, p)| s.len() != p.numel()) {
        return Err(Error::contract("optimizer state does not match parameters"));
    }
    Ok(())
}

fn grad_of(p: &Tensor, i: usize) -> Result<&[f64]> {
    p.grad()
        .ok_or_else(|| Error::contract(format!("parameter {i} has no gradient")))
}

/// SGD with momentum, weight decay and optional Nesterov lookahead:
/// `g ← ∇ + wd·w; v ← μv + g; w ← w − lr·(g + μv)` (Nesterov) or
/// `w ← w − lr·v` (classic).
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub nesterov: bool,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64, nesterov: bool) -> Self {
        Sgd {
            lr,
            momentum,
            weight_decay,
            nesterov,
            velocity: Vec::new(),
        }
    }
}

impl Optimizer for Sgd {
    fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        ensure_state(&mut self.velocity, params)?;
        for (i, p) in params.iter_mut().enumerate() {
            if !p.requires_grad() {
                continue;
            }
            let grad = grad_of(p, i)?.to_vec();
            let v = &mut self.velocity[i];
            for ((w, gr), vel) in p.data_mut().iter_mut().zip(grad).zip(v.iter_mut()) {
                let d = gr + self.weight_decay * *w;
                *vel = self.momentum * *vel + d;
                let update = if self.nesterov { d + self.momentum * *vel } else { *vel };
                *w -= self.lr * update;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self
    }
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        ensure_state(&mut self.m, params)?;
        ensure_state(&mut self.v, params)?;
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (i, p) in params.iter_mut().enumerate() {
            if !p.requires_grad() {
                continue;
            }
            let grad = grad_of(p, i)?.to_vec();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((w, g), m), v) in p.data_mut().iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Mean cross-entropy of `logits` against integer labels.
pub fn cross_entropy(g: &mut Graph, logits: Var, labels: &[usize]) -> Result<Var> {
    let classes = g.shape(logits)[1];
    let y = crate::data::one_hot(labels, classes)?;
    let y = g.constant(&y);
    let logp = g.log_softmax(logits)?;
    let picked = g.mul(logp, y)?;
    let per_row = g.sum_rows(picked)?;
    let mean = g.mean(per_row);
    Ok(g.neg(mean))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            epochs: 30,
            batch_size: 32,
            lr: 1e-2,
        }
    }
}

/// Supervised training with Adam and shuffled mini-batches. Returns the
/// mean loss of each epoch.
pub fn train_classifier(
    net: &mut Mlp,
    features: &Tensor,
    labels: &[usize],
    settings: &TrainSettings,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    if features.rows() != labels.len() {
        return Err(Error::dim("train_classifier", features.shape(), &[labels.len()]));
    }
    if settings.batch_size < 2 {
        return Err(Error::config("batch size must be at least 2"));
    }
    let d = features.cols();
    let mut opt = Adam::new(settings.lr);
    let mut order: Vec<usize> = (0..labels.len()).collect();
    let mut history = Vec::with_capacity(settings.epochs);
    net.set_mode(Mode::Train);
    net.set_trainable(true);
    for _ in 0..settings.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(settings.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let x: Vec<f64> = chunk.iter().flat_map(|&i| features.row(i).iter().copied()).collect();
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let mut g = Graph::new();
            let xv = g.input(&[chunk.len(), d], x, false)?;
            let fwd = net.forward(&mut g, xv)?;
            let loss = cross_entropy(&mut g, fwd.output, &y)?;
            let value = g.scalar(loss);
            if !value.is_finite() {
                return Err(Error::NonFinite("teacher loss"));
            }
            let grads = g.backward(loss)?;
            net.zero_grad();
            net.accumulate_grads(&grads, &fwd)?;
            net.apply_updates(&fwd);
            opt.step(&mut net.params_mut())?;
            total += value;
            batches += 1;
        }
        history.push(total / batches.max(1) as f64);
    }
    net.set_mode(Mode::Eval);
    Ok(history)
}

pub fn accuracy(net: &Mlp, features: &Tensor, labels: &[usize]) -> Result<f64> {
    let pred = net.predict(features)?;
    let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len().max(1) as f64)
}
