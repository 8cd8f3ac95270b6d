//! Mini-batch SGD with momentum, weight decay and per-layer learning-rate
//! multipliers, plus the replace-the-last-layer fine-tuning protocol.
//!
//! For a parameter `w` in a layer with multiplier `m`:
//!
//! ```text
//! v ← μ·v − m·η·(g + λ·w)
//! w ← w + v
//! ```

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, Targets};
use crate::error::{invalid, Error, Result};
use crate::heads::{self, Head, LossValue};
use crate::nn::{Architecture, Checkpoint, LayerKind, Network};
use crate::tensor::Tensor;

/// Full-scale batch size. Training defaults to `DESK_BATCH_SIZE`.
pub const REFERENCE_BATCH_SIZE: usize = 256;
pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const DEFAULT_WEIGHT_DECAY: f64 = 5.0e-4;
pub const FINE_TUNE_LEARNING_RATE: f64 = 0.01;
pub const SCRATCH_LEARNING_RATE: f64 = 0.001;
/// Default boost applied to a freshly initialized output layer.
pub const DEFAULT_HEAD_LR_MULTIPLIER: f64 = 10.0;
pub const DESK_BATCH_SIZE: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub head: Head,
}

impl TrainConfig {
    /// Momentum and weight decay from the AlexNet recipe, desk-scale batch,
    /// scratch learning rate.
    pub fn new(head: Head, epochs: usize, seed: u64) -> Self {
        Self {
            batch_size: DESK_BATCH_SIZE,
            momentum: DEFAULT_MOMENTUM,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            learning_rate: SCRATCH_LEARNING_RATE,
            epochs,
            seed,
            head,
        }
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid("batch size must be positive"));
        }
        if self.epochs == 0 {
            return Err(invalid("epochs must be positive"));
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return Err(invalid(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(invalid(format!(
                "weight decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Per-parameter velocities, shaped like the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    velocity: Vec<Vec<Vec<f64>>>,
}

impl OptimizerState {
    pub fn new(net: &Network) -> Self {
        Self {
            velocity: net
                .params()
                .iter()
                .map(|g| g.iter().map(|t| vec![0.0; t.len()]).collect())
                .collect(),
        }
    }

    pub fn velocity(&self, layer: usize, param: usize) -> &[f64] {
        &self.velocity[layer][param]
    }
}

/// Apply one update using the gradients stored on `net`'s parameters.
/// Nothing is modified if any gradient is missing or non-finite.
pub fn sgd_step(net: &mut Network, state: &mut OptimizerState, config: &TrainConfig) -> Result<()> {
    for (i, group) in net.params().iter().enumerate() {
        if state.velocity.get(i).map(Vec::len) != Some(group.len()) {
            return Err(Error::Shape(format!(
                "optimizer state does not match layer {i}"
            )));
        }
        for (k, t) in group.iter().enumerate() {
            let g = t
                .grad()
                .ok_or_else(|| invalid(format!("layer {i} parameter {k} has no gradient")))?;
            if state.velocity[i][k].len() != g.len() {
                return Err(Error::Shape(format!(
                    "optimizer state does not match layer {i}"
                )));
            }
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient {} at layer {i} parameter {k} element {j}",
                    g[j]
                )));
            }
        }
    }
    let multipliers: Vec<f64> = net.layers().iter().map(|s| s.lr_multiplier).collect();
    for (i, group) in net.params_mut().iter_mut().enumerate() {
        let step = multipliers[i] * config.learning_rate;
        for (k, t) in group.iter_mut().enumerate() {
            let g = t.grad().expect("checked above").to_vec();
            let v = &mut state.velocity[i][k];
            for ((w, vj), gj) in t.data_mut().iter_mut().zip(v.iter_mut()).zip(g) {
                *vj = config.momentum * *vj - step * (gj + config.weight_decay * *w);
                *w += *vj;
            }
        }
    }
    Ok(())
}

/// Loss of `logits` against the targets at `idx`.
pub fn batch_loss(logits: &Tensor, targets: &Targets, idx: &[usize]) -> Result<LossValue> {
    match targets {
        Targets::Classes(c) => {
            let labels: Vec<usize> = idx.iter().map(|&i| c[i]).collect();
            heads::softmax_loss(logits, &labels)
        }
        Targets::Tags(t) => {
            let q = logits.shape()[1];
            let values: Vec<f64> = idx.iter().flat_map(|&i| t[i].to_values()).collect();
            heads::sigmoid_ce_loss(logits, &Tensor::new(vec![idx.len(), q], values)?)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean per-sample training loss of each epoch.
    pub loss_trace: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        *self.loss_trace.last().unwrap_or(&f64::NAN)
    }

    /// First epoch (1-based) whose loss is at or below `target`.
    pub fn epochs_to_reach(&self, target: f64) -> Option<usize> {
        self.loss_trace
            .iter()
            .position(|&l| l <= target)
            .map(|e| e + 1)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\tloss\n");
        for (e, l) in self.loss_trace.iter().enumerate() {
            let _ = writeln!(out, "{}\t{l:.17e}", e + 1);
        }
        out
    }
}

fn check_compatible(net: &Network, data: &Dataset, head: Head) -> Result<()> {
    if data.is_empty() {
        return Err(invalid("training set is empty"));
    }
    if data.targets.head() != head {
        return Err(invalid(format!(
            "a {head} head cannot train on {} targets",
            data.targets.head()
        )));
    }
    if net.output_width() != data.labels.len() {
        return Err(invalid(format!(
            "network emits {} outputs but the data has {} labels",
            net.output_width(),
            data.labels.len()
        )));
    }
    if net.input_shape() != data.image_shape() {
        return Err(Error::Shape(format!(
            "network expects {:?} images, data has {:?}",
            net.input_shape(),
            data.image_shape()
        )));
    }
    Ok(())
}

/// Train for `config.epochs` epochs with a fresh optimizer state.
pub fn train(net: &mut Network, data: &Dataset, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    check_compatible(net, data, config.head)?;
    let mut state = OptimizerState::new(net);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(config.batch_size) {
            let logits = net.forward(&data.batch(idx))?;
            let loss = batch_loss(&logits, &data.targets, idx)?;
            if !loss.value.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss diverged in epoch {}",
                    epoch + 1
                )));
            }
            total += loss.value * idx.len() as f64;
            net.backward(&loss.grad)?;
            sgd_step(net, &mut state, config)?;
        }
        loss_trace.push(total / data.len() as f64);
    }
    net.zero_grads();
    Ok(TrainReport { loss_trace })
}

/// Per-image confidence vectors under `head`'s activation.
pub fn predict(net: &Network, images: &Tensor, head: Head) -> Result<Vec<Vec<f64>>> {
    let logits = net.infer(images)?;
    (0..logits.rows())
        .map(|i| {
            let z = logits.row(i);
            match head {
                Head::MultiClass => heads::softmax_activation(z),
                Head::MultiLabel => heads::sigmoid_activation(z),
            }
            .map(heads::ConfidenceVector::into_inner)
        })
        .collect()
}

/// [`predict`] over a dataset in chunks of `batch` images.
pub fn predict_dataset(
    net: &Network,
    data: &Dataset,
    head: Head,
    batch: usize,
) -> Result<Vec<Vec<f64>>> {
    let all: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for idx in all.chunks(batch.max(1)) {
        out.extend(predict(net, &data.batch(idx), head)?);
    }
    Ok(out)
}

/// Build a network for `target` whose layers, except the last, carry the
/// checkpoint's weights. The last layer must be linear; it is freshly
/// initialized from `seed` and its learning-rate multiplier set to
/// `head_lr_multiplier`.
pub fn fine_tune_into(
    checkpoint: &Checkpoint,
    target: &Architecture,
    head_lr_multiplier: f64,
    seed: u64,
) -> Result<Network> {
    if !(head_lr_multiplier.is_finite() && head_lr_multiplier >= 1.0) {
        return Err(invalid(format!(
            "head learning-rate multiplier must be at least 1, got {head_lr_multiplier}"
        )));
    }
    let source = checkpoint.network.architecture();
    let last = target
        .layers
        .len()
        .checked_sub(1)
        .ok_or_else(|| invalid("target architecture has no layers"))?;
    if !matches!(target.layers[last].kind, LayerKind::Linear { .. }) {
        return Err(invalid("the final layer to replace must be linear"));
    }
    if source.input_shape != target.input_shape {
        return Err(invalid(format!(
            "checkpoint expects {:?} inputs, target {:?}",
            source.input_shape, target.input_shape
        )));
    }
    if source.layers.len() != target.layers.len() {
        return Err(invalid(format!(
            "checkpoint has {} layers, target {}",
            source.layers.len(),
            target.layers.len()
        )));
    }
    if !matches!(source.layers[last].kind, LayerKind::Linear { .. }) {
        return Err(invalid("checkpoint's final layer is not linear"));
    }
    if let Some(i) = (0..last).find(|&i| source.layers[i].kind != target.layers[i].kind) {
        return Err(invalid(format!(
            "layer {i} differs: checkpoint has {:?}, target {:?}",
            source.layers[i].kind, target.layers[i].kind
        )));
    }
    let mut arch = target.clone();
    arch.layers[last].lr_multiplier = head_lr_multiplier;
    let mut net = Network::new(arch, seed)?;
    for (dst, src) in net.params_mut()[..last]
        .iter_mut()
        .zip(&checkpoint.network.params()[..last])
    {
        dst.clone_from(src);
    }
    Ok(net)
}

/// Replace the checkpoint's final linear layer with a fresh one of width
/// `outputs`.
pub fn fine_tune(
    checkpoint: &Checkpoint,
    outputs: usize,
    head_lr_multiplier: f64,
    seed: u64,
) -> Result<Network> {
    let mut target = checkpoint.network.architecture().clone();
    match target.layers.last_mut() {
        Some(spec) if matches!(spec.kind, LayerKind::Linear { .. }) => {
            spec.kind = LayerKind::Linear { outputs };
        }
        _ => return Err(invalid("checkpoint's final layer is not linear")),
    }
    fine_tune_into(checkpoint, &target, head_lr_multiplier, seed)
}
