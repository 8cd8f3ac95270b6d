//! Sequential networks with cached reverse-mode differentiation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{self, ConvGeom, LayerKind, LayerSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Weights are drawn from `U(-a, a)` with `a = INIT_GAIN / sqrt(fan_in)`.
pub const INIT_GAIN: f64 = 2.449_489_742_783_178; // sqrt(6)

/// Input shape plus an ordered layer list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    /// Per-sample input shape, `[C, H, W]` or `[F]`.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Self {
        Self {
            input_shape,
            layers,
        }
    }

    /// The default desk-scale CNN:
    /// conv(8,3×3) → relu → pool(2) → conv(16,3×3) → relu → pool(2) →
    /// flatten → linear(64) → relu → linear(outputs).
    pub fn desk_scale(input_shape: [usize; 3], outputs: usize) -> Self {
        Self::new(
            input_shape.to_vec(),
            vec![
                LayerSpec::conv2d(8, 3),
                LayerSpec::relu(),
                LayerSpec::maxpool2d(2),
                LayerSpec::conv2d(16, 3),
                LayerSpec::relu(),
                LayerSpec::maxpool2d(2),
                LayerSpec::flatten(),
                LayerSpec::linear(64),
                LayerSpec::relu(),
                LayerSpec::linear(outputs),
            ],
        )
    }

    /// Per-sample activation shapes; entry `i` is the input of layer `i`,
    /// the last entry is the network output.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::Shape(format!(
                "input shape {:?} must have positive extents",
                self.input_shape
            )));
        }
        let mut shapes = vec![self.input_shape.clone()];
        for (i, spec) in self.layers.iter().enumerate() {
            let next = spec.output_shape(i, shapes.last().unwrap())?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn output_width(&self) -> Result<usize> {
        Ok(self.shapes()?.last().unwrap().iter().product())
    }
}

#[derive(Debug, Clone, Default)]
struct Cache {
    inputs: Vec<Tensor>,
    argmax: Vec<Vec<usize>>,
}

/// A sequential network: layer list, per-layer parameters, and the seed
/// that initialized them.
#[derive(Debug, Clone)]
pub struct Network {
    arch: Architecture,
    shapes: Vec<Vec<usize>>,
    params: Vec<Vec<Tensor>>,
    seed: u64,
    cache: Option<Cache>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch && self.seed == other.seed && self.params == other.params
    }
}

impl Network {
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        let shapes = arch.shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = arch
            .layers
            .iter()
            .zip(&shapes)
            .map(|(spec, input)| {
                spec.param_shapes(input)
                    .into_iter()
                    .enumerate()
                    .map(|(k, shape)| {
                        if k == 0 {
                            let fan_in: usize = shape[1..].iter().product();
                            let a = INIT_GAIN / (fan_in as f64).sqrt();
                            let n: usize = shape.iter().product();
                            let data = (0..n).map(|_| rng.random_range(-a..a)).collect();
                            Tensor::new(shape, data).expect("shape is consistent")
                        } else {
                            Tensor::zeros(shape)
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            arch,
            shapes,
            params,
            seed,
            cache: None,
        })
    }

    /// Rebuild a network from explicit parameters, checking every shape.
    pub fn from_parts(arch: Architecture, seed: u64, params: Vec<Vec<Tensor>>) -> Result<Self> {
        let shapes = arch.shapes()?;
        if params.len() != arch.layers.len() {
            return Err(Error::Shape(format!(
                "{} parameter groups for {} layers",
                params.len(),
                arch.layers.len()
            )));
        }
        for (i, ((spec, input), group)) in arch.layers.iter().zip(&shapes).zip(&params).enumerate()
        {
            let expected = spec.param_shapes(input);
            let got: Vec<&[usize]> = group.iter().map(|t| t.shape()).collect();
            if got != expected.iter().map(Vec::as_slice).collect::<Vec<_>>() {
                return Err(Error::Shape(format!(
                    "layer {i} ({}): parameter shapes {got:?}, expected {expected:?}",
                    spec.kind.name()
                )));
            }
        }
        Ok(Self {
            arch,
            shapes,
            params,
            seed,
            cache: None,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.arch.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.arch.input_shape
    }

    pub fn output_width(&self) -> usize {
        self.shapes.last().unwrap().iter().product()
    }

    /// Per-sample activation shapes (see [`Architecture::shapes`]).
    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn params(&self) -> &[Vec<Tensor>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Vec<Tensor>] {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().flatten().map(Tensor::len).sum()
    }

    pub fn set_lr_multiplier(&mut self, layer: usize, m: f64) {
        self.arch.layers[layer].lr_multiplier = m;
    }

    pub fn zero_grads(&mut self) {
        for t in self.params.iter_mut().flatten() {
            t.clear_grad();
        }
    }

    /// Forward pass with activations cached for [`Network::backward`].
    pub fn forward(&mut self, batch: &Tensor) -> Result<Tensor> {
        let mut cache = Cache::default();
        let out = self.run(batch, self.arch.layers.len(), Some(&mut cache))?;
        self.cache = Some(cache);
        Ok(out)
    }

    /// Forward pass without caching.
    pub fn infer(&self, batch: &Tensor) -> Result<Tensor> {
        self.run(batch, self.arch.layers.len(), None)
    }

    /// Output of the first `upto` layers.
    pub fn infer_prefix(&self, batch: &Tensor, upto: usize) -> Result<Tensor> {
        if upto > self.arch.layers.len() {
            return Err(Error::InvalidArgument(format!(
                "prefix of {upto} layers requested from a {}-layer network",
                self.arch.layers.len()
            )));
        }
        self.run(batch, upto, None)
    }

    fn check_input(&self, batch: &Tensor) -> Result<usize> {
        let shape = batch.shape();
        if shape.len() != self.arch.input_shape.len() + 1 || shape[1..] != self.arch.input_shape[..]
        {
            let first = self
                .arch
                .layers
                .first()
                .map(|s| s.kind.name())
                .unwrap_or("output");
            return Err(Error::Shape(format!(
                "layer 0 ({first}) expects batches of N×{:?}, got {shape:?}",
                self.arch.input_shape
            )));
        }
        Ok(shape[0])
    }

    fn run(&self, batch: &Tensor, upto: usize, mut cache: Option<&mut Cache>) -> Result<Tensor> {
        let n = self.check_input(batch)?;
        let mut x = batch.clone();
        x.clear_grad();
        for i in 0..upto {
            let spec = &self.arch.layers[i];
            let in_shape = &self.shapes[i];
            let out_shape = &self.shapes[i + 1];
            let mut full = vec![n];
            full.extend_from_slice(out_shape);
            let mut argmax = Vec::new();
            let data = match spec.kind {
                LayerKind::Conv2d {
                    stride, padding, ..
                } => {
                    let g = conv_geom(n, in_shape, out_shape, &self.params[i][0], stride, padding);
                    layer::conv_forward(
                        &g,
                        x.data(),
                        self.params[i][0].data(),
                        self.params[i][1].data(),
                    )
                }
                LayerKind::MaxPool2d { kernel, stride } => {
                    let (out, arg) = layer::maxpool_forward(
                        [n, in_shape[0], in_shape[1], in_shape[2]],
                        kernel,
                        stride,
                        out_shape[1],
                        out_shape[2],
                        x.data(),
                    );
                    argmax = arg;
                    out
                }
                LayerKind::Relu => layer::relu_forward(x.data()),
                LayerKind::Linear { outputs } => layer::linear_forward(
                    n,
                    in_shape[0],
                    outputs,
                    x.data(),
                    self.params[i][0].data(),
                    self.params[i][1].data(),
                ),
                LayerKind::Flatten => x.data().to_vec(),
            };
            let next = Tensor::new(full, data)?;
            if let Some(c) = cache.as_deref_mut() {
                c.inputs.push(x);
                c.argmax.push(argmax);
            }
            x = next;
        }
        Ok(x)
    }

    /// Back-propagate `loss_grad` (gradient of the loss w.r.t. the output of
    /// the last [`Network::forward`]). Populates every parameter's gradient
    /// buffer and returns the gradient w.r.t. the input batch.
    pub fn backward(&mut self, loss_grad: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or_else(|| {
            Error::InvalidArgument("backward called without a preceding forward".into())
        })?;
        let n = cache
            .inputs
            .first()
            .map(Tensor::rows)
            .unwrap_or(loss_grad.rows());
        let mut expected = vec![n];
        expected.extend_from_slice(self.shapes.last().unwrap());
        if loss_grad.shape() != expected.as_slice() {
            return Err(Error::Shape(format!(
                "loss gradient has shape {:?}, network output is {expected:?}",
                loss_grad.shape()
            )));
        }
        let mut g = loss_grad.data().to_vec();
        for i in (0..self.arch.layers.len()).rev() {
            let spec = self.arch.layers[i];
            let input = &cache.inputs[i];
            let in_shape = &self.shapes[i];
            let out_shape = &self.shapes[i + 1];
            g = match spec.kind {
                LayerKind::Conv2d {
                    stride, padding, ..
                } => {
                    let geom =
                        conv_geom(n, in_shape, out_shape, &self.params[i][0], stride, padding);
                    let (din, dw, db) =
                        layer::conv_backward(&geom, input.data(), self.params[i][0].data(), &g);
                    self.params[i][0].set_grad(dw)?;
                    self.params[i][1].set_grad(db)?;
                    din
                }
                LayerKind::MaxPool2d { .. } => {
                    layer::maxpool_backward(input.len(), &cache.argmax[i], &g)
                }
                LayerKind::Relu => layer::relu_backward(input.data(), &g),
                LayerKind::Linear { outputs } => {
                    let (din, dw, db) = layer::linear_backward(
                        in_shape[0],
                        outputs,
                        input.data(),
                        self.params[i][0].data(),
                        &g,
                    );
                    self.params[i][0].set_grad(dw)?;
                    self.params[i][1].set_grad(db)?;
                    din
                }
                LayerKind::Flatten => g,
            };
        }
        let in_shape = cache
            .inputs
            .first()
            .map(|t| t.shape().to_vec())
            .unwrap_or_else(|| loss_grad.shape().to_vec());
        Tensor::new(in_shape, g)
    }

    /// Split into the first `at` layers and the remainder, sharing parameters.
    pub fn split_at(&self, at: usize) -> Result<(Network, Network)> {
        if at > self.arch.layers.len() {
            return Err(Error::InvalidArgument(format!(
                "split point {at} beyond {} layers",
                self.arch.layers.len()
            )));
        }
        let head = Architecture::new(
            self.arch.input_shape.clone(),
            self.arch.layers[..at].to_vec(),
        );
        let tail = Architecture::new(self.shapes[at].clone(), self.arch.layers[at..].to_vec());
        Ok((
            Network::from_parts(head, self.seed, self.params[..at].to_vec())?,
            Network::from_parts(tail, self.seed, self.params[at..].to_vec())?,
        ))
    }
}

fn conv_geom(
    n: usize,
    input: &[usize],
    output: &[usize],
    weight: &Tensor,
    stride: usize,
    pad: usize,
) -> ConvGeom {
    let ws = weight.shape();
    ConvGeom {
        n,
        c: input[0],
        h: input[1],
        w: input[2],
        o: output[0],
        kh: ws[2],
        kw: ws[3],
        stride,
        pad,
        oh: output[1],
        ow: output[2],
    }
}
