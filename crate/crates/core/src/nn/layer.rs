//! Layer specifications and their forward/backward kernels.
//!
//! Batched activations are laid out `N×C×H×W` (spatial layers) or `N×F`
//! (after `flatten`). All kernels operate on raw row-major slices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d {
        filters: usize,
        kernel: [usize; 2],
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    #[serde(rename = "maxpool2d")]
    MaxPool2d {
        kernel: [usize; 2],
        stride: usize,
    },
    Relu,
    Linear {
        outputs: usize,
    },
    Flatten,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Conv2d { .. } => "conv2d",
            LayerKind::MaxPool2d { .. } => "maxpool2d",
            LayerKind::Relu => "relu",
            LayerKind::Linear { .. } => "linear",
            LayerKind::Flatten => "flatten",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerKind::Conv2d { .. } | LayerKind::Linear { .. })
    }
}

fn default_multiplier() -> f64 {
    1.0
}

/// One entry of a network's layer list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(flatten)]
    pub kind: LayerKind,
    /// Scales the base learning rate for this layer's parameters.
    #[serde(default = "default_multiplier")]
    pub lr_multiplier: f64,
}

impl LayerSpec {
    pub fn new(kind: LayerKind) -> Self {
        Self {
            kind,
            lr_multiplier: 1.0,
        }
    }

    pub fn conv2d(filters: usize, kernel: usize) -> Self {
        Self::new(LayerKind::Conv2d {
            filters,
            kernel: [kernel, kernel],
            stride: 1,
            padding: 0,
        })
    }

    pub fn maxpool2d(kernel: usize) -> Self {
        Self::new(LayerKind::MaxPool2d {
            kernel: [kernel, kernel],
            stride: kernel,
        })
    }

    pub fn relu() -> Self {
        Self::new(LayerKind::Relu)
    }

    pub fn linear(outputs: usize) -> Self {
        Self::new(LayerKind::Linear { outputs })
    }

    pub fn flatten() -> Self {
        Self::new(LayerKind::Flatten)
    }

    pub fn with_lr_multiplier(mut self, m: f64) -> Self {
        self.lr_multiplier = m;
        self
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        let bad =
            |msg: String| Error::Shape(format!("layer {index} ({}): {msg}", self.kind.name()));
        if !(self.lr_multiplier.is_finite() && self.lr_multiplier >= 0.0) {
            return Err(bad(format!(
                "learning-rate multiplier must be finite and nonnegative, got {}",
                self.lr_multiplier
            )));
        }
        match self.kind {
            LayerKind::Conv2d {
                filters,
                kernel,
                stride,
                padding,
            } => {
                let [_, h, w] = spatial(input)
                    .ok_or_else(|| bad(format!("expects a C×H×W input, got {input:?}")))?;
                if filters == 0 || kernel[0] == 0 || kernel[1] == 0 || stride == 0 {
                    return Err(bad(
                        "filters, kernel extents and stride must be positive".into()
                    ));
                }
                let oh = window_count(h + 2 * padding, kernel[0], stride)
                    .ok_or_else(|| bad(format!("kernel {kernel:?} larger than input {input:?}")))?;
                let ow = window_count(w + 2 * padding, kernel[1], stride)
                    .ok_or_else(|| bad(format!("kernel {kernel:?} larger than input {input:?}")))?;
                Ok(vec![filters, oh, ow])
            }
            LayerKind::MaxPool2d { kernel, stride } => {
                let [c, h, w] = spatial(input)
                    .ok_or_else(|| bad(format!("expects a C×H×W input, got {input:?}")))?;
                if kernel[0] == 0 || kernel[1] == 0 || stride == 0 {
                    return Err(bad("kernel extents and stride must be positive".into()));
                }
                let oh = window_count(h, kernel[0], stride)
                    .ok_or_else(|| bad(format!("window {kernel:?} larger than input {input:?}")))?;
                let ow = window_count(w, kernel[1], stride)
                    .ok_or_else(|| bad(format!("window {kernel:?} larger than input {input:?}")))?;
                Ok(vec![c, oh, ow])
            }
            LayerKind::Relu => Ok(input.to_vec()),
            LayerKind::Linear { outputs } => {
                if input.len() != 1 {
                    return Err(bad(format!(
                        "expects a flat input, got {input:?} (insert a flatten layer)"
                    )));
                }
                if outputs == 0 {
                    return Err(bad("output width must be positive".into()));
                }
                Ok(vec![outputs])
            }
            LayerKind::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    /// Parameter tensor shapes (weight, bias) for a per-sample input shape.
    pub fn param_shapes(&self, input: &[usize]) -> Vec<Vec<usize>> {
        match self.kind {
            LayerKind::Conv2d {
                filters, kernel, ..
            } => vec![vec![filters, input[0], kernel[0], kernel[1]], vec![filters]],
            LayerKind::Linear { outputs } => vec![vec![outputs, input[0]], vec![outputs]],
            _ => Vec::new(),
        }
    }
}

fn spatial(shape: &[usize]) -> Option<[usize; 3]> {
    match shape {
        &[c, h, w] => Some([c, h, w]),
        _ => None,
    }
}

fn window_count(len: usize, k: usize, stride: usize) -> Option<usize> {
    (len >= k).then(|| (len - k) / stride + 1)
}

/// Output positions `o` for which `o*stride + offset - pad` lands inside `[0, len)`.
fn valid_range(offset: usize, pad: usize, stride: usize, len: usize, out: usize) -> (usize, usize) {
    let lo = if offset >= pad {
        0
    } else {
        (pad - offset).div_ceil(stride)
    };
    let hi = if len + pad > offset {
        ((len - 1 + pad - offset) / stride + 1).min(out)
    } else {
        0
    };
    (lo.min(hi), hi)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

pub(crate) fn conv_forward(g: &ConvGeom, input: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; g.n * g.o * g.oh * g.ow];
    let plane = g.oh * g.ow;
    for n in 0..g.n {
        for o in 0..g.o {
            let dst = &mut out[(n * g.o + o) * plane..(n * g.o + o + 1) * plane];
            dst.fill(bias[o]);
            for c in 0..g.c {
                let src = &input[(n * g.c + c) * g.h * g.w..(n * g.c + c + 1) * g.h * g.w];
                for ky in 0..g.kh {
                    let (y0, y1) = valid_range(ky, g.pad, g.stride, g.h, g.oh);
                    for kx in 0..g.kw {
                        let wv = weight[((o * g.c + c) * g.kh + ky) * g.kw + kx];
                        let (x0, x1) = valid_range(kx, g.pad, g.stride, g.w, g.ow);
                        for oy in y0..y1 {
                            let iy = oy * g.stride + ky - g.pad;
                            let row = &src[iy * g.w..(iy + 1) * g.w];
                            let drow = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                            for ox in x0..x1 {
                                drow[ox] += wv * row[ox * g.stride + kx - g.pad];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Returns `(d_input, d_weight, d_bias)`.
pub(crate) fn conv_backward(
    g: &ConvGeom,
    input: &[f64],
    weight: &[f64],
    dout: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut din = vec![0.0; input.len()];
    let mut dw = vec![0.0; weight.len()];
    let mut db = vec![0.0; g.o];
    let plane = g.oh * g.ow;
    for n in 0..g.n {
        for o in 0..g.o {
            let go = &dout[(n * g.o + o) * plane..(n * g.o + o + 1) * plane];
            db[o] += go.iter().sum::<f64>();
            for c in 0..g.c {
                let base = (n * g.c + c) * g.h * g.w;
                for ky in 0..g.kh {
                    let (y0, y1) = valid_range(ky, g.pad, g.stride, g.h, g.oh);
                    for kx in 0..g.kw {
                        let widx = ((o * g.c + c) * g.kh + ky) * g.kw + kx;
                        let wv = weight[widx];
                        let (x0, x1) = valid_range(kx, g.pad, g.stride, g.w, g.ow);
                        let mut acc = 0.0;
                        for oy in y0..y1 {
                            let iy = oy * g.stride + ky - g.pad;
                            let row = base + iy * g.w;
                            for ox in x0..x1 {
                                let ix = row + ox * g.stride + kx - g.pad;
                                let gv = go[oy * g.ow + ox];
                                acc += gv * input[ix];
                                din[ix] += gv * wv;
                            }
                        }
                        dw[widx] += acc;
                    }
                }
            }
        }
    }
    (din, dw, db)
}

/// Max-pooling forward; also returns the flat input index selected by each
/// output. Ties go to the first maximal element in row-major window order.
pub(crate) fn maxpool_forward(
    shape: [usize; 4],
    kernel: [usize; 2],
    stride: usize,
    oh: usize,
    ow: usize,
    input: &[f64],
) -> (Vec<f64>, Vec<usize>) {
    let [n, c, h, w] = shape;
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * stride * w + ox * stride;
                for ky in 0..kernel[0] {
                    for kx in 0..kernel[1] {
                        let idx = base + (oy * stride + ky) * w + ox * stride + kx;
                        if input[idx] > input[best] {
                            best = idx;
                        }
                    }
                }
                out.push(input[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool_backward(input_len: usize, argmax: &[usize], dout: &[f64]) -> Vec<f64> {
    let mut din = vec![0.0; input_len];
    for (&idx, &g) in argmax.iter().zip(dout) {
        din[idx] += g;
    }
    din
}

pub(crate) fn linear_forward(
    n: usize,
    fin: usize,
    fout: usize,
    input: &[f64],
    weight: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * fout);
    for row in input.chunks_exact(fin).take(n) {
        for (j, wrow) in weight.chunks_exact(fin).enumerate() {
            let dot: f64 = row.iter().zip(wrow).map(|(a, b)| a * b).sum();
            out.push(dot + bias[j]);
        }
    }
    out
}

pub(crate) fn linear_backward(
    fin: usize,
    fout: usize,
    input: &[f64],
    weight: &[f64],
    dout: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut din = vec![0.0; input.len()];
    let mut dw = vec![0.0; weight.len()];
    let mut db = vec![0.0; fout];
    for (x, (g, dx)) in input
        .chunks_exact(fin)
        .zip(dout.chunks_exact(fout).zip(din.chunks_exact_mut(fin)))
    {
        for j in 0..fout {
            let gj = g[j];
            if gj == 0.0 {
                continue;
            }
            db[j] += gj;
            let wrow = &weight[j * fin..(j + 1) * fin];
            let dwrow = &mut dw[j * fin..(j + 1) * fin];
            for i in 0..fin {
                dwrow[i] += gj * x[i];
                dx[i] += gj * wrow[i];
            }
        }
    }
    (din, dw, db)
}

pub(crate) fn relu_forward(input: &[f64]) -> Vec<f64> {
    input.iter().map(|&v| v.max(0.0)).collect()
}

pub(crate) fn relu_backward(input: &[f64], dout: &[f64]) -> Vec<f64> {
    input
        .iter()
        .zip(dout)
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect()
}
