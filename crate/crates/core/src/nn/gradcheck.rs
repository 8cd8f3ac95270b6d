//! Central-difference verification of analytic gradients.

use super::network::Network;
use crate::error::{invalid, Error, Result};
use crate::heads::{self, LossValue};
use crate::tensor::Tensor;

/// Denominator floor for relative errors, so that gradients that are
/// numerically zero on both sides compare in absolute terms.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// Scalar losses the checker can differentiate through.
#[derive(Debug, Clone)]
pub enum LossFn {
    /// Sum of all outputs.
    Sum,
    /// `½ Σ (out − target)²`.
    Squared {
        target: Tensor,
    },
    Softmax {
        labels: Vec<usize>,
    },
    SigmoidCe {
        targets: Tensor,
    },
}

impl LossFn {
    pub fn evaluate(&self, output: &Tensor) -> Result<LossValue> {
        match self {
            LossFn::Sum => Ok(LossValue {
                value: output.data().iter().sum(),
                grad: Tensor::new(output.shape().to_vec(), vec![1.0; output.len()])?,
            }),
            LossFn::Squared { target } => {
                if target.shape() != output.shape() {
                    return Err(Error::Shape(format!(
                        "target {:?} vs output {:?}",
                        target.shape(),
                        output.shape()
                    )));
                }
                let diff: Vec<f64> = output
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(o, t)| o - t)
                    .collect();
                Ok(LossValue {
                    value: 0.5 * diff.iter().map(|d| d * d).sum::<f64>(),
                    grad: Tensor::new(output.shape().to_vec(), diff)?,
                })
            }
            LossFn::Softmax { labels } => heads::softmax_loss(output, labels),
            LossFn::SigmoidCe { targets } => heads::sigmoid_ce_loss(output, targets),
        }
    }
}

/// Agreement between analytic and numeric gradients for one tensor.
#[derive(Debug, Clone)]
pub struct ParamCheck {
    /// Owning layer, or `None` for the network input.
    pub layer: Option<usize>,
    pub name: String,
    pub max_relative_error: f64,
    pub passed: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub checks: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn max_relative_error(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| c.max_relative_error)
            .fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Compare back-propagated gradients of every parameter (and of the input)
/// with central differences of step `step`.
pub fn grad_check(
    net: &Network,
    input: &Tensor,
    loss: &LossFn,
    step: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(invalid(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(invalid(format!("tolerance must be positive, got {tol}")));
    }

    let mut work = net.clone();
    let out = work.forward(input)?;
    let lv = loss.evaluate(&out)?;
    let input_grad = work.backward(&lv.grad)?;

    let mut checks = Vec::new();
    for layer in 0..work.params().len() {
        for k in 0..work.params()[layer].len() {
            let analytic = work.params()[layer][k]
                .grad()
                .expect("backward fills every parameter gradient")
                .to_vec();
            let name = format!(
                "layer {layer} ({}) {}",
                work.layers()[layer].kind.name(),
                if k == 0 { "weight" } else { "bias" }
            );
            let mut probe = work.clone();
            let check = compare(&analytic, step, tol, |i, delta| {
                let original = probe.params()[layer][k].data()[i];
                probe.params_mut()[layer][k].data_mut()[i] = original + delta;
                let v = probe
                    .infer(input)
                    .and_then(|o| loss.evaluate(&o))
                    .map(|l| l.value);
                probe.params_mut()[layer][k].data_mut()[i] = original;
                v
            });
            checks.push(ParamCheck {
                layer: Some(layer),
                name,
                ..check
            });
        }
    }

    let mut x = input.clone();
    let check = compare(input_grad.data(), step, tol, |i, delta| {
        let original = x.data()[i];
        x.data_mut()[i] = original + delta;
        let v = work
            .infer(&x)
            .and_then(|o| loss.evaluate(&o))
            .map(|l| l.value);
        x.data_mut()[i] = original;
        v
    });
    checks.push(ParamCheck {
        layer: None,
        name: "input".into(),
        ..check
    });

    Ok(GradCheckReport {
        tolerance: tol,
        checks,
    })
}

fn compare(
    analytic: &[f64],
    step: f64,
    tol: f64,
    mut eval: impl FnMut(usize, f64) -> Result<f64>,
) -> ParamCheck {
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let probed = eval(i, step).and_then(|plus| eval(i, -step).map(|minus| (plus, minus)));
        let (plus, minus) = match probed {
            Ok((p, m)) if p.is_finite() && m.is_finite() => (p, m),
            Ok(_) => return failed(format!("non-finite loss while probing element {i}")),
            Err(e) => return failed(format!("loss evaluation failed at element {i}: {e}")),
        };
        let numeric = (plus - minus) / (2.0 * step);
        worst = worst.max(relative_error(a, numeric));
    }
    ParamCheck {
        layer: None,
        name: String::new(),
        max_relative_error: worst,
        passed: worst <= tol,
        failure: None,
    }
}

fn failed(msg: String) -> ParamCheck {
    ParamCheck {
        layer: None,
        name: String::new(),
        max_relative_error: f64::INFINITY,
        passed: false,
        failure: Some(msg),
    }
}
