//! Classification heads: multi-class softmax and multi-label sigmoid
//! cross-entropy, plus top-k prediction and linear threshold calibration.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::LabelVector;
use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

/// Which output layer and loss a network is trained with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Head {
    MultiClass,
    MultiLabel,
}

impl std::fmt::Display for Head {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Head::MultiClass => "multi-class",
            Head::MultiLabel => "multi-label",
        })
    }
}

impl std::str::FromStr for Head {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multi-class" | "multiclass" => Ok(Head::MultiClass),
            "multi-label" | "multilabel" => Ok(Head::MultiLabel),
            other => Err(invalid(format!("unknown head `{other}`"))),
        }
    }
}

/// Per-label confidences produced by either head.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceVector(Vec<f64>);

impl ConfidenceVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Binary predictions of the multi-label head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionVector(Vec<bool>);

impl PredictionVector {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn indices(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }
}

impl AsRef<[bool]> for PredictionVector {
    fn as_ref(&self) -> &[bool] {
        &self.0
    }
}

/// Loss value together with its gradient w.r.t. the logits.
#[derive(Debug, Clone)]
pub struct LossValue {
    pub value: f64,
    pub grad: Tensor,
}

fn check_finite(logits: &[f64]) -> Result<()> {
    if logits.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric("non-finite logit".into()))
    }
}

/// `exp(z_j) / Σ exp(z_k)`, shifted by the maximum logit.
pub fn softmax_activation(logits: &[f64]) -> Result<ConfidenceVector> {
    check_finite(logits)?;
    Ok(ConfidenceVector(softmax(logits)))
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

fn batch_dims(logits: &Tensor) -> Result<(usize, usize)> {
    match logits.shape() {
        &[n, q] => Ok((n, q)),
        other => Err(Error::Shape(format!("expected N×Q logits, got {other:?}"))),
    }
}

/// Mean negative log-likelihood of the true class under the softmax.
pub fn softmax_loss(logits: &Tensor, labels: &[usize]) -> Result<LossValue> {
    let (n, q) = batch_dims(logits)?;
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {n}",
            labels.len()
        )));
    }
    check_finite(logits.data())?;
    if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= q) {
        return Err(invalid(format!(
            "label {y} of instance {i} outside [0, {q})"
        )));
    }
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(n * q);
    for (i, &y) in labels.iter().enumerate() {
        let z = logits.row(i);
        value += log_sum_exp(z) - z[y];
        for (j, p) in softmax(z).into_iter().enumerate() {
            let t = if j == y { 1.0 } else { 0.0 };
            grad.push((p - t) / n as f64);
        }
    }
    Ok(LossValue {
        value: value / n as f64,
        grad: Tensor::new(vec![n, q], grad)?,
    })
}

/// Indices of the `k` largest confidences, descending; ties go to the lower index.
pub fn predict_topk(conf: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > conf.len() {
        return Err(invalid(format!("k = {k} outside [1, {}]", conf.len())));
    }
    let mut idx: Vec<usize> = (0..conf.len()).collect();
    idx.sort_by(|&a, &b| conf[b].total_cmp(&conf[a]).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_activation(logits: &[f64]) -> Result<ConfidenceVector> {
    check_finite(logits)?;
    Ok(ConfidenceVector(
        logits.iter().map(|&z| sigmoid(z)).collect(),
    ))
}

/// Summed-over-labels, mean-over-batch binary cross-entropy, evaluated in
/// logit space as `max(z,0) − z·y + ln(1 + e^{−|z|})`.
pub fn sigmoid_ce_loss(logits: &Tensor, targets: &Tensor) -> Result<LossValue> {
    let (n, q) = batch_dims(logits)?;
    if targets.shape() != logits.shape() {
        return Err(Error::Shape(format!(
            "targets {:?} do not match logits {:?}",
            targets.shape(),
            logits.shape()
        )));
    }
    check_finite(logits.data())?;
    if let Some(pos) = targets.data().iter().position(|&y| y != 0.0 && y != 1.0) {
        return Err(invalid(format!(
            "non-binary label {} at instance {}, label {}",
            targets.data()[pos],
            pos / q,
            pos % q
        )));
    }
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(n * q);
    for (&z, &y) in logits.data().iter().zip(targets.data()) {
        value += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        grad.push((sigmoid(z) - y) / n as f64);
    }
    Ok(LossValue {
        value: value / n as f64,
        grad: Tensor::new(vec![n, q], grad)?,
    })
}

/// `t(X) = weights · C(X) + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl ThresholdModel {
    pub fn constant(q: usize, t: f64) -> Self {
        Self {
            weights: vec![0.0; q],
            bias: t,
        }
    }

    pub fn threshold(&self, conf: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(conf)
            .map(|(w, c)| w * c)
            .sum::<f64>()
            + self.bias
    }

    /// Q weights followed by the bias, each as little-endian `f64`, after a
    /// `u64` label count.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 * (self.weights.len() + 2));
        out.extend_from_slice(&(self.weights.len() as u64).to_le_bytes());
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.extend_from_slice(&self.bias.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let word = |i: usize| -> Result<[u8; 8]> {
            bytes
                .get(i * 8..i * 8 + 8)
                .map(|s| s.try_into().unwrap())
                .ok_or_else(|| Error::Format("threshold model truncated".into()))
        };
        let q = u64::from_le_bytes(word(0)?) as usize;
        if bytes.len() != 8 * (q + 2) {
            return Err(Error::Format(format!(
                "threshold model for {q} labels should be {} bytes, got {}",
                8 * (q + 2),
                bytes.len()
            )));
        }
        let weights = (1..=q)
            .map(|i| word(i).map(f64::from_le_bytes))
            .collect::<Result<_>>()?;
        let bias = f64::from_le_bytes(word(q + 1)?);
        Ok(Self { weights, bias })
    }
}

/// `ŷ_j = 1` iff `a_j > t(X)`.
pub fn apply_threshold(conf: &[f64], model: &ThresholdModel) -> PredictionVector {
    let t = model.threshold(conf);
    PredictionVector(conf.iter().map(|&a| a > t).collect())
}

/// Scalar threshold minimising label mismatches over `values`.
///
/// Candidate thresholds form half-open intervals between consecutive distinct
/// values, bounded below by `min(0, min value)` and above by
/// `max(1, max value)`. Among the intervals with the fewest mismatches the
/// midpoint is returned: of the widest run when zero mismatches are
/// achievable, otherwise of the run with the smallest lower bound.
pub fn best_scalar_threshold(values: &[f64], truth: &[bool]) -> (f64, usize) {
    debug_assert_eq!(values.len(), truth.len());
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let lower = values.iter().copied().fold(0.0_f64, f64::min);
    let upper = values.iter().copied().fold(1.0_f64, f64::max);

    // Threshold below every value: everything is predicted positive.
    let mut errors = truth.iter().filter(|&&t| !t).count();
    let mut bounds = vec![lower];
    let mut counts = vec![errors];
    let mut i = 0;
    while i < order.len() {
        let v = values[order[i]];
        while i < order.len() && values[order[i]] == v {
            // Crossing `v` turns this element negative.
            if truth[order[i]] {
                errors += 1;
            } else {
                errors -= 1;
            }
            i += 1;
        }
        bounds.push(v);
        counts.push(errors);
    }
    bounds.push(upper);

    // Maximal runs of consecutive intervals with equal mismatch counts.
    let mut runs: Vec<(f64, f64, usize)> = Vec::new();
    for (k, &c) in counts.iter().enumerate() {
        match runs.last_mut() {
            Some(run) if run.2 == c => run.1 = bounds[k + 1],
            _ => runs.push((bounds[k], bounds[k + 1], c)),
        }
    }
    let best = runs.iter().map(|r| r.2).min().unwrap_or(0);
    let chosen = if best == 0 {
        runs.iter()
            .filter(|r| r.2 == 0)
            .fold(None::<&(f64, f64, usize)>, |acc, r| match acc {
                Some(a) if a.1 - a.0 >= r.1 - r.0 => Some(a),
                _ => Some(r),
            })
    } else {
        runs.iter().find(|r| r.2 == best)
    };
    let (lo, hi, _) = *chosen.expect("at least one interval");
    ((lo + hi) / 2.0, best)
}

/// How a calibrated threshold model was obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum CalibrationMethod {
    /// Least-squares fit of per-instance optimal thresholds.
    Linear,
    /// The least-squares system was degenerate; best constant used instead.
    ConstantFallback(String),
    /// The fit was valid but the best constant labels the training set better.
    ConstantPreferred,
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub model: ThresholdModel,
    pub method: CalibrationMethod,
    /// Correct label decisions of the returned model on the training set.
    pub correct: usize,
    /// Correct label decisions of the best constant threshold.
    pub constant_correct: usize,
    /// Per-instance optimal thresholds used as regression targets.
    pub targets: Vec<f64>,
}

pub fn count_correct(confs: &[Vec<f64>], labels: &[LabelVector], model: &ThresholdModel) -> usize {
    confs
        .iter()
        .zip(labels)
        .map(|(c, y)| {
            let p = apply_threshold(c, model);
            p.bits()
                .iter()
                .zip(y.bits())
                .filter(|(a, b)| a == b)
                .count()
        })
        .sum()
}

/// Fraction of label decisions that match the truth.
pub fn label_accuracy(confs: &[Vec<f64>], labels: &[LabelVector], model: &ThresholdModel) -> f64 {
    let total: usize = labels.iter().map(LabelVector::len).sum();
    if total == 0 {
        return 0.0;
    }
    count_correct(confs, labels, model) as f64 / total as f64
}

/// Fit a linear threshold function on training confidences.
///
/// Each instance contributes its own optimal scalar threshold (see
/// [`best_scalar_threshold`]); weights and bias are the least-squares fit of
/// those targets against the confidence vectors. The result is compared to
/// the best constant threshold over the whole set and the better of the two
/// is returned (the linear model wins ties).
pub fn calibrate_threshold(confs: &[Vec<f64>], labels: &[LabelVector]) -> Result<Calibration> {
    if confs.is_empty() {
        return Err(invalid("calibration needs at least one instance"));
    }
    if confs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} confidence vectors but {} label vectors",
            confs.len(),
            labels.len()
        )));
    }
    let q = confs[0].len();
    if let Some(i) = (0..confs.len()).find(|&i| confs[i].len() != q || labels[i].len() != q) {
        return Err(Error::Shape(format!(
            "instance {i} does not have {q} labels"
        )));
    }
    for c in confs {
        check_finite(c)?;
    }

    let flat_conf: Vec<f64> = confs.iter().flatten().copied().collect();
    let flat_truth: Vec<bool> = labels
        .iter()
        .flat_map(|y| y.bits().iter().copied())
        .collect();
    let (best_const, _) = best_scalar_threshold(&flat_conf, &flat_truth);
    let constant = ThresholdModel::constant(q, best_const);
    let constant_correct = count_correct(confs, labels, &constant);

    let targets: Vec<f64> = confs
        .iter()
        .zip(labels)
        .map(|(c, y)| best_scalar_threshold(c, y.bits()).0)
        .collect();

    let fallback = |reason: String| Calibration {
        model: constant.clone(),
        method: CalibrationMethod::ConstantFallback(reason),
        correct: constant_correct,
        constant_correct,
        targets: targets.clone(),
    };

    let positives = flat_truth.iter().filter(|&&b| b).count();
    if positives == 0 || positives == flat_truth.len() {
        return Ok(fallback(
            "training labels contain no positives or no negatives".into(),
        ));
    }

    let m = confs.len();
    let design = DMatrix::from_fn(m, q + 1, |r, c| if c < q { confs[r][c] } else { 1.0 });
    let rhs = DVector::from_vec(targets.clone());
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if m < q + 1 || !(smax > 0.0) || smin <= smax * 1e-10 {
        return Ok(fallback(format!(
            "least-squares system is rank deficient ({m} instances, {} unknowns)",
            q + 1
        )));
    }
    let solution = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::Numeric(format!("least-squares solve failed: {e}")))?;
    if solution.iter().any(|v| !v.is_finite()) {
        return Ok(fallback("least-squares solution is not finite".into()));
    }
    let linear = ThresholdModel {
        weights: solution.iter().take(q).copied().collect(),
        bias: solution[q],
    };
    let linear_correct = count_correct(confs, labels, &linear);
    Ok(if linear_correct >= constant_correct {
        Calibration {
            model: linear,
            method: CalibrationMethod::Linear,
            correct: linear_correct,
            constant_correct,
            targets,
        }
    } else {
        Calibration {
            model: constant,
            method: CalibrationMethod::ConstantPreferred,
            correct: constant_correct,
            constant_correct,
            targets,
        }
    })
}
