//! Evaluation metrics: top-k accuracy, instance-wise mean average precision,
//! row-normalized confusion matrices, and label-based / macro-averaged
//! precision, recall and F-measure.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::dataset::LabelVector;
use crate::error::{invalid, Error, Result};
use crate::heads::predict_topk;

fn check_rows(confs: &[Vec<f64>], n_labels: usize) -> Result<usize> {
    if confs.is_empty() {
        return Err(invalid("no instances to evaluate"));
    }
    if confs.len() != n_labels {
        return Err(Error::Shape(format!(
            "{} confidence vectors but {n_labels} ground truths",
            confs.len()
        )));
    }
    let q = confs[0].len();
    if let Some(i) = confs.iter().position(|c| c.len() != q) {
        return Err(Error::Shape(format!(
            "instance {i} has {} labels, expected {q}",
            confs[i].len()
        )));
    }
    Ok(q)
}

/// Fraction of instances whose true class is among the `k` most confident.
pub fn topk_accuracy(confs: &[Vec<f64>], labels: &[usize], k: usize) -> Result<f64> {
    let q = check_rows(confs, labels.len())?;
    if k == 0 || k > q {
        return Err(invalid(format!("k = {k} outside [1, {q}]")));
    }
    if let Some(i) = labels.iter().position(|&y| y >= q) {
        return Err(invalid(format!(
            "label {} of instance {i} outside [0, {q})",
            labels[i]
        )));
    }
    let mut hits = 0;
    for (c, &y) in confs.iter().zip(labels) {
        if predict_topk(c, k)?.contains(&y) {
            hits += 1;
        }
    }
    Ok(hits as f64 / confs.len() as f64)
}

/// Average precision of one ranked label list.
pub fn average_precision(conf: &[f64], truth: &[bool]) -> Option<f64> {
    let positives = truth.iter().filter(|&&b| b).count();
    if positives == 0 {
        return None;
    }
    let ranking = predict_topk(conf, conf.len()).ok()?;
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (rank, &label) in ranking.iter().enumerate() {
        if truth[label] {
            hits += 1;
            ap += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(ap / positives as f64)
}

/// Mean over instances of [`average_precision`].
pub fn mean_average_precision(confs: &[Vec<f64>], truths: &[LabelVector]) -> Result<f64> {
    let q = check_rows(confs, truths.len())?;
    let mut total = 0.0;
    for (i, (c, t)) in confs.iter().zip(truths).enumerate() {
        if t.len() != q {
            return Err(Error::Shape(format!(
                "ground truth {i} has {} labels, expected {q}",
                t.len()
            )));
        }
        total += average_precision(c, t.bits())
            .ok_or_else(|| invalid(format!("instance {i} has no positive label")))?;
    }
    Ok(total / confs.len() as f64)
}

/// MAP for single-label ground truth, treated as one-hot vectors.
pub fn mean_average_precision_classes(confs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    let q = check_rows(confs, labels.len())?;
    let truths = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            if y < q {
                Ok(LabelVector::one_hot(q, y))
            } else {
                Err(invalid(format!(
                    "label {y} of instance {i} outside [0, {q})"
                )))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    mean_average_precision(confs, &truths)
}

/// `M(i, j)`: share of class-`i` instances predicted as `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub values: Vec<Vec<f64>>,
    /// Instances per true class.
    pub support: Vec<usize>,
}

impl ConfusionMatrix {
    /// Classes without test instances; their rows are all zero.
    pub fn empty_rows(&self) -> Vec<usize> {
        (0..self.support.len())
            .filter(|&i| self.support[i] == 0)
            .collect()
    }

    /// Comma-separated numeric grid, one row per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.values {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

pub fn confusion_matrix(preds: &[usize], labels: &[usize], q: usize) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions but {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if let Some(&v) = preds.iter().chain(labels).find(|&&v| v >= q) {
        return Err(invalid(format!("class index {v} outside [0, {q})")));
    }
    let mut counts = vec![vec![0usize; q]; q];
    let mut support = vec![0usize; q];
    for (&p, &y) in preds.iter().zip(labels) {
        counts[y][p] += 1;
        support[y] += 1;
    }
    let values = counts
        .iter()
        .zip(&support)
        .map(|(row, &n)| {
            row.iter()
                .map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
                .collect()
        })
        .collect();
    Ok(ConfusionMatrix { values, support })
}

/// Label-based precision, recall and F-measure with macro averages.
///
/// A label that is neither true nor predicted for any instance scores 0 and
/// is left out of the macro averages. Otherwise an empty denominator makes the
/// score 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelPrf {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f_measure: Vec<f64>,
    /// Whether each label takes part in the macro averages.
    pub counted: Vec<bool>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f_measure: f64,
}

pub fn label_prf<P: AsRef<[bool]>, T: AsRef<[bool]>>(
    preds: &[P],
    truths: &[T],
) -> Result<LabelPrf> {
    if preds.len() != truths.len() {
        return Err(Error::Shape(format!(
            "{} predictions but {} ground truths",
            preds.len(),
            truths.len()
        )));
    }
    let q = truths.first().map(|t| t.as_ref().len()).unwrap_or(0);
    for (i, (p, t)) in preds.iter().zip(truths).enumerate() {
        if p.as_ref().len() != q || t.as_ref().len() != q {
            return Err(Error::Shape(format!(
                "instance {i} does not have {q} labels"
            )));
        }
    }
    let mut precision = vec![0.0; q];
    let mut recall = vec![0.0; q];
    let mut f_measure = vec![0.0; q];
    let mut counted = vec![false; q];
    for j in 0..q {
        let (mut y, mut z, mut both) = (0usize, 0usize, 0usize);
        for (p, t) in preds.iter().zip(truths) {
            let (pj, tj) = (p.as_ref()[j], t.as_ref()[j]);
            y += usize::from(tj);
            z += usize::from(pj);
            both += usize::from(pj && tj);
        }
        counted[j] = y + z > 0;
        if z > 0 {
            precision[j] = both as f64 / z as f64;
        }
        if y > 0 {
            recall[j] = both as f64 / y as f64;
        }
        if y + z > 0 {
            f_measure[j] = 2.0 * both as f64 / (y + z) as f64;
        }
    }
    let n = counted.iter().filter(|&&c| c).count();
    let mean = |v: &[f64]| {
        if n == 0 {
            0.0
        } else {
            v.iter()
                .zip(&counted)
                .filter(|(_, &c)| c)
                .map(|(x, _)| x)
                .sum::<f64>()
                / n as f64
        }
    };
    Ok(LabelPrf {
        macro_precision: mean(&precision),
        macro_recall: mean(&recall),
        macro_f_measure: mean(&f_measure),
        precision,
        recall,
        f_measure,
        counted,
    })
}

/// Everything computed for one evaluation run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub labels: Vec<String>,
    pub instances: usize,
    pub top_k: BTreeMap<usize, f64>,
    pub map: f64,
    pub confusion: Option<ConfusionMatrix>,
    pub prf: Option<LabelPrf>,
}

impl MetricsReport {
    /// Key/value lines followed by optional matrix and per-label blocks.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "instances = {}", self.instances);
        let _ = writeln!(out, "labels = {}", self.labels.len());
        for (k, v) in &self.top_k {
            let _ = writeln!(out, "top{k} = {v:.6}");
        }
        let _ = writeln!(out, "map = {:.6}", self.map);
        if let Some(prf) = &self.prf {
            let _ = writeln!(out, "macro_precision = {:.6}", prf.macro_precision);
            let _ = writeln!(out, "macro_recall = {:.6}", prf.macro_recall);
            let _ = writeln!(out, "macro_f = {:.6}", prf.macro_f_measure);
        }
        if let Some(cm) = &self.confusion {
            let _ = writeln!(out, "\n[confusion {}x{}]", cm.values.len(), cm.values.len());
            for (i, row) in cm.values.iter().enumerate() {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
                let name = self.labels.get(i).map(String::as_str).unwrap_or("?");
                let _ = writeln!(out, "{name}\t{}", cells.join("\t"));
            }
            let empty = cm.empty_rows();
            if !empty.is_empty() {
                let names: Vec<&str> = empty
                    .iter()
                    .map(|&i| self.labels.get(i).map(String::as_str).unwrap_or("?"))
                    .collect();
                let _ = writeln!(out, "empty_rows = {}", names.join(";"));
            }
        }
        if let Some(prf) = &self.prf {
            let _ = writeln!(out, "\n[per_label]");
            let _ = writeln!(out, "label\tprecision\trecall\tf\tcounted");
            for j in 0..prf.precision.len() {
                let name = self.labels.get(j).map(String::as_str).unwrap_or("?");
                let _ = writeln!(
                    out,
                    "{name}\t{:.6}\t{:.6}\t{:.6}\t{}",
                    prf.precision[j], prf.recall[j], prf.f_measure[j], prf.counted[j]
                );
            }
        }
        out
    }
}
