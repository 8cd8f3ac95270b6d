use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use dermclass_core::heads::{apply_threshold, predict_topk, Head};
use dermclass_core::metrics::{
    confusion_matrix, label_prf, mean_average_precision, mean_average_precision_classes,
    topk_accuracy,
};
use dermclass_core::trainer::predict_dataset;
use dermclass_core::{MetricsReport, Targets, ThresholdModel};

use super::calibrate::PREDICT_BATCH;
use super::{
    checkpoint_head, dataset_for, load_checkpoint, load_dataset_manifest, require, select_records,
    Context,
};
use crate::config::{layered, Layered};
use crate::error::{CliError, CliResult};

/// Top-k values reported when `--top-k` is not given (those above Q are skipped).
pub const DEFAULT_TOP_K: [usize; 2] = [1, 5];

/// Score a checkpoint on a dataset.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct EvalArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub select: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub exclude: Option<Vec<String>>,
    /// Threshold model from `calibrate`; multi-label only. A constant 0.5 is
    /// used when absent.
    #[arg(long)]
    pub threshold: Option<PathBuf>,
    /// Top-k accuracies to report; multi-class only.
    #[arg(long, value_delimiter = ',')]
    pub top_k: Option<Vec<usize>>,
    #[arg(long)]
    pub seed: Option<u64>,
}

layered!(EvalArgs {
    model,
    dataset,
    split,
    select,
    exclude,
    threshold,
    top_k,
    seed
});

pub fn run(ctx: &Context, mut args: EvalArgs, file: EvalArgs) -> CliResult<()> {
    args.fill_from(file);
    let seed = *args.seed.get_or_insert(0);
    let model = require(&args.model, "model")?.clone();
    let path = require(&args.dataset, "dataset")?.clone();

    let mut run = ctx.start("eval", seed, &args)?;
    let ckpt = load_checkpoint(&mut run, &model)?;
    let head = checkpoint_head(&ckpt, &model)?;
    let q = ckpt.labels.len();
    let top_k = match &args.top_k {
        Some(ks) => {
            if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > q) {
                return Err(CliError::bad_argument(format!(
                    "top-k value {k} outside [1, {q}]"
                )));
            }
            ks.clone()
        }
        None => DEFAULT_TOP_K.iter().copied().filter(|&k| k <= q).collect(),
    };
    if head == Head::MultiLabel && args.top_k.is_some() {
        return Err(CliError::bad_argument(
            "--top-k applies to multi-class checkpoints",
        ));
    }
    if head == Head::MultiClass && args.threshold.is_some() {
        return Err(CliError::bad_argument(
            "--threshold applies to multi-label checkpoints",
        ));
    }
    let manifest = load_dataset_manifest(&mut run, &path)?;
    let records = select_records(
        &mut run,
        &manifest.records,
        args.split.as_deref(),
        args.select.as_deref().unwrap_or_default(),
        args.exclude.as_deref().unwrap_or_default(),
    )?;
    let data = dataset_for(&ckpt, head, &records)?;
    let confs = predict_dataset(&ckpt.network, &data, head, PREDICT_BATCH)?;

    let mut report = MetricsReport {
        labels: ckpt.labels.clone(),
        instances: data.len(),
        ..MetricsReport::default()
    };
    let mut predictions = String::from("id");
    for l in &ckpt.labels {
        let _ = write!(predictions, "\t{l}");
    }
    predictions.push_str("\tpredicted\n");
    let mut predicted: Vec<String> = Vec::with_capacity(data.len());
    match &data.targets {
        Targets::Classes(labels) => {
            let mut top_k_map = BTreeMap::new();
            for &k in &top_k {
                top_k_map.insert(k, topk_accuracy(&confs, labels, k)?);
            }
            report.top_k = top_k_map;
            report.map = mean_average_precision_classes(&confs, labels)?;
            let argmax: Vec<usize> = confs
                .iter()
                .map(|c| predict_topk(c, 1).map(|v| v[0]))
                .collect::<Result<_, _>>()?;
            let cm = confusion_matrix(&argmax, labels, q)?;
            run.write("confusion.csv", cm.to_csv())?;
            report.confusion = Some(cm);
            predicted.extend(argmax.iter().map(|&i| ckpt.labels[i].clone()));
        }
        Targets::Tags(truth) => {
            let model = match &args.threshold {
                Some(p) => ThresholdModel::from_bytes(&run.read_input(p)?)?,
                None => ThresholdModel::constant(q, 0.5),
            };
            if model.weights.len() != q {
                return Err(CliError::data(format!(
                    "threshold model has {} weights, checkpoint has {q} labels",
                    model.weights.len()
                )));
            }
            let preds: Vec<_> = confs.iter().map(|c| apply_threshold(c, &model)).collect();
            report.map = mean_average_precision(&confs, truth)?;
            report.prf = Some(label_prf(&preds, truth)?);
            for p in &preds {
                let names: Vec<&str> = p
                    .indices()
                    .iter()
                    .map(|&i| ckpt.labels[i].as_str())
                    .collect();
                predicted.push(if names.is_empty() {
                    "-".into()
                } else {
                    names.join(";")
                });
            }
        }
    }
    for ((id, c), p) in data.ids.iter().zip(&confs).zip(&predicted) {
        let _ = write!(predictions, "{id}");
        for v in c {
            let _ = write!(predictions, "\t{v:.6}");
        }
        let _ = writeln!(predictions, "\t{p}");
    }
    run.write("metrics.txt", report.to_text())?;
    run.write("predictions.tsv", predictions)?;
    run.finish()?;
    Ok(())
}
