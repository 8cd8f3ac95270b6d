use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use dermclass_core::heads::{calibrate_threshold, label_accuracy, CalibrationMethod, Head};
use dermclass_core::trainer::predict_dataset;
use dermclass_core::{Targets, ThresholdModel};

use super::{
    checkpoint_head, dataset_for, load_checkpoint, load_dataset_manifest, require, select_records,
    Context,
};
use crate::config::{layered, Layered};
use crate::error::{CliError, CliResult};

pub const PREDICT_BATCH: usize = 64;

/// Fit the multi-label threshold function on training confidences.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct CalibrateArgs {
    /// Multi-label checkpoint.
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
    #[arg(long)]
    pub seed: Option<u64>,
}

layered!(CalibrateArgs {
    model,
    dataset,
    split,
    select,
    exclude,
    seed
});

pub fn run(ctx: &Context, mut args: CalibrateArgs, file: CalibrateArgs) -> CliResult<()> {
    args.fill_from(file);
    let seed = *args.seed.get_or_insert(0);
    let model = require(&args.model, "model")?.clone();
    let path = require(&args.dataset, "dataset")?.clone();

    let mut run = ctx.start("calibrate", seed, &args)?;
    let ckpt = load_checkpoint(&mut run, &model)?;
    if checkpoint_head(&ckpt, &model)? != Head::MultiLabel {
        return Err(CliError::bad_argument(
            "threshold calibration needs a multi-label checkpoint",
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
    let data = dataset_for(&ckpt, Head::MultiLabel, &records)?;
    let Targets::Tags(truth) = &data.targets else {
        unreachable!("multi-label dataset")
    };
    let confs = predict_dataset(&ckpt.network, &data, Head::MultiLabel, PREDICT_BATCH)?;
    let cal = calibrate_threshold(&confs, truth)?;
    let q = ckpt.labels.len();
    let fixed = label_accuracy(&confs, truth, &ThresholdModel::constant(q, 0.5));

    let mut report = String::new();
    let method = match &cal.method {
        CalibrationMethod::Linear => "linear".to_string(),
        CalibrationMethod::ConstantPreferred => "constant (better than linear fit)".to_string(),
        CalibrationMethod::ConstantFallback(why) => format!("constant ({why})"),
    };
    let _ = writeln!(report, "method = {method}");
    let _ = writeln!(report, "instances = {}", data.len());
    let _ = writeln!(report, "correct = {} / {}", cal.correct, data.len() * q);
    let _ = writeln!(
        report,
        "accuracy = {:.6}",
        cal.correct as f64 / (data.len() * q) as f64
    );
    let _ = writeln!(
        report,
        "best_constant_accuracy = {:.6}",
        cal.constant_correct as f64 / (data.len() * q) as f64
    );
    let _ = writeln!(report, "fixed_0.5_accuracy = {fixed:.6}");
    let _ = writeln!(report, "bias = {:.9}", cal.model.bias);
    for (name, w) in ckpt.labels.iter().zip(&cal.model.weights) {
        let _ = writeln!(report, "weight\t{name}\t{w:.9}");
    }
    run.write("threshold.bin", cal.model.to_bytes())?;
    run.write("calibration.txt", report)?;
    run.finish()?;
    Ok(())
}
