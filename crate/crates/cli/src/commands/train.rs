use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use dermclass_core::heads::Head;
use dermclass_core::trainer::{
    fine_tune, train, DEFAULT_HEAD_LR_MULTIPLIER, FINE_TUNE_LEARNING_RATE, SCRATCH_LEARNING_RATE,
};
use dermclass_core::{Architecture, Checkpoint, Dataset, Network, TrainConfig};

use super::{
    infer_head, load_checkpoint, load_dataset_manifest, require, select_records, vocabulary,
    Context,
};
use crate::config::{layered, Layered};
use crate::error::{CliError, CliResult};

pub const DEFAULT_EPOCHS: usize = 30;

/// Train a network from scratch or fine-tune a checkpoint.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// `id<TAB>group` file from `split`.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Groups to train on (default: all).
    #[arg(long, value_delimiter = ',')]
    pub select: Option<Vec<String>>,
    /// Groups to leave out, e.g. the held-out fold.
    #[arg(long, value_delimiter = ',')]
    pub exclude: Option<Vec<String>>,
    /// Inferred from the dataset's vocabulary when omitted.
    #[arg(long)]
    pub head: Option<Head>,
    /// Checkpoint to fine-tune; its final layer is replaced.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Defaults to 0.01 when fine-tuning and 0.001 from scratch.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Learning-rate multiplier of the replaced layer when fine-tuning.
    #[arg(long)]
    pub head_lr_multiplier: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

layered!(TrainArgs {
    dataset,
    split,
    select,
    exclude,
    head,
    init,
    epochs,
    learning_rate,
    momentum,
    weight_decay,
    batch_size,
    head_lr_multiplier,
    seed,
});

pub fn run(ctx: &Context, mut args: TrainArgs, file: TrainArgs) -> CliResult<()> {
    args.fill_from(file);
    let seed = *args.seed.get_or_insert(0);
    let path = require(&args.dataset, "dataset")?.clone();
    let defaults = TrainConfig::new(Head::MultiClass, DEFAULT_EPOCHS, seed);
    args.epochs.get_or_insert(DEFAULT_EPOCHS);
    args.momentum.get_or_insert(defaults.momentum);
    args.weight_decay.get_or_insert(defaults.weight_decay);
    args.batch_size.get_or_insert(defaults.batch_size);
    let default_lr = if args.init.is_some() {
        args.head_lr_multiplier
            .get_or_insert(DEFAULT_HEAD_LR_MULTIPLIER);
        FINE_TUNE_LEARNING_RATE
    } else {
        if args.head_lr_multiplier.is_some() {
            return Err(CliError::bad_argument("--head-lr-multiplier needs --init"));
        }
        SCRATCH_LEARNING_RATE
    };
    args.learning_rate.get_or_insert(default_lr);

    let mut run = ctx.start("train", seed, &args)?;
    let manifest = load_dataset_manifest(&mut run, &path)?;
    let head = match args.head {
        Some(h) => h,
        None => *args.head.insert(infer_head(&manifest)?),
    };
    let labels = vocabulary(&manifest, head).to_vec();
    if labels.is_empty() {
        return Err(CliError::data(format!(
            "the dataset declares no {head} labels"
        )));
    }
    let records = select_records(
        &mut run,
        &manifest.records,
        args.split.as_deref(),
        args.select.as_deref().unwrap_or_default(),
        args.exclude.as_deref().unwrap_or_default(),
    )?;
    let data = Dataset::from_records(&records, head, &labels)?;

    let config = TrainConfig {
        batch_size: args.batch_size.unwrap(),
        momentum: args.momentum.unwrap(),
        weight_decay: args.weight_decay.unwrap(),
        learning_rate: args.learning_rate.unwrap(),
        epochs: args.epochs.unwrap(),
        seed,
        head,
    };
    config.validate()?;
    let mut net = match &args.init {
        Some(init) => {
            let ckpt = load_checkpoint(&mut run, init)?;
            fine_tune(&ckpt, labels.len(), args.head_lr_multiplier.unwrap(), seed)?
        }
        None => Network::new(
            Architecture::desk_scale(data.image_shape(), labels.len()),
            seed,
        )?,
    };
    let report = train(&mut net, &data, &config)?;
    run.write(
        "model.ckpt",
        Checkpoint::new(net, Some(head), labels).to_bytes(),
    )?;
    run.write("loss.tsv", report.to_tsv())?;
    eprintln!(
        "trained {} epochs on {} images, final loss {:.6}",
        config.epochs,
        data.len(),
        report.final_loss()
    );
    run.finish()?;
    Ok(())
}
