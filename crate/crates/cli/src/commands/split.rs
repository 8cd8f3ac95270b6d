use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use dermclass_core::dataset::{kfold_split, split_by_atlas};

use super::{load_dataset_manifest, require, Context};
use crate::config::{layered, Layered};
use crate::error::CliResult;

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    Kfold,
    Atlas,
}

/// Assign every record to a fold or to the train/test side of an atlas split.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SplitArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<SplitMode>,
    /// Number of folds.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub train_atlas: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub test_atlas: Option<Vec<String>>,
    #[arg(long)]
    pub seed: Option<u64>,
}

layered!(SplitArgs {
    dataset,
    mode,
    k,
    train_atlas,
    test_atlas,
    seed
});

pub fn run(ctx: &Context, mut args: SplitArgs, file: SplitArgs) -> CliResult<()> {
    args.fill_from(file);
    let mode = *args.mode.get_or_insert(SplitMode::Kfold);
    let seed = *args.seed.get_or_insert(0);
    if mode == SplitMode::Kfold {
        args.k.get_or_insert(DEFAULT_FOLDS);
    }
    let path = require(&args.dataset, "dataset")?.clone();

    let mut run = ctx.start("split", seed, &args)?;
    let manifest = load_dataset_manifest(&mut run, &path)?;
    let records = &manifest.records;
    let groups: Vec<String> = match mode {
        SplitMode::Kfold => {
            let folds = kfold_split(records, args.k.unwrap(), seed)?;
            folds.assignments.iter().map(usize::to_string).collect()
        }
        SplitMode::Atlas => {
            let train = require(&args.train_atlas, "train-atlas")?;
            let test = require(&args.test_atlas, "test-atlas")?;
            let split = split_by_atlas(records, train, test)?;
            let mut g = vec![String::new(); records.len()];
            for (side, idx) in [
                ("train", &split.train),
                ("test", &split.test),
                ("excluded", &split.excluded),
            ] {
                for &i in idx {
                    g[i] = side.to_string();
                }
            }
            g
        }
    };
    let mut table = String::from("id\tgroup\n");
    let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for (r, g) in records.iter().zip(&groups) {
        let _ = writeln!(table, "{}\t{g}", r.id);
        *sizes.entry(g).or_insert(0) += 1;
    }
    let mut summary = String::new();
    for (g, n) in &sizes {
        let _ = writeln!(summary, "{g}\t{n}");
    }
    run.write("split.tsv", table)?;
    run.write("split_summary.txt", summary)?;
    run.finish()?;
    Ok(())
}
