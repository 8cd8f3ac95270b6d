use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use dermclass_core::taxonomy::{
    dedupe_lesion_tags, filter_min_count, merge_labels, merge_report, parse_label_entries,
};

use super::{require, Context};
use crate::config::{layered, Layered};
use crate::error::{CliError, CliResult};

pub const DEFAULT_THRESHOLD: f64 = 0.8;
pub const DEFAULT_MIN_COUNT: u64 = 300;

/// Merge diagnosis names across atlases and deduplicate lesion tags.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct MergeArgs {
    /// `atlas<TAB>name<TAB>count` lines.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Atlas whose names are canonical.
    #[arg(long)]
    pub canonical: Option<String>,
    /// Similarity a name must exceed to be merged.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Names with at most this many images are dropped.
    #[arg(long)]
    pub min_count: Option<u64>,
    /// Optional `tag<TAB>count` lines to deduplicate.
    #[arg(long)]
    pub tags: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

layered!(MergeArgs {
    labels,
    canonical,
    threshold,
    min_count,
    tags,
    seed
});

fn parse_tag_counts(text: &str, path: &Path) -> CliResult<Vec<(String, u64)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: &str| CliError::data(format!("{}:{}: {msg}", path.display(), i + 1));
        let (name, count) = line
            .split_once('\t')
            .ok_or_else(|| bad("expected `tag<TAB>count`"))?;
        let count = count
            .trim()
            .parse()
            .map_err(|_| bad("count is not a nonnegative integer"))?;
        out.push((name.to_string(), count));
    }
    Ok(out)
}

pub fn run(ctx: &Context, mut args: MergeArgs, file: MergeArgs) -> CliResult<()> {
    args.fill_from(file);
    args.threshold.get_or_insert(DEFAULT_THRESHOLD);
    args.min_count.get_or_insert(DEFAULT_MIN_COUNT);
    let seed = *args.seed.get_or_insert(0);
    let labels_path = require(&args.labels, "labels")?.clone();
    let canonical = require(&args.canonical, "canonical")?.clone();
    let (threshold, min_count) = (args.threshold.unwrap(), args.min_count.unwrap());

    let mut run = ctx.start("merge", seed, &args)?;
    let text = run.read_input_text(&labels_path)?;
    let entries = parse_label_entries(&text, &labels_path)?;
    if !entries.iter().any(|e| e.atlas == canonical) {
        return Err(CliError::bad_argument(format!(
            "no labels come from the canonical atlas `{canonical}`"
        )));
    }
    let table = merge_labels(&entries, threshold, &canonical)?;
    let counts = table.merged_counts(&entries);
    let retained = filter_min_count(&counts, min_count);
    run.write("label_map.tsv", table.to_tsv())?;
    run.write(
        "merge_report.txt",
        merge_report(&entries, &table, &retained, min_count),
    )?;
    run.write("labels.txt", lines(&retained))?;

    if let Some(tags_path) = &args.tags {
        let text = run.read_input_text(tags_path)?;
        let dedup = dedupe_lesion_tags(&parse_tag_counts(&text, tags_path)?, threshold, min_count)?;
        run.write("tag_map.tsv", dedup.table.to_tsv())?;
        let mut counts = String::from("tag\tcount\tretained\n");
        for (tag, c) in &dedup.counts {
            let _ = writeln!(
                counts,
                "{tag}\t{c}\t{}",
                u8::from(dedup.retained.contains(tag))
            );
        }
        run.write("tag_counts.tsv", counts)?;
        run.write("tags.txt", lines(&dedup.retained))?;
    }
    run.finish()?;
    Ok(())
}

fn lines<'a>(items: impl IntoIterator<Item = &'a String>) -> String {
    items.into_iter().map(|s| format!("{s}\n")).collect()
}
