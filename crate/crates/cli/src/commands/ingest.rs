use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use dermclass_core::dataset::Manifest;
use dermclass_core::taxonomy::{filter_min_count, normalize_label};

use super::{load_dataset_manifest, require, Context};
use crate::config::{layered, Layered};
use crate::error::{CliError, CliResult};
use crate::run::Run;

/// Validate a manifest, apply label maps, and write a self-contained dataset.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct IngestArgs {
    /// Input manifest; images may be inline or PGM/PPM files.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// `raw<TAB>canonical` map applied to diagnoses (from `merge`).
    #[arg(long)]
    pub label_map: Option<PathBuf>,
    /// `raw<TAB>canonical` map applied to lesion tags.
    #[arg(long)]
    pub tag_map: Option<PathBuf>,
    /// Classes and tags with at most this many images are dropped.
    #[arg(long)]
    pub min_count: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

layered!(IngestArgs {
    manifest,
    label_map,
    tag_map,
    min_count,
    seed
});

fn load_map(run: &mut Run, path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = run.read_input_text(path)?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (i == 0 && line.starts_with("raw\t")) {
            continue;
        }
        let (raw, canon) = line.split_once('\t').ok_or_else(|| {
            CliError::data(format!(
                "{}:{}: expected `raw<TAB>canonical`",
                path.display(),
                i + 1
            ))
        })?;
        map.insert(normalize_label(raw), canon.trim().to_string());
    }
    Ok(map)
}

fn apply(map: Option<&BTreeMap<String, String>>, name: &str) -> String {
    match map {
        None => name.to_string(),
        Some(m) => {
            let key = normalize_label(name);
            m.get(&key).cloned().unwrap_or(key)
        }
    }
}

/// Keep the declared order when no map renamed anything, else sort.
fn vocabulary(declared: &[String], renamed: bool, retained: &BTreeSet<String>) -> Vec<String> {
    if renamed || declared.is_empty() {
        retained.iter().cloned().collect()
    } else {
        declared
            .iter()
            .filter(|c| retained.contains(*c))
            .cloned()
            .collect()
    }
}

pub fn run(ctx: &Context, mut args: IngestArgs, file: IngestArgs) -> CliResult<()> {
    args.fill_from(file);
    let min_count = *args.min_count.get_or_insert(0);
    let seed = *args.seed.get_or_insert(0);
    let path = require(&args.manifest, "manifest")?.clone();

    let mut run = ctx.start("ingest", seed, &args)?;
    let manifest = load_dataset_manifest(&mut run, &path)?;
    let label_map = args
        .label_map
        .as_deref()
        .map(|p| load_map(&mut run, p))
        .transpose()?;
    let tag_map = args
        .tag_map
        .as_deref()
        .map(|p| load_map(&mut run, p))
        .transpose()?;

    let mut records = manifest.records.clone();
    let mut class_counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut tag_counts: BTreeMap<String, u64> = BTreeMap::new();
    for r in &mut records {
        if let Some(d) = &r.diagnosis {
            let d = apply(label_map.as_ref(), d);
            *class_counts.entry(d.clone()).or_insert(0) += 1;
            r.diagnosis = Some(d);
        }
        if let Some(tags) = &r.tags {
            let tags: BTreeSet<String> = tags.iter().map(|t| apply(tag_map.as_ref(), t)).collect();
            for t in &tags {
                *tag_counts.entry(t.clone()).or_insert(0) += 1;
            }
            r.tags = Some(tags);
        }
    }
    let classes = filter_min_count(&class_counts, min_count);
    let tags = filter_min_count(&tag_counts, min_count);
    let total = records.len();
    records.retain_mut(|r| {
        if r.diagnosis.as_ref().is_some_and(|d| !classes.contains(d)) {
            r.diagnosis = None;
        }
        if let Some(t) = &mut r.tags {
            t.retain(|x| tags.contains(x));
        }
        r.diagnosis.is_some() || r.tags.as_ref().is_some_and(|t| !t.is_empty())
    });
    if records.is_empty() {
        return Err(CliError::data("no labelled records remain after filtering"));
    }

    let out = Manifest::new(
        records,
        vocabulary(&manifest.classes, label_map.is_some(), &classes),
        vocabulary(&manifest.tags, tag_map.is_some(), &tags),
    );
    let mut summary = String::new();
    let _ = writeln!(summary, "records_in\t{total}");
    let _ = writeln!(summary, "records_out\t{}", out.records.len());
    let _ = writeln!(summary, "classes\t{}", out.classes.len());
    let _ = writeln!(summary, "tags\t{}", out.tags.len());
    for c in &out.classes {
        let _ = writeln!(summary, "class\t{c}\t{}", class_counts[c]);
    }
    for t in &out.tags {
        let _ = writeln!(summary, "tag\t{t}\t{}", tag_counts[t]);
    }
    run.write("dataset.tsv", out.to_text())?;
    run.write("ingest_summary.txt", summary)?;
    run.finish()?;
    Ok(())
}
