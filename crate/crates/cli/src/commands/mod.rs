mod calibrate;
mod eval;
mod ingest;
mod merge;
mod retrieve;
mod split;
mod synth;
mod train;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use dermclass_core::dataset::{parse_manifest, Manifest};
use dermclass_core::heads::Head;
use dermclass_core::{Checkpoint, Dataset, ImageRecord};

use crate::error::{CliError, CliResult};
use crate::run::Run;

pub use calibrate::CalibrateArgs;
pub use eval::EvalArgs;
pub use ingest::IngestArgs;
pub use merge::MergeArgs;
pub use retrieve::RetrieveArgs;
pub use split::SplitArgs;
pub use synth::SynthArgs;
pub use train::TrainArgs;

pub use calibrate::run as calibrate;
pub use eval::run as eval;
pub use ingest::run as ingest;
pub use merge::run as merge;
pub use retrieve::run as retrieve;
pub use split::run as split;
pub use synth::run as synth;
pub use train::run as train;

/// Global options shared by every subcommand.
pub struct Context<'a> {
    pub run_dir: Option<&'a Path>,
    pub runs_root: &'a Path,
}

impl Context<'_> {
    pub fn start(
        &self,
        command: &'static str,
        seed: u64,
        config: &impl serde::Serialize,
    ) -> CliResult<Run> {
        Run::create(self.run_dir, self.runs_root, command, seed, config)
    }
}

pub fn require<'a, T>(value: &'a Option<T>, flag: &str) -> CliResult<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| CliError::bad_argument(format!("missing required option --{flag}")))
}

pub fn load_dataset_manifest(run: &mut Run, path: &Path) -> CliResult<Manifest> {
    let text = run.read_input_text(path)?;
    Ok(parse_manifest(&text, path)?)
}

/// Group label per record id from a two-column `id<TAB>group` file. A first
/// line starting with `id<TAB>` is a header.
pub fn load_groups(run: &mut Run, path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = run.read_input_text(path)?;
    let mut groups = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (i == 0 && line.starts_with("id\t")) {
            continue;
        }
        let (id, group) = line.split_once('\t').ok_or_else(|| {
            CliError::data(format!(
                "{}:{}: expected `id<TAB>group`",
                path.display(),
                i + 1
            ))
        })?;
        if groups
            .insert(id.to_string(), group.trim().to_string())
            .is_some()
        {
            return Err(CliError::data(format!(
                "{}:{}: duplicate id `{id}`",
                path.display(),
                i + 1
            )));
        }
    }
    Ok(groups)
}

/// Records whose group is listed in `select` (all groups if empty) and not
/// listed in `exclude`. Without a split file every record is kept.
pub fn select_records(
    run: &mut Run,
    records: &[ImageRecord],
    split: Option<&Path>,
    select: &[String],
    exclude: &[String],
) -> CliResult<Vec<ImageRecord>> {
    let Some(path) = split else {
        if !select.is_empty() || !exclude.is_empty() {
            return Err(CliError::bad_argument("--select/--exclude need --split"));
        }
        return Ok(records.to_vec());
    };
    let groups = load_groups(run, path)?;
    let mut out = Vec::new();
    for r in records {
        let g = groups.get(&r.id).ok_or_else(|| {
            CliError::data(format!(
                "record `{}` is missing from {}",
                r.id,
                path.display()
            ))
        })?;
        if (select.is_empty() || select.contains(g)) && !exclude.contains(g) {
            out.push(r.clone());
        }
    }
    if out.is_empty() {
        return Err(CliError::data("the selection contains no records"));
    }
    Ok(out)
}

/// Head implied by which vocabulary a manifest carries.
pub fn infer_head(manifest: &Manifest) -> CliResult<Head> {
    match (manifest.classes.is_empty(), manifest.tags.is_empty()) {
        (false, true) => Ok(Head::MultiClass),
        (true, false) => Ok(Head::MultiLabel),
        _ => Err(CliError::bad_argument(
            "cannot tell the head from the dataset; pass --head multi-class or --head multi-label",
        )),
    }
}

pub fn vocabulary(manifest: &Manifest, head: Head) -> &[String] {
    match head {
        Head::MultiClass => &manifest.classes,
        Head::MultiLabel => &manifest.tags,
    }
}

pub fn load_checkpoint(run: &mut Run, path: &Path) -> CliResult<Checkpoint> {
    let bytes = run.read_input(path)?;
    Ok(Checkpoint::from_bytes(&bytes)?)
}

/// Checkpoint head, which must be recorded.
pub fn checkpoint_head(ckpt: &Checkpoint, path: &Path) -> CliResult<Head> {
    ckpt.head
        .ok_or_else(|| CliError::data(format!("{} does not record a head", path.display())))
}

/// Build a dataset indexed by the checkpoint's label vocabulary.
pub fn dataset_for(ckpt: &Checkpoint, head: Head, records: &[ImageRecord]) -> CliResult<Dataset> {
    Ok(Dataset::from_records(records, head, &ckpt.labels)?)
}

pub fn tag_set(r: &ImageRecord) -> BTreeSet<String> {
    r.tags.clone().unwrap_or_default()
}
