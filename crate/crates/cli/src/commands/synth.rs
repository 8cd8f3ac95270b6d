use clap::Args;
use serde::{Deserialize, Serialize};

use dermclass_core::dataset::{synth_generate, SynthMode, SynthSpec};
use dermclass_core::heads::Head;

use super::Context;
use crate::config::{layered, Layered};
use crate::error::{CliError, CliResult};

/// Generate a synthetic labelled dataset.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SynthArgs {
    /// `multi-class` (one diagnosis per image) or `multi-label` (tag sets).
    #[arg(long)]
    pub head: Option<Head>,
    /// Number of classes or tags.
    #[arg(long)]
    pub labels: Option<usize>,
    /// Images per label.
    #[arg(long)]
    pub per_label: Option<usize>,
    /// Image height and width.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    /// Standard deviation of pixel noise.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Shift of the label-to-style assignment.
    #[arg(long)]
    pub style_offset: Option<usize>,
    #[arg(long)]
    pub atlas: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

layered!(SynthArgs {
    head,
    labels,
    per_label,
    size,
    channels,
    noise,
    style_offset,
    atlas,
    seed
});

pub fn run(ctx: &Context, mut args: SynthArgs, file: SynthArgs) -> CliResult<()> {
    args.fill_from(file);
    let head = *args.head.get_or_insert(Head::MultiClass);
    let seed = *args.seed.get_or_insert(0);
    let mode = match head {
        Head::MultiClass => SynthMode::MultiClass,
        Head::MultiLabel => SynthMode::MultiLabel,
    };
    let mut spec = SynthSpec::new(
        mode,
        *args.labels.get_or_insert(4),
        *args.per_label.get_or_insert(8),
        seed,
    );
    let size = *args.size.get_or_insert(32);
    spec.shape = [*args.channels.get_or_insert(3), size, size];
    spec.noise = *args.noise.get_or_insert(spec.noise);
    spec.style_offset = *args.style_offset.get_or_insert(0);
    spec.atlas = args.atlas.get_or_insert_with(|| spec.atlas.clone()).clone();
    if spec.atlas.trim().is_empty() || spec.atlas.contains('\t') {
        return Err(CliError::bad_argument(
            "atlas name must be nonempty and tab-free",
        ));
    }

    let data = synth_generate(&spec)?;
    let mut run = ctx.start("synth", seed, &args)?;
    run.write("dataset.tsv", data.into_manifest(mode).to_text())?;
    run.finish()?;
    Ok(())
}
