//! Config files: one TOML table per subcommand, e.g.
//!
//! ```toml
//! [train]
//! epochs = 40
//! learning-rate = 0.01
//! ```
//!
//! Command-line flags take precedence over the file.

use std::path::Path;

use serde::Deserialize;

use crate::commands::{
    CalibrateArgs, EvalArgs, IngestArgs, MergeArgs, RetrieveArgs, SplitArgs, SynthArgs, TrainArgs,
};
use crate::error::{io_context, CliError, CliResult};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub merge: MergeArgs,
    #[serde(default)]
    pub ingest: IngestArgs,
    #[serde(default)]
    pub split: SplitArgs,
    #[serde(default)]
    pub synth: SynthArgs,
    #[serde(default)]
    pub train: TrainArgs,
    #[serde(default)]
    pub calibrate: CalibrateArgs,
    #[serde(default)]
    pub eval: EvalArgs,
    #[serde(default)]
    pub retrieve: RetrieveArgs,
}

pub fn load(path: &Path) -> CliResult<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(io_context(path))?;
    toml::from_str(&text).map_err(|e| CliError::bad_argument(format!("{}: {e}", path.display())))
}

/// Fill every unset field from a lower-priority source.
pub trait Layered {
    fn fill_from(&mut self, lower: Self);
}

/// Implements [`Layered`] for a struct whose fields are all `Option`s.
macro_rules! layered {
    ($ty:ty { $($field:ident),+ $(,)? }) => {
        impl $crate::config::Layered for $ty {
            fn fill_from(&mut self, lower: Self) {
                $(
                    if self.$field.is_none() {
                        self.$field = lower.$field;
                    }
                )+
            }
        }
    };
}
pub(crate) use layered;
