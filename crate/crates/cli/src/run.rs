//! Run directories and their manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{io_context, CliError, CliResult};

pub const MANIFEST_NAME: &str = "run.json";

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Output directory of one subcommand invocation.
pub struct Run {
    pub dir: PathBuf,
    command: &'static str,
    seed: u64,
    config: serde_json::Value,
    inputs: BTreeMap<String, String>,
    artifacts: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a serde_json::Value,
    inputs: &'a BTreeMap<String, String>,
    artifacts: &'a BTreeMap<String, String>,
}

impl Run {
    /// Use `explicit` if given, else `<root>/<UTC timestamp>-seed<seed>`.
    pub fn create(
        explicit: Option<&Path>,
        root: &Path,
        command: &'static str,
        seed: u64,
        config: &impl Serialize,
    ) -> CliResult<Self> {
        let dir = match explicit {
            Some(d) => d.to_path_buf(),
            None => {
                let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
                let base = root.join(format!("{stamp}-seed{seed}"));
                let mut dir = base.clone();
                let mut n = 1;
                while dir.exists() {
                    dir = PathBuf::from(format!("{}-{n}", base.display()));
                    n += 1;
                }
                dir
            }
        };
        let config = serde_json::to_value(config).map_err(|e| CliError::data(e.to_string()))?;
        Ok(Self {
            dir,
            command,
            seed,
            config,
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
        })
    }

    /// Read an input file and record its digest.
    pub fn read_input(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(io_context(path))?;
        self.inputs
            .insert(path.display().to_string(), digest(&bytes));
        Ok(bytes)
    }

    pub fn read_input_text(&mut self, path: &Path) -> CliResult<String> {
        String::from_utf8(self.read_input(path)?)
            .map_err(|_| CliError::data(format!("{}: not valid UTF-8", path.display())))
    }

    /// The directory is created on the first write, so runs that fail early
    /// leave nothing behind.
    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> CliResult<()> {
        std::fs::create_dir_all(&self.dir).map_err(io_context(&self.dir))?;
        let path = self.dir.join(name);
        std::fs::write(&path, bytes.as_ref()).map_err(io_context(&path))?;
        self.artifacts
            .insert(name.to_string(), digest(bytes.as_ref()));
        Ok(())
    }

    /// Write `run.json` and list the artifacts on stdout.
    pub fn finish(self) -> CliResult<PathBuf> {
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            config: &self.config,
            inputs: &self.inputs,
            artifacts: &self.artifacts,
        };
        let mut text =
            serde_json::to_string_pretty(&manifest).map_err(|e| CliError::data(e.to_string()))?;
        text.push('\n');
        std::fs::create_dir_all(&self.dir).map_err(io_context(&self.dir))?;
        let path = self.dir.join(MANIFEST_NAME);
        std::fs::write(&path, text).map_err(io_context(&path))?;
        println!("run directory: {}", self.dir.display());
        for name in self.artifacts.keys() {
            println!("  {name}");
        }
        Ok(self.dir)
    }
}
