//! Tab-separated image manifests.
//!
//! ```text
//! #classes<TAB>name;name;...        optional, fixes class order
//! #tags<TAB>tag;tag;...             optional, fixes the tag vocabulary
//! id<TAB>atlas<TAB>image<TAB>diagnosis<TAB>tag;tag;...
//! ```
//!
//! `image` is either an inline `hex:CxHxW:<bytes>` block or a path to a
//! binary PGM/PPM file, relative to the manifest. An empty diagnosis or tag
//! field means "absent"; a tag field of `-` is an explicitly empty tag set.
//! Other lines starting with `#` are comments.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::raster;
use super::ImageRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub records: Vec<ImageRecord>,
    /// Class names: declared, or the sorted set of diagnoses.
    pub classes: Vec<String>,
    /// Tag vocabulary: declared, or the sorted union of record tags.
    pub tags: Vec<String>,
}

impl Manifest {
    pub fn new(records: Vec<ImageRecord>, classes: Vec<String>, tags: Vec<String>) -> Self {
        Self {
            records,
            classes,
            tags,
        }
    }

    /// Serialize with inline hex images.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if !self.classes.is_empty() {
            let _ = writeln!(out, "#classes\t{}", self.classes.join(";"));
        }
        if !self.tags.is_empty() {
            let _ = writeln!(out, "#tags\t{}", self.tags.join(";"));
        }
        for r in &self.records {
            let tags = match &r.tags {
                None => String::new(),
                Some(t) if t.is_empty() => "-".into(),
                Some(t) => t.iter().cloned().collect::<Vec<_>>().join(";"),
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.id,
                r.atlas,
                raster::encode_hex(&r.image),
                r.diagnosis.as_deref().unwrap_or(""),
                tags
            );
        }
        out
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_manifest(&text, path)
}

fn split_list(s: &str) -> Vec<String> {
    s.split(';')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect()
}

/// Parse manifest text; `path` locates relative image files and labels errors.
pub fn parse_manifest(text: &str, path: &Path) -> Result<Manifest> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut declared_classes = None;
    let mut declared_tags = None;
    let mut records = Vec::new();
    let mut seen = HashSet::new();

    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |field: &str, message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            field: field.into(),
            message,
        };
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#classes\t") {
            declared_classes = Some(split_list(rest));
            continue;
        }
        if let Some(rest) = line.strip_prefix("#tags\t") {
            declared_tags = Some(split_list(rest));
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(err(
                "line",
                format!("expected 5 tab-separated fields, got {}", fields.len()),
            ));
        }
        let id = fields[0].trim();
        if id.is_empty() {
            return Err(err("id", "empty record id".into()));
        }
        if !seen.insert(id.to_string()) {
            return Err(err("id", format!("duplicate record id `{id}`")));
        }
        let atlas = fields[1].trim();
        if atlas.is_empty() {
            return Err(err("atlas", "empty atlas".into()));
        }
        let image_field = fields[2].trim();
        let image = if image_field.starts_with("hex:") {
            raster::decode_hex(image_field).map_err(|e| err("image", e.to_string()))?
        } else if image_field.is_empty() {
            return Err(err("image", "missing image".into()));
        } else {
            let p: PathBuf = base.join(image_field);
            raster::read_pnm(&p).map_err(|e| err("image", e.to_string()))?
        };
        let diagnosis = Some(fields[3].trim())
            .filter(|d| !d.is_empty())
            .map(String::from);
        let tags = match fields[4].trim() {
            "" => None,
            "-" => Some(BTreeSet::new()),
            t => Some(split_list(t).into_iter().collect::<BTreeSet<_>>()),
        };
        if diagnosis.is_none() && tags.is_none() {
            return Err(err(
                "diagnosis",
                "record has neither a diagnosis nor lesion tags".into(),
            ));
        }
        if let (Some(vocab), Some(tags)) = (&declared_tags, &tags) {
            if let Some(t) = tags.iter().find(|t| !vocab.contains(t)) {
                return Err(err("tags", format!("unknown lesion tag `{t}`")));
            }
        }
        records.push(ImageRecord {
            id: id.to_string(),
            atlas: atlas.to_string(),
            image,
            diagnosis,
            tags,
        });
    }

    let classes = declared_classes.unwrap_or_else(|| {
        records
            .iter()
            .filter_map(|r| r.diagnosis.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    });
    if let Some(r) = records
        .iter()
        .find(|r| r.diagnosis.as_ref().is_some_and(|d| !classes.contains(d)))
    {
        return Err(Error::Data(format!(
            "{}: record `{}` diagnosis `{}` is not among the declared classes",
            path.display(),
            r.id,
            r.diagnosis.as_deref().unwrap_or_default()
        )));
    }
    let tags = declared_tags.unwrap_or_else(|| {
        records
            .iter()
            .filter_map(|r| r.tags.as_ref())
            .flatten()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    });
    Ok(Manifest {
        records,
        classes,
        tags,
    })
}
