//! Image records, label encoding, partitioning and synthetic data.

mod manifest;
pub mod raster;
mod split;
mod synth;

use std::collections::BTreeSet;

pub use manifest::{load_manifest, parse_manifest, Manifest};
pub use split::{kfold_split, split_by_atlas, AtlasSplit, FoldSpec};
pub use synth::{synth_generate, SynthData, SynthMode, SynthSpec};

use crate::error::{invalid, Error, Result};
use crate::heads::Head;
use crate::tensor::Tensor;

/// Binary membership vector over an ordered tag vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelVector(Vec<bool>);

impl LabelVector {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn zeros(q: usize) -> Self {
        Self(vec![false; q])
    }

    /// From `0.0`/`1.0` values; anything else is rejected.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        values
            .iter()
            .map(|&v| match v {
                0.0 => Ok(false),
                1.0 => Ok(true),
                other => Err(invalid(format!("label value {other} is not binary"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn one_hot(q: usize, index: usize) -> Self {
        let mut bits = vec![false; q];
        bits[index] = true;
        Self(bits)
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn to_values(&self) -> Vec<f64> {
        self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Tags whose bit is set, in vocabulary order.
    pub fn decode(&self, vocabulary: &[String]) -> BTreeSet<String> {
        self.0
            .iter()
            .zip(vocabulary)
            .filter(|(&b, _)| b)
            .map(|(_, t)| t.clone())
            .collect()
    }
}

impl AsRef<[bool]> for LabelVector {
    fn as_ref(&self) -> &[bool] {
        &self.0
    }
}

/// Bit `j` is set iff `vocabulary[j]` is among `tags`.
pub fn encode_label_vector<S: AsRef<str>>(
    tags: &[S],
    vocabulary: &[String],
) -> Result<LabelVector> {
    let mut bits = vec![false; vocabulary.len()];
    for t in tags {
        let t = t.as_ref();
        let j = vocabulary
            .iter()
            .position(|v| v == t)
            .ok_or_else(|| Error::Data(format!("tag `{t}` is not in the vocabulary")))?;
        bits[j] = true;
    }
    Ok(LabelVector(bits))
}

/// One image with its diagnosis and/or lesion tags.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub atlas: String,
    /// `C×H×W`, values nominally in `[0, 1]`.
    pub image: Tensor,
    pub diagnosis: Option<String>,
    pub tags: Option<BTreeSet<String>>,
}

impl ImageRecord {
    pub fn validate(&self, vocabulary: Option<&[String]>) -> Result<()> {
        if self.diagnosis.is_none() && self.tags.is_none() {
            return Err(Error::Data(format!(
                "record `{}` has neither a diagnosis nor lesion tags",
                self.id
            )));
        }
        if self.image.shape().len() != 3 {
            return Err(Error::Data(format!(
                "record `{}` image has shape {:?}, expected C×H×W",
                self.id,
                self.image.shape()
            )));
        }
        if let (Some(vocab), Some(tags)) = (vocabulary, &self.tags) {
            if let Some(t) = tags.iter().find(|t| !vocab.contains(t)) {
                return Err(Error::Data(format!(
                    "record `{}` has tag `{t}` outside the vocabulary",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Training targets for one of the two heads.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    Tags(Vec<LabelVector>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Tags(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn head(&self) -> Head {
        match self {
            Targets::Classes(_) => Head::MultiClass,
            Targets::Tags(_) => Head::MultiLabel,
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Classes(c) => Targets::Classes(idx.iter().map(|&i| c[i]).collect()),
            Targets::Tags(t) => Targets::Tags(idx.iter().map(|&i| t[i].clone()).collect()),
        }
    }
}

/// Stacked images plus targets, ready for training or evaluation.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub ids: Vec<String>,
    /// `N×C×H×W`.
    pub images: Tensor,
    pub targets: Targets,
    /// Class names or tag vocabulary indexing the targets.
    pub labels: Vec<String>,
}

impl Dataset {
    /// Build from records, indexing diagnoses (multi-class) or tag sets
    /// (multi-label) by `labels`.
    pub fn from_records(records: &[ImageRecord], head: Head, labels: &[String]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Data("dataset is empty".into()));
        }
        let targets = match head {
            Head::MultiClass => Targets::Classes(
                records
                    .iter()
                    .map(|r| {
                        let d = r.diagnosis.as_deref().ok_or_else(|| {
                            Error::Data(format!(
                                "record `{}` has no diagnosis for a multi-class head",
                                r.id
                            ))
                        })?;
                        labels.iter().position(|l| l == d).ok_or_else(|| {
                            Error::Data(format!(
                                "record `{}` diagnosis `{d}` is not a known class",
                                r.id
                            ))
                        })
                    })
                    .collect::<Result<_>>()?,
            ),
            Head::MultiLabel => Targets::Tags(
                records
                    .iter()
                    .map(|r| {
                        let tags = r.tags.as_ref().ok_or_else(|| {
                            Error::Data(format!(
                                "record `{}` has no lesion tags for a multi-label head",
                                r.id
                            ))
                        })?;
                        let tags: Vec<&String> = tags.iter().collect();
                        encode_label_vector(&tags, labels)
                    })
                    .collect::<Result<_>>()?,
            ),
        };
        let images: Vec<&Tensor> = records.iter().map(|r| &r.image).collect();
        let images = Tensor::stack(&images)
            .map_err(|e| Error::Data(format!("images differ in shape: {e}")))?;
        Ok(Self {
            ids: records.iter().map(|r| r.id.clone()).collect(),
            images,
            targets,
            labels: labels.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn image_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    /// Gather rows `idx` into a batch tensor.
    pub fn batch(&self, idx: &[usize]) -> Tensor {
        let per: usize = self.images.shape()[1..].iter().product();
        let mut data = Vec::with_capacity(per * idx.len());
        for &i in idx {
            data.extend_from_slice(&self.images.data()[i * per..(i + 1) * per]);
        }
        let mut shape = self.images.shape().to_vec();
        shape[0] = idx.len();
        Tensor::new(shape, data).expect("gathered batch is consistent")
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            images: self.batch(idx),
            targets: self.targets.subset(idx),
            labels: self.labels.clone(),
        }
    }
}
