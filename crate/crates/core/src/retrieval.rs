//! Penultimate-layer embeddings and exact Euclidean k-nearest-neighbour search.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::nn::{LayerKind, Network};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"DCFIDX01";

/// Number of leading layers whose output feeds the final linear layer.
pub fn penultimate_depth(net: &Network) -> Result<usize> {
    let linear: Vec<usize> = net
        .layers()
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(s.kind, LayerKind::Linear { .. }))
        .map(|(i, _)| i)
        .collect();
    let last = net.layers().len().wrapping_sub(1);
    if linear.len() < 2 || linear.last() != Some(&last) {
        return Err(invalid(
            "feature extraction needs at least two linear layers, the last one being the output",
        ));
    }
    Ok(last)
}

/// Activations entering the final linear layer (after any nonlinearity
/// between the two last linear layers), one row per input.
pub fn extract_features(net: &Network, batch: &Tensor) -> Result<Vec<Vec<f64>>> {
    let depth = penultimate_depth(net)?;
    let out = net.infer_prefix(batch, depth)?;
    Ok((0..out.rows()).map(|i| out.row(i).to_vec()).collect())
}

pub fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Immutable table of feature rows keyed by record id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureIndex {
    dim: usize,
    features: Vec<f64>,
    ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub id: String,
    pub distance: f64,
}

impl FeatureIndex {
    pub fn new(ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::Shape(format!(
                "{} ids for {} feature rows",
                ids.len(),
                rows.len()
            )));
        }
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        let mut features = Vec::with_capacity(dim * rows.len());
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::Shape(format!(
                    "row {i} has {} features, expected {dim}",
                    r.len()
                )));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "row {i} (`{}`) is not finite",
                    ids[i]
                )));
            }
            features.extend_from_slice(r);
        }
        Ok(Self { dim, features, ids })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// The `k` closest rows by Euclidean distance, ascending; equal distances
    /// are ordered by record id.
    pub fn knn(&self, query: &[f64], k: usize) -> Result<Vec<Neighbor>> {
        if k == 0 || k > self.len() {
            return Err(invalid(format!("k = {k} outside [1, {}]", self.len())));
        }
        if query.len() != self.dim {
            return Err(Error::Shape(format!(
                "query has {} features, index has {}",
                query.len(),
                self.dim
            )));
        }
        let mut scored: Vec<(f64, usize)> = (0..self.len())
            .map(|i| {
                let d2: f64 = self
                    .row(i)
                    .iter()
                    .zip(query)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2.sqrt(), i)
            })
            .collect();
        scored.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then_with(|| self.ids[a.1].cmp(&self.ids[b.1]))
        });
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(distance, i)| Neighbor {
                id: self.ids[i].clone(),
                distance,
            })
            .collect())
    }

    /// `magic, u64 M, u64 D, M·D f64 row-major, then M × (u32 len, utf-8 id)`,
    /// little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 8 * self.features.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        for v in &self.features {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for id in &self.ids {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let trunc = || Error::Format("feature index truncated".into());
        let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
            let s = bytes
                .get(*pos..pos.checked_add(n).ok_or_else(trunc)?)
                .ok_or_else(trunc)?;
            *pos += n;
            Ok(s)
        };
        let mut pos = 0;
        if take(&mut pos, 8)? != MAGIC {
            return Err(Error::Format("not a feature index (bad magic)".into()));
        }
        let m = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
        let d = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
        let n = m
            .checked_mul(d)
            .and_then(|x| x.checked_mul(8))
            .ok_or_else(trunc)?;
        let features = take(&mut pos, n)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut ids = Vec::with_capacity(m);
        for _ in 0..m {
            let len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
            let id = std::str::from_utf8(take(&mut pos, len)?)
                .map_err(|e| Error::Format(format!("id is not utf-8: {e}")))?;
            ids.push(id.to_string());
        }
        if pos != bytes.len() {
            return Err(Error::Format("trailing bytes after feature index".into()));
        }
        Ok(Self {
            dim: d,
            features,
            ids,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// True iff the two tag sets share at least one tag.
pub fn match_flag(query: &BTreeSet<String>, neighbor: &BTreeSet<String>) -> bool {
    !query.is_disjoint(neighbor)
}

/// One retrieval result row.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalRow {
    pub query: String,
    pub rank: usize,
    pub neighbor: Neighbor,
    pub matched: bool,
}

pub fn retrieval_report_tsv(rows: &[RetrievalRow]) -> String {
    let mut out = String::from("query\trank\tneighbor\tdistance\tmatch\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:.9}\t{}",
            r.query,
            r.rank,
            r.neighbor.id,
            r.neighbor.distance,
            u8::from(r.matched)
        );
    }
    out
}
