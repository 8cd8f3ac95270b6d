use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ImageRecord;
use crate::error::{invalid, Result};

/// Record indices on each side of an atlas-based split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtlasSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Records whose atlas is on neither list.
    pub excluded: Vec<usize>,
}

pub fn split_by_atlas(
    records: &[ImageRecord],
    train_atlases: &[String],
    test_atlases: &[String],
) -> Result<AtlasSplit> {
    let train: BTreeSet<&str> = train_atlases.iter().map(String::as_str).collect();
    let test: BTreeSet<&str> = test_atlases.iter().map(String::as_str).collect();
    if let Some(a) = train.intersection(&test).next() {
        return Err(invalid(format!(
            "atlas `{a}` is listed for both training and testing"
        )));
    }
    let mut split = AtlasSplit {
        train: Vec::new(),
        test: Vec::new(),
        excluded: Vec::new(),
    };
    for (i, r) in records.iter().enumerate() {
        if train.contains(r.atlas.as_str()) {
            split.train.push(i);
        } else if test.contains(r.atlas.as_str()) {
            split.test.push(i);
        } else {
            split.excluded.push(i);
        }
    }
    Ok(split)
}

/// Fold index per record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSpec {
    pub k: usize,
    pub assignments: Vec<usize>,
}

impl FoldSpec {
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }

    /// Indices held out when `fold` is the test fold.
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }

    /// `record id<TAB>fold` lines with a header.
    pub fn to_tsv(&self, ids: &[String]) -> String {
        let mut out = String::from("id\tfold\n");
        for (id, f) in ids.iter().zip(&self.assignments) {
            let _ = writeln!(out, "{id}\t{f}");
        }
        out
    }
}

/// Seeded shuffle, then contiguous chunks; the first `n mod k` folds get the
/// extra record.
pub fn kfold_split<T>(records: &[T], k: usize, seed: u64) -> Result<FoldSpec> {
    let n = records.len();
    if k == 0 || k > n {
        return Err(invalid(format!("cannot split {n} records into {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut assignments = vec![0; n];
    let mut pos = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &i in &order[pos..pos + size] {
            assignments[i] = fold;
        }
        pos += size;
    }
    Ok(FoldSpec { k, assignments })
}
