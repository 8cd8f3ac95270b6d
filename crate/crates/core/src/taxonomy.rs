//! Label reconciliation across atlases.
//!
//! Names are compared with the gestalt (Ratcliff/Obershelp) ratio
//! `S = 2M / T`: `M` counts the characters matched by repeatedly taking the
//! longest common substring and recursing on the pieces to its left and
//! right, `T` is the combined length of both strings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};

/// Lowercase, drop punctuation, collapse runs of whitespace.
pub fn normalize_label(raw: &str) -> String {
    let cleaned: String = raw
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Longest common substring of `a` and `b` as `(start_a, start_b, len)`.
/// Ties prefer the smallest start in `a`, then in `b`.
fn longest_common_substring(a: &[char], b: &[char]) -> (usize, usize, usize) {
    let mut best = (0, 0, 0);
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for i in 0..a.len() {
        for j in 0..b.len() {
            cur[j + 1] = if a[i] == b[j] { prev[j] + 1 } else { 0 };
            let len = cur[j + 1];
            if len == 0 {
                continue;
            }
            let (sa, sb) = (i + 1 - len, j + 1 - len);
            if len > best.2 || (len == best.2 && (sa, sb) < (best.0, best.1)) {
                best = (sa, sb, len);
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

/// Number of characters matched by the gestalt recursion.
pub fn matching_characters(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut total = 0;
    let mut stack = vec![(0, a.len(), 0, b.len())];
    while let Some((a0, a1, b0, b1)) = stack.pop() {
        if a0 >= a1 || b0 >= b1 {
            continue;
        }
        let (sa, sb, len) = longest_common_substring(&a[a0..a1], &b[b0..b1]);
        if len == 0 {
            continue;
        }
        total += len;
        stack.push((a0, a0 + sa, b0, b0 + sb));
        stack.push((a0 + sa + len, a1, b0 + sb + len, b1));
    }
    total
}

/// Gestalt similarity `2M / T`; two empty strings are identical (1.0).
pub fn similarity(a: &str, b: &str) -> f64 {
    let t = a.chars().count() + b.chars().count();
    if t == 0 {
        return 1.0;
    }
    2.0 * matching_characters(a, b) as f64 / t as f64
}

/// One diagnosis label as it appears in one atlas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelEntry {
    pub name: String,
    pub atlas: String,
    pub count: u64,
}

impl LabelEntry {
    pub fn new(name: impl Into<String>, atlas: impl Into<String>, count: u64) -> Self {
        Self {
            name: name.into(),
            atlas: atlas.into(),
            count,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergePair {
    pub from: String,
    pub to: String,
    pub similarity: f64,
}

/// Mapping from normalized raw names to canonical names.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeTable {
    pub threshold: f64,
    pub mapping: BTreeMap<String, String>,
    /// Every non-identity entry of `mapping`, with its similarity.
    pub merges: Vec<MergePair>,
}

impl MergeTable {
    /// Canonical name for `raw`, or `None` if the name was never seen.
    pub fn resolve(&self, raw: &str) -> Option<&str> {
        self.mapping.get(&normalize_label(raw)).map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    /// Summed image counts per canonical name.
    pub fn merged_counts(&self, entries: &[LabelEntry]) -> BTreeMap<String, u64> {
        let mut counts = BTreeMap::new();
        for e in entries {
            let key = normalize_label(&e.name);
            let canon = self.mapping.get(&key).cloned().unwrap_or(key);
            *counts.entry(canon).or_insert(0) += e.count;
        }
        counts
    }

    /// Two tab-separated columns: raw name, canonical name.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("raw\tcanonical\n");
        for (k, v) in &self.mapping {
            let _ = writeln!(out, "{k}\t{v}");
        }
        out
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!(
            "merge threshold must lie in (0, 1], got {threshold}"
        )))
    }
}

fn normalized_nonempty(raw: &str) -> Result<String> {
    let n = normalize_label(raw);
    if n.is_empty() {
        Err(Error::Data(format!(
            "label `{raw}` is empty after normalization"
        )))
    } else {
        Ok(n)
    }
}

/// Most similar candidate; ties go to the lexicographically smallest name.
/// `candidates` must be sorted.
fn best_match<'c>(name: &str, candidates: &'c [String]) -> Option<(&'c str, f64)> {
    let mut best: Option<(&str, f64)> = None;
    for c in candidates {
        let s = similarity(name, c);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((c, s));
        }
    }
    best
}

/// Fold labels from every other atlas into the names used by
/// `canonical_source`. A name is merged into its most similar canonical name
/// when that similarity strictly exceeds `threshold`; otherwise it stays as is.
/// Merges are never chained.
pub fn merge_labels(
    entries: &[LabelEntry],
    threshold: f64,
    canonical_source: &str,
) -> Result<MergeTable> {
    check_threshold(threshold)?;
    let mut canonical = BTreeSet::new();
    let mut others = BTreeSet::new();
    for e in entries {
        let n = normalized_nonempty(&e.name)?;
        if e.atlas == canonical_source {
            canonical.insert(n);
        } else {
            others.insert(n);
        }
    }
    let canonical: Vec<String> = canonical.into_iter().collect();
    let others: Vec<String> = others
        .into_iter()
        .filter(|n| canonical.binary_search(n).is_err())
        .collect();

    let matches: Vec<Option<(&str, f64)>> = others
        .par_iter()
        .map(|n| best_match(n, &canonical))
        .collect();

    let mut mapping: BTreeMap<String, String> =
        canonical.iter().map(|c| (c.clone(), c.clone())).collect();
    let mut merges = Vec::new();
    for (name, m) in others.iter().zip(matches) {
        match m {
            Some((target, s)) if s > threshold => {
                mapping.insert(name.clone(), target.to_string());
                merges.push(MergePair {
                    from: name.clone(),
                    to: target.to_string(),
                    similarity: s,
                });
            }
            _ => {
                mapping.insert(name.clone(), name.clone());
            }
        }
    }
    Ok(MergeTable {
        threshold,
        mapping,
        merges,
    })
}

/// Labels with strictly more than `min_count` images.
pub fn filter_min_count(counts: &BTreeMap<String, u64>, min_count: u64) -> BTreeSet<String> {
    counts
        .iter()
        .filter(|(_, &c)| c > min_count)
        .map(|(k, _)| k.clone())
        .collect()
}

/// Result of lesion-tag deduplication.
#[derive(Debug, Clone)]
pub struct TagDedup {
    pub table: MergeTable,
    pub counts: BTreeMap<String, u64>,
    /// Retained canonical tags, lexicographic.
    pub retained: Vec<String>,
}

/// Merge near-duplicate tags, sum their counts, then drop infrequent tags.
///
/// Tags come from a single source, so canonical names are chosen greedily:
/// tags are visited by descending count (ties lexicographic) and each one
/// either merges into the most similar canonical tag seen so far or becomes
/// canonical itself.
pub fn dedupe_lesion_tags(
    tags: &[(String, u64)],
    threshold: f64,
    min_count: u64,
) -> Result<TagDedup> {
    check_threshold(threshold)?;
    let mut totals: BTreeMap<String, u64> = BTreeMap::new();
    for (raw, count) in tags {
        *totals.entry(normalized_nonempty(raw)?).or_insert(0) += count;
    }
    let mut order: Vec<(&String, u64)> = totals.iter().map(|(k, &v)| (k, v)).collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));

    let mut canonical: Vec<String> = Vec::new();
    let mut mapping = BTreeMap::new();
    let mut merges = Vec::new();
    for (name, _) in order {
        match best_match(name, &canonical) {
            Some((target, s)) if s > threshold => {
                mapping.insert(name.clone(), target.to_string());
                merges.push(MergePair {
                    from: name.clone(),
                    to: target.to_string(),
                    similarity: s,
                });
            }
            _ => {
                mapping.insert(name.clone(), name.clone());
                let pos = canonical.binary_search(name).unwrap_err();
                canonical.insert(pos, name.clone());
            }
        }
    }
    let table = MergeTable {
        threshold,
        mapping,
        merges,
    };
    let mut counts = BTreeMap::new();
    for (name, c) in &totals {
        *counts.entry(table.mapping[name].clone()).or_insert(0) += c;
    }
    let retained = filter_min_count(&counts, min_count).into_iter().collect();
    Ok(TagDedup {
        table,
        counts,
        retained,
    })
}

/// Parse tab-separated `atlas<TAB>name<TAB>count` lines. Blank lines and
/// lines starting with `#` are skipped.
pub fn parse_label_entries(text: &str, path: &Path) -> Result<Vec<LabelEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |field: &str, message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            field: field.into(),
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(err(
                "line",
                format!("expected 3 tab-separated fields, got {}", fields.len()),
            ));
        }
        let count = fields[2]
            .trim()
            .parse::<u64>()
            .map_err(|e| err("count", e.to_string()))?;
        if normalize_label(fields[1]).is_empty() {
            return Err(err("name", "empty label name".into()));
        }
        out.push(LabelEntry::new(fields[1], fields[0].trim(), count));
    }
    Ok(out)
}

/// Human-readable merge summary.
pub fn merge_report(
    entries: &[LabelEntry],
    table: &MergeTable,
    retained: &BTreeSet<String>,
    min_count: u64,
) -> String {
    let mut out = String::new();
    let distinct: BTreeSet<String> = entries.iter().map(|e| normalize_label(&e.name)).collect();
    let canonical: BTreeSet<&String> = table.mapping.values().collect();
    let _ = writeln!(out, "threshold\t{}", table.threshold);
    let _ = writeln!(out, "labels_in\t{}", distinct.len());
    let _ = writeln!(out, "labels_after_merge\t{}", canonical.len());
    let _ = writeln!(out, "min_count\t{min_count}");
    let _ = writeln!(out, "labels_out\t{}", retained.len());
    let _ = writeln!(out, "merges\t{}", table.merges.len());
    for m in &table.merges {
        let _ = writeln!(out, "merge\t{}\t{}\t{:.6}", m.from, m.to, m.similarity);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn similarity_examples() {
        assert_eq!(similarity("melanoma", "melanoma"), 1.0);
        assert_eq!(similarity("abc", "xyz"), 0.0);
        assert_eq!(similarity("", ""), 1.0);
        assert_eq!(similarity("abc", ""), 0.0);
        assert!((similarity("nevus", "naevus") - 10.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn lcs_tie_prefers_earliest_in_first_string() {
        // "ab" and "cd" both length 2; "ab" starts first in `a`.
        let a: Vec<char> = "abxcd".chars().collect();
        let b: Vec<char> = "cdyab".chars().collect();
        assert_eq!(longest_common_substring(&a, &b), (0, 3, 2));
    }

    #[test]
    fn normalization() {
        assert_eq!(
            normalize_label("  Malignant   MELANOMA. "),
            "malignant melanoma"
        );
        assert_eq!(normalize_label("nevus, compound"), "nevus compound");
    }

    #[test]
    fn word_order_swap_is_not_merged() {
        // "malignant" (9 chars) is the longest common substring; nothing else
        // matches on either side: S = 18/36.
        let s = similarity("malignant melanoma", "melanoma malignant");
        assert!((s - 0.5).abs() < 1e-12, "{s}");
        let entries = vec![
            LabelEntry::new("malignant melanoma", "DermQuest", 10),
            LabelEntry::new("melanoma malignant", "Derma", 5),
        ];
        let table = merge_labels(&entries, 0.8, "DermQuest").unwrap();
        assert_eq!(
            table.resolve("melanoma malignant"),
            Some("melanoma malignant")
        );
        assert!(table.merges.is_empty());
    }

    #[test]
    fn close_variant_merges_into_canonical() {
        let entries = vec![
            LabelEntry::new("Nevus", "DermQuest", 400),
            LabelEntry::new("naevus", "Dermnet", 20),
            LabelEntry::new("psoriasis", "Dermnet", 500),
        ];
        let table = merge_labels(&entries, 0.8, "DermQuest").unwrap();
        assert_eq!(table.resolve("naevus"), Some("nevus"));
        assert_eq!(table.resolve("psoriasis"), Some("psoriasis"));
        let counts = table.merged_counts(&entries);
        assert_eq!(counts["nevus"], 420);
    }

    #[test]
    fn single_entry_maps_to_itself() {
        let table = merge_labels(&[LabelEntry::new("acne", "Derma", 3)], 0.8, "DermQuest").unwrap();
        assert_eq!(table.resolve("acne"), Some("acne"));
        assert!(merge_labels(&[], 0.8, "DermQuest").unwrap().is_empty());
    }

    #[test]
    fn threshold_one_never_merges_distinct_names() {
        let entries = vec![
            LabelEntry::new("nevus", "DermQuest", 1),
            LabelEntry::new("naevus", "Derma", 1),
        ];
        assert!(merge_labels(&entries, 1.0, "DermQuest")
            .unwrap()
            .merges
            .is_empty());
        assert!(merge_labels(&entries, 0.0, "DermQuest").is_err());
        assert!(merge_labels(&entries, 1.5, "DermQuest").is_err());
    }

    #[test]
    fn filter_is_strict() {
        let counts: BTreeMap<String, u64> = [("A".to_string(), 350), ("B".to_string(), 10)].into();
        assert_eq!(
            filter_min_count(&counts, 300),
            BTreeSet::from(["A".to_string()])
        );
        let edge: BTreeMap<String, u64> = [("A".to_string(), 300)].into();
        assert!(filter_min_count(&edge, 300).is_empty());
        assert!(filter_min_count(&BTreeMap::new(), 300).is_empty());
    }

    #[test]
    fn erythematous_variant() {
        // M = 12, T = 31: S = 24/31 ≈ 0.774, below the 0.8 merge threshold.
        let s = similarity("erythematous", "erythematous lesion");
        assert!((s - 24.0 / 31.0).abs() < 1e-12);
        let tags = vec![
            ("erythematous".to_string(), 500),
            ("erythematous lesion".to_string(), 40),
        ];
        let d = dedupe_lesion_tags(&tags, 0.8, 50).unwrap();
        assert_eq!(d.retained, vec!["erythematous".to_string()]);
        assert_eq!(d.counts["erythematous"], 500);

        // Below S the variant is folded in and its count summed first.
        let d = dedupe_lesion_tags(&tags, 0.75, 50).unwrap();
        assert_eq!(d.retained, vec!["erythematous".to_string()]);
        assert_eq!(d.counts["erythematous"], 540);
    }

    #[test]
    fn dedupe_edge_cases() {
        let one = vec![("scale".to_string(), 90)];
        assert_eq!(
            dedupe_lesion_tags(&one, 0.8, 50).unwrap().retained,
            vec!["scale"]
        );
        let few = vec![("scale".to_string(), 9), ("crust".to_string(), 3)];
        assert!(dedupe_lesion_tags(&few, 0.8, 50)
            .unwrap()
            .retained
            .is_empty());
    }

    #[test]
    fn parse_entries_reports_line_numbers() {
        let text = "DermQuest\tnevus\t12\n\nDerma\tacne\tmany\n";
        let err = parse_label_entries(text, Path::new("x.tsv")).unwrap_err();
        assert!(err.to_string().contains("x.tsv:3"), "{err}");
        let ok = parse_label_entries("DermQuest\tnevus\t12\n", Path::new("x.tsv")).unwrap();
        assert_eq!(ok, vec![LabelEntry::new("nevus", "DermQuest", 12)]);
    }
}
