//! Brute-force reference implementations used by the integration and
//! acceptance tests. Each one takes a deliberately different route from the
//! library code it checks.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gestalt match count by enumerating every substring of `a` and scanning
/// `b` for it. Longest wins; ties go to the smallest start in `a`, then `b`.
pub fn gestalt_matches(a: &[char], b: &[char]) -> usize {
    let mut best: Option<(usize, usize, usize)> = None;
    for len in (1..=a.len().min(b.len())).rev() {
        'outer: for sa in 0..=a.len() - len {
            for sb in 0..=b.len() - len {
                if a[sa..sa + len] == b[sb..sb + len] {
                    best = Some((sa, sb, len));
                    break 'outer;
                }
            }
        }
        if best.is_some() {
            break;
        }
    }
    match best {
        None => 0,
        Some((sa, sb, len)) => {
            len + gestalt_matches(&a[..sa], &b[..sb])
                + gestalt_matches(&a[sa + len..], &b[sb + len..])
        }
    }
}

pub fn gestalt_ratio(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    2.0 * gestalt_matches(&a, &b) as f64 / (a.len() + b.len()) as f64
}

/// Number of labels that outrank `j` (higher confidence, or equal
/// confidence and lower index).
fn rank_of(conf: &[f64], j: usize) -> usize {
    (0..conf.len())
        .filter(|&i| conf[i] > conf[j] || (conf[i] == conf[j] && i < j))
        .count()
}

pub fn topk_oracle(confs: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let hits = confs
        .iter()
        .zip(labels)
        .filter(|(c, &y)| rank_of(c, y) < k)
        .count();
    hits as f64 / confs.len() as f64
}

/// AP as the mean, over positive labels, of precision at that label's rank.
pub fn ap_oracle(conf: &[f64], truth: &[bool]) -> f64 {
    let positives: Vec<usize> = (0..truth.len()).filter(|&j| truth[j]).collect();
    let mut total = 0.0;
    for &p in &positives {
        let r = rank_of(conf, p) + 1;
        let hits_at_r = positives.iter().filter(|&&q| rank_of(conf, q) < r).count();
        total += hits_at_r as f64 / r as f64;
    }
    total / positives.len() as f64
}

pub fn map_oracle(confs: &[Vec<f64>], truths: &[Vec<bool>]) -> f64 {
    confs
        .iter()
        .zip(truths)
        .map(|(c, t)| ap_oracle(c, t))
        .sum::<f64>()
        / confs.len() as f64
}

pub fn confusion_oracle(preds: &[usize], labels: &[usize], q: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; q]; q];
    for i in 0..q {
        let n_i = labels.iter().filter(|&&y| y == i).count();
        for (j, cell) in m[i].iter_mut().enumerate() {
            let c = preds
                .iter()
                .zip(labels)
                .filter(|(&p, &y)| y == i && p == j)
                .count();
            *cell = if n_i == 0 { 0.0 } else { c as f64 / n_i as f64 };
        }
    }
    m
}

/// Per-label `(P, R, F, counted)` from explicit instance sets.
pub fn prf_oracle(
    preds: &[Vec<bool>],
    truths: &[Vec<bool>],
) -> (Vec<(f64, f64, f64, bool)>, [f64; 3]) {
    use std::collections::BTreeSet;
    let q = truths[0].len();
    let mut per = Vec::new();
    for j in 0..q {
        let y: BTreeSet<usize> = (0..truths.len()).filter(|&n| truths[n][j]).collect();
        let z: BTreeSet<usize> = (0..preds.len()).filter(|&n| preds[n][j]).collect();
        let both = y.intersection(&z).count() as f64;
        let p = if z.is_empty() {
            0.0
        } else {
            both / z.len() as f64
        };
        let r = if y.is_empty() {
            0.0
        } else {
            both / y.len() as f64
        };
        let f = if y.is_empty() && z.is_empty() {
            0.0
        } else {
            2.0 * both / (y.len() + z.len()) as f64
        };
        per.push((p, r, f, !(y.is_empty() && z.is_empty())));
    }
    let counted: Vec<_> = per.iter().filter(|e| e.3).collect();
    let mean = |f: fn(&&(f64, f64, f64, bool)) -> f64| {
        if counted.is_empty() {
            0.0
        } else {
            counted.iter().map(f).sum::<f64>() / counted.len() as f64
        }
    };
    let macros = [mean(|e| e.0), mean(|e| e.1), mean(|e| e.2)];
    (per, macros)
}

/// Compensated (Neumaier) summation.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Softmax loss straight from its definition: `−mean log(e^{z_y} / Σ e^{z_k})`.
pub fn softmax_loss_direct(logits: &[Vec<f64>], labels: &[usize]) -> f64 {
    let terms = logits.iter().zip(labels).map(|(z, &y)| {
        let denom = neumaier_sum(z.iter().map(|v| v.exp()));
        -(z[y].exp() / denom).ln()
    });
    neumaier_sum(terms) / logits.len() as f64
}

/// Cross-entropy straight from its definition on probabilities `1/(1+e^{−z})`.
pub fn sigmoid_ce_direct(logits: &[Vec<f64>], labels: &[Vec<f64>]) -> f64 {
    let mut terms = Vec::new();
    for (z, y) in logits.iter().zip(labels) {
        for (&zj, &yj) in z.iter().zip(y) {
            let a = 1.0 / (1.0 + (-zj).exp());
            terms.push(-(yj * a.ln() + (1.0 - yj) * (1.0 - a).ln()));
        }
    }
    neumaier_sum(terms) / logits.len() as f64
}

/// Nearest neighbours by repeated minimum selection over all rows.
pub fn knn_oracle(
    ids: &[String],
    rows: &[Vec<f64>],
    query: &[f64],
    k: usize,
) -> Vec<(String, f64)> {
    let mut remaining: Vec<(String, f64)> = ids
        .iter()
        .zip(rows)
        .map(|(id, r)| {
            let d = r
                .iter()
                .zip(query)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            (id.clone(), d)
        })
        .collect();
    let mut out = Vec::new();
    while out.len() < k {
        let mut best = 0;
        for i in 1..remaining.len() {
            let (ref id, d) = remaining[i];
            let (ref bid, bd) = remaining[best];
            if d < bd || (d == bd && id < bid) {
                best = i;
            }
        }
        out.push(remaining.swap_remove(best));
    }
    out
}

/// Random confidence matrix; with `ties` the values come from a coarse grid.
pub fn random_confs(rng: &mut ChaCha8Rng, n: usize, q: usize, ties: bool) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..q)
                .map(|_| {
                    if ties {
                        f64::from(rng.random_range(0..5u8)) / 4.0
                    } else {
                        rng.random::<f64>()
                    }
                })
                .collect()
        })
        .collect()
}

pub fn random_bits(rng: &mut ChaCha8Rng, n: usize, q: usize, p: f64) -> Vec<Vec<bool>> {
    (0..n)
        .map(|_| (0..q).map(|_| rng.random_bool(p)).collect())
        .collect()
}

/// Random bit matrix in which every row has at least one set bit.
pub fn random_nonempty_bits(rng: &mut ChaCha8Rng, n: usize, q: usize) -> Vec<Vec<bool>> {
    let mut rows = random_bits(rng, n, q, 0.35);
    for row in &mut rows {
        if !row.iter().any(|&b| b) {
            let j = rng.random_range(0..q);
            row[j] = true;
        }
    }
    rows
}

pub fn random_string(rng: &mut ChaCha8Rng, max_len: usize, alphabet: &[char]) -> String {
    let len = rng.random_range(0..=max_len);
    (0..len)
        .map(|_| alphabet[rng.random_range(0..alphabet.len())])
        .collect()
}
