//! Clustering quality: adjusted Rand index, normalized mutual information
//! and average membership strength.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{code_distances, ClusterCodes};
use crate::{Error, Result, Tensor};

struct Contingency {
    n: usize,
    cells: BTreeMap<(usize, usize), usize>,
    rows: BTreeMap<usize, usize>,
    cols: BTreeMap<usize, usize>,
}

impl Contingency {
    fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::LengthMismatch(a.len(), b.len()));
        }
        let mut cells = BTreeMap::new();
        let mut rows = BTreeMap::new();
        let mut cols = BTreeMap::new();
        for (&x, &y) in a.iter().zip(b) {
            *cells.entry((x, y)).or_insert(0) += 1;
            *rows.entry(x).or_insert(0) += 1;
            *cols.entry(y).or_insert(0) += 1;
        }
        Ok(Self {
            n: a.len(),
            cells,
            rows,
            cols,
        })
    }
}

fn pairs(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index. Symmetric, permutation invariant, 1 for identical
/// partitions; the degenerate case with zero expected-index spread returns 1.
pub fn adjusted_rand_index(labels_true: &[usize], labels_pred: &[usize]) -> Result<f64> {
    let t = Contingency::new(labels_true, labels_pred)?;
    let index: f64 = t.cells.values().map(|&c| pairs(c)).sum();
    let sum_a: f64 = t.rows.values().map(|&c| pairs(c)).sum();
    let sum_b: f64 = t.cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(t.n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

fn entropy(counts: &BTreeMap<usize, usize>, n: f64) -> f64 {
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * libm::log(p)
        })
        .sum()
}

/// Mutual information normalized by the arithmetic mean of the two
/// entropies. Two single-cluster partitions score 1.
pub fn normalized_mutual_information(labels_true: &[usize], labels_pred: &[usize]) -> Result<f64> {
    let t = Contingency::new(labels_true, labels_pred)?;
    if t.n == 0 {
        return Ok(1.0);
    }
    let n = t.n as f64;
    let (hu, hv) = (entropy(&t.rows, n), entropy(&t.cols, n));
    if t.rows.len() == 1 && t.cols.len() == 1 {
        return Ok(1.0);
    }
    let mean = 0.5 * (hu + hv);
    if mean == 0.0 {
        return Ok(0.0);
    }
    let mi: f64 = t
        .cells
        .iter()
        .map(|(&(x, y), &c)| {
            let c = c as f64;
            c / n * libm::log(n * c / (t.rows[&x] as f64 * t.cols[&y] as f64))
        })
        .sum();
    Ok((mi / mean).clamp(0.0, 1.0))
}

/// Membership strength of one sample: `1 − d₁/d₂` for its two smallest
/// code distances (1 when `d₁ = 0`), and the winning cluster.
pub fn membership_strength(score: &[f64], codes: &ClusterCodes) -> (usize, f64) {
    let d = code_distances(score, codes);
    let mut best = (0, f64::INFINITY);
    for (c, &v) in d.iter().enumerate() {
        if v < best.1 {
            best = (c, v);
        }
    }
    let second = d
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != best.0)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    let strength = if best.1 == 0.0 { 1.0 } else { 1.0 - best.1 / second };
    (best.0, strength)
}

/// Average membership strength: the mean over all `k` clusters of the mean
/// strength of the samples assigned to each. Empty clusters contribute 0.
pub fn average_membership_strength(scores: &Tensor, codes: &ClusterCodes) -> Result<f64> {
    let (n, s) = scores.dims2()?;
    if s < codes.dim() {
        return Err(Error::Shape(alloc::format!(
            "scores have {} components, need at least {}",
            s,
            codes.dim()
        )));
    }
    let k = codes.k();
    let mut sum = vec![0.0; k];
    let mut count = vec![0usize; k];
    for i in 0..n {
        let (c, strength) = membership_strength(scores.row(i), codes);
        sum[c] += strength;
        count[c] += 1;
    }
    let per_cluster: Vec<f64> = sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect();
    Ok(per_cluster.iter().sum::<f64>() / k as f64)
}
