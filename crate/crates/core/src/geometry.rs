//! Cluster codes on a regular simplex and cosine-distance assignment.

use alloc::vec::Vec;

use crate::error::{invalid, shape_err};
use crate::{linalg, Result, Tensor};

/// `k` unit vectors in `R^{k−1}` forming the vertices of a regular simplex
/// centred at the origin. Row `c` is the target direction of cluster `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterCodes {
    codes: Tensor,
}

impl ClusterCodes {
    /// Builds the simplex with its first vertex on the first axis.
    ///
    /// The shifted standard basis vectors `e_c − 1/k` span the hyperplane
    /// orthogonal to the all-ones vector; Gram-Schmidt on them gives a basis
    /// of that hyperplane whose first element points at vertex 0.
    pub fn simplex(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(invalid!("need at least two clusters, got {}", k));
        }
        let inv_k = 1.0 / k as f64;
        let mut vertices = Tensor::zeros(&[k, k]);
        for c in 0..k {
            for j in 0..k {
                let e = if c == j { 1.0 } else { 0.0 };
                vertices.set2(c, j, e - inv_k);
            }
        }
        // Columns: the first k−1 vertices, orthonormalized.
        let basis = linalg::orthonormalize(&vertices.transpose()?.slice_cols(0, k - 1)?)?;
        let mut codes = vertices.matmul(&basis)?;
        for c in 0..k {
            let row = codes.row_mut(c);
            let n = libm::sqrt(linalg::dot(row, row));
            for v in row {
                *v /= n;
            }
        }
        Ok(Self { codes })
    }

    /// Wraps an explicit `k × (k−1)` code matrix.
    pub fn from_matrix(codes: Tensor) -> Result<Self> {
        let (k, q) = codes.dims2()?;
        if k < 2 || q + 1 != k {
            return Err(shape_err!("cluster codes must be k×(k−1), got {:?}", codes.shape()));
        }
        Ok(Self { codes })
    }

    pub fn k(&self) -> usize {
        self.codes.rows()
    }

    /// Dimension of each code, `k − 1`.
    pub fn dim(&self) -> usize {
        self.k() - 1
    }

    pub fn matrix(&self) -> &Tensor {
        &self.codes
    }

    pub fn code(&self, c: usize) -> &[f64] {
        self.codes.row(c)
    }

    /// Code `c` zero-padded to length `s`.
    pub fn padded(&self, c: usize, s: usize) -> Result<Tensor> {
        if c >= self.k() {
            return Err(invalid!("cluster {} out of range for k = {}", c, self.k()));
        }
        if s < self.dim() {
            return Err(invalid!("latent dimension {} is smaller than k − 1 = {}", s, self.dim()));
        }
        let mut v = Tensor::zeros(&[s]);
        v.data_mut()[..self.dim()].copy_from_slice(self.code(c));
        Ok(v)
    }
}

/// Cosine distance `1 − ⟨a, b⟩ / (‖a‖‖b‖)`, in `[0, 2]`.
///
/// A zero vector is equally far from every direction and gets distance 1.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let na = libm::sqrt(linalg::dot(a, a));
    let nb = libm::sqrt(linalg::dot(b, b));
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - linalg::dot(a, b) / (na * nb)).clamp(0.0, 2.0)
}

/// Index and distance of the closest code to `e_prime`, lowest index on
/// ties. `None` when `e_prime` is the zero vector.
pub fn nearest_code(e_prime: &[f64], codes: &Tensor) -> Option<(usize, f64)> {
    if e_prime.iter().all(|&x| x == 0.0) {
        return None;
    }
    let mut best = (0, f64::INFINITY);
    for c in 0..codes.rows() {
        let d = cosine_distance(e_prime, codes.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    Some(best)
}

/// Cosine distances of one score vector's first `k − 1` components to every
/// code.
pub fn code_distances(score: &[f64], codes: &ClusterCodes) -> Vec<f64> {
    let e_prime = &score[..codes.dim()];
    (0..codes.k()).map(|c| cosine_distance(e_prime, codes.code(c))).collect()
}

fn check_scores(scores: &Tensor, codes: &ClusterCodes) -> Result<(usize, usize)> {
    let (n, s) = scores.dims2()?;
    if s < codes.dim() {
        return Err(shape_err!("scores have {} components, need at least k − 1 = {}", s, codes.dim()));
    }
    Ok((n, s))
}

/// `Σ_i min_c d_ic` over the first `k − 1` score components.
pub fn cluster_loss(scores: &Tensor, codes: &ClusterCodes) -> Result<f64> {
    let (n, _) = check_scores(scores, codes)?;
    Ok((0..n)
        .map(|i| nearest_code(&scores.row(i)[..codes.dim()], codes.matrix()).map_or(1.0, |(_, d)| d))
        .sum())
}

/// Hard cluster assignment by smallest cosine distance.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub labels: Vec<usize>,
    pub min_distance: Vec<f64>,
}

impl Assignment {
    pub fn mean_distance(&self) -> f64 {
        if self.min_distance.is_empty() {
            return 0.0;
        }
        self.min_distance.iter().sum::<f64>() / self.min_distance.len() as f64
    }
}

pub fn assign(scores: &Tensor, codes: &ClusterCodes) -> Result<Assignment> {
    let (n, _) = check_scores(scores, codes)?;
    let mut labels = Vec::with_capacity(n);
    let mut min_distance = Vec::with_capacity(n);
    for i in 0..n {
        let (c, d) = nearest_code(&scores.row(i)[..codes.dim()], codes.matrix()).unwrap_or((0, 1.0));
        labels.push(c);
        min_distance.push(d);
    }
    Ok(Assignment { labels, min_distance })
}
