//! Classical kernel spectral clustering on a fixed kernel.
//!
//! The random-walk eigenproblem `D⁻¹KH = HΛ` is solved through its
//! symmetric similarity transform `D^{-1/2} K D^{-1/2}`, which has the same
//! spectrum and orthonormal eigenvectors `V`; then `H = D^{-1/2} V`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, shape_err};
use crate::{linalg, Error, Result, Tensor};

/// Smallest degree accepted before inversion.
pub const MIN_DEGREE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelKind {
    Rbf { sigma: f64 },
    Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    pub values: Tensor,
    pub kind: KernelKind,
}

/// `K_ij = exp(−‖x_i − x_j‖² / (2σ²))` over the rows of `x`.
pub fn rbf_kernel(x: &Tensor, sigma: f64) -> Result<KernelMatrix> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(invalid!("RBF bandwidth must be positive, got {}", sigma));
    }
    let x = flatten_rows(x)?;
    let n = x.rows();
    let denom = 2.0 * sigma * sigma;
    let mut k = Tensor::identity(n);
    for i in 0..n {
        for j in 0..i {
            let d2: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            let v = libm::exp(-d2 / denom);
            k.set2(i, j, v);
            k.set2(j, i, v);
        }
    }
    Ok(KernelMatrix {
        values: k,
        kind: KernelKind::Rbf { sigma },
    })
}

/// `K = Φ Φᵀ` for explicit feature rows.
pub fn linear_kernel(features: &Tensor) -> Result<KernelMatrix> {
    let f = flatten_rows(features)?;
    Ok(KernelMatrix {
        values: f.matmul_nt(&f)?,
        kind: KernelKind::Linear,
    })
}

/// Median pairwise Euclidean distance, a common default RBF bandwidth.
pub fn median_bandwidth(x: &Tensor) -> Result<f64> {
    let x = flatten_rows(x)?;
    let n = x.rows();
    let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in 0..i {
            let d2: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            d.push(libm::sqrt(d2));
        }
    }
    if d.is_empty() {
        return Err(invalid!("need at least two samples for a bandwidth"));
    }
    d.sort_by(f64::total_cmp);
    let m = d[d.len() / 2];
    if m > 0.0 {
        Ok(m)
    } else {
        Err(invalid!("all samples coincide; no bandwidth can be inferred"))
    }
}

fn flatten_rows(x: &Tensor) -> Result<Tensor> {
    let n = x.rows();
    if x.ndim() == 0 || n == 0 {
        return Err(shape_err!("expected a batch of samples, got {:?}", x.shape()));
    }
    x.reshape(&[n, x.len() / n])
}

/// Row sums of a kernel matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DegreeVector(pub Tensor);

impl DegreeVector {
    pub fn values(&self) -> &[f64] {
        self.0.data()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn degrees(k: &KernelMatrix) -> Result<DegreeVector> {
    let (n, c) = k.values.dims2()?;
    if n != c {
        return Err(shape_err!("kernel must be square, got {:?}", k.values.shape()));
    }
    k.values.ensure_finite("kernel matrix")?;
    let d: Vec<f64> = (0..n).map(|i| k.values.row(i).iter().sum()).collect();
    check_degrees(&d)?;
    Ok(DegreeVector(Tensor::vector(d)))
}

fn check_degrees(d: &[f64]) -> Result<()> {
    match d.iter().position(|&v| !(v > MIN_DEGREE)) {
        Some(index) => Err(Error::DegenerateDegree { index, value: d[index] }),
        None => Ok(()),
    }
}

/// Eigenvector rows `h_i` and eigenvalues `Λ` (descending) of `D⁻¹K`.
///
/// Column `j` is scaled so that `h_jᵀ D h_j = 1/λ_j`; for a linear kernel
/// `K = ΦΦᵀ` this makes the implied primal direction `Φᵀ h_j` a unit vector.
/// Columns with `λ_j ≤ 1e-12` use `h_jᵀ D h_j = 1` instead.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralEmbedding {
    pub vectors: Tensor,
    pub values: Tensor,
}

pub fn solve_ksc(k: &KernelMatrix, s: usize) -> Result<SpectralEmbedding> {
    let deg = degrees(k)?;
    solve_ksc_with_degrees(&k.values, &deg, s)
}

/// Solves `D⁻¹KH = HΛ` with externally supplied degrees, e.g. raw-kernel
/// degrees paired with a kernel on weighted-centred features.
pub fn solve_ksc_with_degrees(k: &Tensor, deg: &DegreeVector, s: usize) -> Result<SpectralEmbedding> {
    let (n, c) = k.dims2()?;
    if n != c || deg.len() != n {
        return Err(shape_err!("kernel {:?} and {} degrees disagree", k.shape(), deg.len()));
    }
    if s == 0 || s >= n.max(2) {
        return Err(invalid!("need 0 < s < n, got s = {} with n = {}", s, n));
    }
    check_degrees(deg.values())?;
    let inv_sqrt: Vec<f64> = deg.values().iter().map(|&d| 1.0 / libm::sqrt(d)).collect();
    let mut sym = k.clone();
    for i in 0..n {
        for j in 0..n {
            sym.set2(i, j, k.get2(i, j) * inv_sqrt[i] * inv_sqrt[j]);
        }
    }
    // Exact symmetry for the eigensolver.
    let sym = sym.add(&sym.transpose()?)?.scale(0.5);
    let (values, v) = linalg::eigh_top(&sym, s)?;
    let mut h = v;
    for i in 0..n {
        for j in 0..s {
            let lambda = values.data()[j];
            let norm = if lambda > 1e-12 { libm::sqrt(lambda) } else { 1.0 };
            let x = h.get2(i, j) * inv_sqrt[i] / norm;
            h.set2(i, j, x);
        }
    }
    Ok(SpectralEmbedding { vectors: h, values })
}

/// `‖D⁻¹KH − HΛ‖_F`.
pub fn ksc_residual(k: &Tensor, deg: &DegreeVector, emb: &SpectralEmbedding) -> Result<f64> {
    let kh = k.matmul(&emb.vectors)?;
    let (n, s) = emb.vectors.dims2()?;
    let mut r = 0.0;
    for i in 0..n {
        for j in 0..s {
            let d = kh.get2(i, j) / deg.values()[i] - emb.vectors.get2(i, j) * emb.values.data()[j];
            r += d * d;
        }
    }
    Ok(libm::sqrt(r))
}

/// Score vectors from the dual solution: `e_ij = D_ii · h_ij · λ_j`.
pub fn dual_scores(emb: &SpectralEmbedding, deg: &DegreeVector) -> Result<Tensor> {
    let (n, s) = emb.vectors.dims2()?;
    if deg.len() != n || emb.values.len() != s {
        return Err(shape_err!(
            "embedding {:?}, {} eigenvalues and {} degrees disagree",
            emb.vectors.shape(),
            emb.values.len(),
            deg.len()
        ));
    }
    let mut e = emb.vectors.clone();
    for i in 0..n {
        for j in 0..s {
            e.set2(i, j, deg.values()[i] * emb.vectors.get2(i, j) * emb.values.data()[j]);
        }
    }
    Ok(e)
}

/// `Σ_i w_i φ_i / Σ_i w_i` with `w_i = 1/d_i`.
pub fn weighted_center(features: &Tensor, deg: &DegreeVector) -> Result<Tensor> {
    let (n, f) = features.dims2()?;
    if deg.len() != n {
        return Err(shape_err!("{} feature rows but {} degrees", n, deg.len()));
    }
    let mut center = vec![0.0; f];
    let mut total = 0.0;
    for (i, &d) in deg.values().iter().enumerate() {
        let w = 1.0 / d;
        total += w;
        for (c, x) in center.iter_mut().zip(features.row(i)) {
            *c += w * x;
        }
    }
    Ok(Tensor::vector(center.into_iter().map(|c| c / total).collect()))
}

/// Subtracts the degree-weighted mean from every feature row.
pub fn center_features(features: &Tensor, deg: &DegreeVector) -> Result<Tensor> {
    let center = weighted_center(features, deg)?;
    let mut out = features.clone();
    let f = center.len();
    for row in out.data_mut().chunks_mut(f) {
        for (x, c) in row.iter_mut().zip(center.data()) {
            *x -= c;
        }
    }
    Ok(out)
}

/// Spherical k-means on the directions of the rows of `points`.
///
/// Seeding is deterministic: row 0, then repeatedly the row least aligned
/// with every centroid chosen so far. Zero rows go to cluster 0.
pub fn spherical_kmeans(points: &Tensor, k: usize) -> Result<Vec<usize>> {
    let (n, dim) = points.dims2()?;
    if k == 0 || k > n {
        return Err(invalid!("cannot form {} clusters from {} points", k, n));
    }
    let unit: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let r = points.row(i);
            let norm = libm::sqrt(linalg::dot(r, r));
            if norm > 0.0 {
                r.iter().map(|x| x / norm).collect()
            } else {
                vec![0.0; dim]
            }
        })
        .collect();
    let mut centroids = vec![unit[0].clone()];
    while centroids.len() < k {
        let far = (0..n)
            .map(|i| {
                let best = centroids.iter().map(|c| linalg::dot(c, &unit[i])).fold(f64::NEG_INFINITY, f64::max);
                (i, best)
            })
            .fold((0, f64::INFINITY), |acc, (i, b)| if b < acc.1 { (i, b) } else { acc });
        centroids.push(unit[far.0].clone());
    }
    let mut labels = vec![usize::MAX; n];
    for _ in 0..100 {
        let mut changed = false;
        for i in 0..n {
            let mut best = (0, f64::NEG_INFINITY);
            for (c, centroid) in centroids.iter().enumerate() {
                let sim = linalg::dot(centroid, &unit[i]);
                if sim > best.1 {
                    best = (c, sim);
                }
            }
            if labels[i] != best.0 {
                labels[i] = best.0;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let mut sum = vec![0.0; dim];
            for i in (0..n).filter(|&i| labels[i] == c) {
                for (s, x) in sum.iter_mut().zip(&unit[i]) {
                    *s += x;
                }
            }
            let norm = libm::sqrt(linalg::dot(&sum, &sum));
            if norm > 0.0 {
                *centroid = sum.into_iter().map(|x| x / norm).collect();
            }
        }
    }
    Ok(labels)
}

/// Output of the classical baseline.
#[derive(Clone, Debug)]
pub struct Baseline {
    pub embedding: SpectralEmbedding,
    pub degrees: DegreeVector,
    pub scores: Tensor,
    pub labels: Vec<usize>,
}

/// RBF kernel, `s` leading eigenvectors of `D⁻¹K`, then spherical k-means
/// on the embedding rows. The kernel is not centred, so its constant top
/// eigenvector is kept and `s = k` spans the cluster indicators.
pub fn baseline(x: &Tensor, sigma: f64, k: usize, s: usize) -> Result<Baseline> {
    let kernel = rbf_kernel(x, sigma)?;
    let deg = degrees(&kernel)?;
    let embedding = solve_ksc_with_degrees(&kernel.values, &deg, s)?;
    let scores = dual_scores(&embedding, &deg)?;
    let labels = spherical_kmeans(&embedding.vectors, k)?;
    Ok(Baseline {
        embedding,
        degrees: deg,
        scores,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn block_kernel() -> KernelMatrix {
        let mut k = Tensor::zeros(&[4, 4]);
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1), (2, 2), (2, 3), (3, 2), (3, 3)] {
            k.set2(i, j, 1.0);
        }
        KernelMatrix {
            values: k,
            kind: KernelKind::Linear,
        }
    }

    #[test]
    fn rbf_diagonal_duplicates_and_e_inverse() {
        let sigma = 0.7;
        // ‖x0 − x2‖² = 2σ²
        let x = Tensor::from_rows(&[&[0.0, 0.0], &[0.0, 0.0], &[sigma, sigma]]).unwrap();
        let k = rbf_kernel(&x, sigma).unwrap().values;
        for i in 0..3 {
            assert_eq!(k.get2(i, i), 1.0);
        }
        assert_eq!(k.get2(0, 1), 1.0);
        assert!((k.get2(0, 2) - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert!(rbf_kernel(&x, 0.0).is_err());
    }

    #[test]
    fn degree_examples() {
        let one = KernelMatrix {
            values: Tensor::from_rows(&[&[1.0]]).unwrap(),
            kind: KernelKind::Linear,
        };
        assert_eq!(degrees(&one).unwrap().values(), &[1.0]);
        assert_eq!(degrees(&block_kernel()).unwrap().values(), &[2.0; 4]);
        let eye = KernelMatrix {
            values: Tensor::identity(4),
            kind: KernelKind::Linear,
        };
        assert_eq!(degrees(&eye).unwrap().values(), &[1.0; 4]);
    }

    #[test]
    fn zero_degree_rejected() {
        let k = KernelMatrix {
            values: Tensor::from_rows(&[&[1.0, -1.0], &[-1.0, 1.0]]).unwrap(),
            kind: KernelKind::Linear,
        };
        assert!(matches!(degrees(&k), Err(Error::DegenerateDegree { index: 0, .. })));
    }

    #[test]
    fn block_kernel_indicator_space() {
        let k = block_kernel();
        let deg = degrees(&k).unwrap();
        let emb = solve_ksc(&k, 2).unwrap();
        for &l in emb.values.data() {
            assert!((l - 1.0).abs() < 1e-12);
        }
        // Each eigenvector is constant on each block.
        for j in 0..2 {
            let h = emb.vectors.column(j);
            assert!((h[0] - h[1]).abs() < 1e-12 && (h[2] - h[3]).abs() < 1e-12);
        }
        assert!(ksc_residual(&k.values, &deg, &emb).unwrap() <= 1e-8);
    }

    #[test]
    fn identity_kernel_has_unit_spectrum() {
        let k = KernelMatrix {
            values: Tensor::identity(5),
            kind: KernelKind::Linear,
        };
        let emb = solve_ksc(&k, 3).unwrap();
        assert!(emb.values.data().iter().all(|&l| (l - 1.0).abs() < 1e-14));
    }

    #[test]
    fn two_rbf_blobs_form_two_rays() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for c in 0..2 {
            for _ in 0..30 {
                let cx = if c == 0 { -3.0 } else { 3.0 };
                rows.push(cx + rng.random::<f64>() - 0.5);
                rows.push(rng.random::<f64>() - 0.5);
                truth.push(c);
            }
        }
        let x = Tensor::matrix(60, 2, rows).unwrap();
        let kernel = rbf_kernel(&x, 1.0).unwrap();
        let deg = degrees(&kernel).unwrap();
        let emb = solve_ksc(&kernel, 2).unwrap();
        assert!(ksc_residual(&kernel.values, &deg, &emb).unwrap() <= 1e-8);
        for c in 0..2 {
            let members: Vec<usize> = (0..60).filter(|&i| truth[i] == c).collect();
            let mut mean = [0.0; 2];
            for &i in &members {
                let r = emb.vectors.row(i);
                let n = libm::sqrt(linalg::dot(r, r));
                mean[0] += r[0] / n;
                mean[1] += r[1] / n;
            }
            for &i in &members {
                let r = emb.vectors.row(i);
                let cos = 1.0 - crate::geometry::cosine_distance(r, &mean);
                assert!(cos >= 0.99, "cluster {c}, sample {i}: {cos}");
            }
        }
        let fit = baseline(&x, 1.0, 2, 2).unwrap();
        assert_eq!(crate::metrics::adjusted_rand_index(&truth, &fit.labels).unwrap(), 1.0);
    }

    #[test]
    fn dual_score_arithmetic() {
        let emb = SpectralEmbedding {
            vectors: Tensor::from_rows(&[&[1.0, 0.0]]).unwrap(),
            values: Tensor::vector(vec![0.5, 0.2]),
        };
        let deg = DegreeVector(Tensor::vector(vec![2.0]));
        assert_eq!(dual_scores(&emb, &deg).unwrap().data(), &[1.0, 0.0]);

        let emb = SpectralEmbedding {
            vectors: Tensor::from_rows(&[&[0.3, -0.1], &[0.2, 0.4]]).unwrap(),
            values: Tensor::vector(vec![1.0, 1.0]),
        };
        let deg = DegreeVector(Tensor::vector(vec![1.0, 1.0]));
        assert_eq!(dual_scores(&emb, &deg).unwrap(), emb.vectors);
    }

    #[test]
    fn sign_flip_flips_score_column() {
        let emb = SpectralEmbedding {
            vectors: Tensor::from_rows(&[&[0.3, -0.1], &[0.2, 0.4]]).unwrap(),
            values: Tensor::vector(vec![0.9, 0.4]),
        };
        let deg = DegreeVector(Tensor::vector(vec![1.5, 2.5]));
        let mut flipped = emb.clone();
        for i in 0..2 {
            let v = flipped.vectors.get2(i, 1);
            flipped.vectors.set2(i, 1, -v);
        }
        let (a, b) = (dual_scores(&emb, &deg).unwrap(), dual_scores(&flipped, &deg).unwrap());
        for i in 0..2 {
            assert_eq!(a.get2(i, 0), b.get2(i, 0));
            assert_eq!(a.get2(i, 1), -b.get2(i, 1));
        }
    }

    #[test]
    fn psd_spectrum_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Tensor::matrix(30, 3, (0..90).map(|_| rng.random::<f64>() * 4.0).collect()).unwrap();
        let emb = solve_ksc(&rbf_kernel(&x, 1.3).unwrap(), 10).unwrap();
        for &l in emb.values.data() {
            assert!((-1e-10..=1.0 + 1e-8).contains(&l), "{l}");
        }
    }

    #[test]
    fn centering_zeroes_weighted_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let phi = Tensor::matrix(12, 4, (0..48).map(|_| rng.random::<f64>() + 0.1).collect()).unwrap();
        let deg = degrees(&linear_kernel(&phi).unwrap()).unwrap();
        let centered = center_features(&phi, &deg).unwrap();
        assert!(weighted_center(&centered, &deg).unwrap().norm() <= 1e-12);
    }
}
