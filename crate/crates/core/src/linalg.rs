//! Dense linear algebra kernels: matrix products, the cyclic Jacobi
//! symmetric eigensolver, Gram-Schmidt orthonormalization and LU solves.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::shape_err;
use crate::{Error, Result, Tensor};

const MAX_SWEEPS: usize = 100;
/// Matrices above this order go through subspace iteration in [`eigh_top`].
const DENSE_EIGH_LIMIT: usize = 256;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let k = 4 * i;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out += a · b` with `a: m×k`, `b: k×n`.
pub fn gemm_nn(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip != 0.0 {
                axpy(aip, &b[p * n..(p + 1) * n], row);
            }
        }
    }
}

/// `out += a · bᵀ` with `a: m×k`, `b: n×k`.
pub fn gemm_nt(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let ar = &a[i * k..(i + 1) * k];
        for j in 0..n {
            out[i * n + j] += dot(ar, &b[j * k..(j + 1) * k]);
        }
    }
}

/// `out += aᵀ · b` with `a: k×m`, `b: k×n`.
pub fn gemm_tn(a: &[f64], b: &[f64], out: &mut [f64], k: usize, m: usize, n: usize) {
    for p in 0..k {
        let br = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let api = a[p * m + i];
            if api != 0.0 {
                axpy(api, br, &mut out[i * n..(i + 1) * n]);
            }
        }
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching orthonormal
/// eigenvectors as the columns of an `n×n` matrix.
pub fn eigh_sym(a: &Tensor) -> Result<(Tensor, Tensor)> {
    let (n, c) = a.dims2()?;
    if n != c {
        return Err(shape_err!("eigh_sym needs a square matrix, got {:?}", a.shape()));
    }
    a.ensure_finite("eigh_sym input")?;
    let scale = a.max_abs().max(1.0);
    let mut asym: f64 = 0.0;
    for i in 0..n {
        for j in 0..i {
            asym = asym.max((a.get2(i, j) - a.get2(j, i)).abs());
        }
    }
    if asym > 1e-10 * scale {
        return Err(Error::NotSymmetric(asym));
    }

    let mut m: Vec<f64> = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = 0.5 * (a.get2(i, j) + a.get2(j, i));
        }
    }
    let mut v = Tensor::identity(n).into_data();
    let frob = libm::sqrt(dot(&m, &m));

    let mut converged = n < 2 || frob == 0.0;
    let mut sweep = 0;
    while !converged {
        if sweep == MAX_SWEEPS {
            return Err(Error::NoConvergence(MAX_SWEEPS));
        }
        sweep += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let cs = 1.0 / libm::sqrt(t * t + 1.0);
                let sn = t * cs;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = cs * mkp - sn * mkq;
                    m[k * n + q] = sn * mkp + cs * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = cs * mpk - sn * mqk;
                    m[q * n + k] = sn * mpk + cs * mqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = cs * vkp - sn * vkq;
                    v[k * n + q] = sn * vkp + cs * vkq;
                }
            }
        }
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += m[i * n + j] * m[i * n + j];
                }
            }
        }
        converged = libm::sqrt(off) <= 1e-15 * frob;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]).then(i.cmp(&j)));
    let values: Vec<f64> = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[k * n + dst] = v[k * n + src];
        }
    }
    Ok((Tensor::vector(values), Tensor::matrix(n, n, vectors)?))
}

/// Largest `count` eigenpairs of a symmetric positive semidefinite matrix.
///
/// Small matrices are diagonalized exactly. Larger ones use block subspace
/// iteration with Rayleigh-Ritz extraction, which assumes the wanted
/// eigenvalues are also the largest in magnitude.
pub fn eigh_top(a: &Tensor, count: usize) -> Result<(Tensor, Tensor)> {
    let (n, _) = a.dims2()?;
    if count > n {
        return Err(shape_err!("asked for {} eigenpairs of a {}×{} matrix", count, n, n));
    }
    if n <= DENSE_EIGH_LIMIT {
        let (vals, vecs) = eigh_sym(a)?;
        let top = Tensor::vector(vals.data()[..count].to_vec());
        return Ok((top, vecs.slice_cols(0, count)?));
    }
    subspace_iteration(a, count)
}

fn subspace_iteration(a: &Tensor, count: usize) -> Result<(Tensor, Tensor)> {
    const MAX_ITERS: usize = 2000;
    let (n, _) = a.dims2()?;
    let block = (count + 8).min(n);
    let frob = a.norm();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let start: Vec<f64> = (0..n * block).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut q = orthonormalize(&Tensor::matrix(n, block, start)?)?;
    for iter in 1..=MAX_ITERS {
        q = orthonormalize(&a.matmul(&q)?)?;
        if iter % 5 != 0 {
            continue;
        }
        let aq = a.matmul(&q)?;
        let projected = q.matmul_tn(&aq)?;
        let projected = projected.add(&projected.transpose()?)?.scale(0.5);
        let (theta, y) = eigh_sym(&projected)?;
        let ritz = q.matmul(&y.slice_cols(0, count)?)?;
        let a_ritz = aq.matmul(&y.slice_cols(0, count)?)?;
        let worst = (0..count)
            .map(|j| {
                let mut r = 0.0;
                for i in 0..n {
                    let d = a_ritz.get2(i, j) - theta.data()[j] * ritz.get2(i, j);
                    r += d * d;
                }
                libm::sqrt(r)
            })
            .fold(0.0, f64::max);
        if worst <= 1e-11 * frob.max(1.0) {
            return Ok((Tensor::vector(theta.data()[..count].to_vec()), ritz));
        }
    }
    Err(Error::NoConvergence(MAX_ITERS))
}

/// Orthonormalizes the columns of an `m×s` matrix with two passes of
/// modified Gram-Schmidt. Column `j` of the result spans the same space as the
/// first `j+1` input columns.
pub fn orthonormalize(a: &Tensor) -> Result<Tensor> {
    let (m, s) = a.dims2()?;
    if s > m {
        return Err(shape_err!("cannot orthonormalize {} columns in dimension {}", s, m));
    }
    a.ensure_finite("orthonormalize input")?;
    let mut cols: Vec<Vec<f64>> = (0..s).map(|j| a.column(j)).collect();
    for j in 0..s {
        let original = libm::sqrt(dot(&cols[j], &cols[j]));
        for _pass in 0..2 {
            for i in 0..j {
                let (done, rest) = cols.split_at_mut(j);
                let r = dot(&done[i], &rest[0]);
                axpy(-r, &done[i], &mut rest[0]);
            }
        }
        let norm = libm::sqrt(dot(&cols[j], &cols[j]));
        if original == 0.0 || norm <= 1e-10 * original {
            return Err(Error::RankDeficient(j));
        }
        for x in cols[j].iter_mut() {
            *x /= norm;
        }
    }
    let mut out = vec![0.0; m * s];
    for (j, col) in cols.iter().enumerate() {
        for i in 0..m {
            out[i * s + j] = col[i];
        }
    }
    Tensor::matrix(m, s, out)
}

/// `‖AᵀA − I‖_F`, the distance of a frame from orthonormality.
pub fn orthonormality_error(a: &Tensor) -> Result<f64> {
    let gram = a.matmul_tn(a)?;
    let s = gram.rows();
    Ok(gram.sub(&Tensor::identity(s))?.norm())
}

/// LU factorization with partial pivoting of a square matrix.
#[derive(Clone, Debug)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    pivots: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &Tensor) -> Result<Self> {
        let (n, c) = a.dims2()?;
        if n != c {
            return Err(shape_err!("LU needs a square matrix, got {:?}", a.shape()));
        }
        let mut lu = a.data().to_vec();
        let mut pivots: Vec<usize> = (0..n).collect();
        let scale = a.max_abs();
        if scale == 0.0 && n > 0 {
            return Err(Error::Singular);
        }
        for k in 0..n {
            let (mut best, mut best_val) = (k, lu[k * n + k].abs());
            for i in k + 1..n {
                let v = lu[i * n + k].abs();
                if v > best_val {
                    best = i;
                    best_val = v;
                }
            }
            if best_val <= 1e-14 * scale {
                return Err(Error::Singular);
            }
            if best != k {
                for j in 0..n {
                    lu.swap(k * n + j, best * n + j);
                }
                pivots.swap(k, best);
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= f * lu[k * n + j];
                    }
                }
            }
        }
        Ok(Self { n, lu, pivots })
    }

    /// Solves `A X = B` for an `n×m` right-hand side.
    pub fn solve(&self, b: &Tensor) -> Result<Tensor> {
        let n = self.n;
        let (rows, m) = b.dims2()?;
        if rows != n {
            return Err(shape_err!("right-hand side has {} rows, system has {}", rows, n));
        }
        let mut x = vec![0.0; n * m];
        for (i, &p) in self.pivots.iter().enumerate() {
            x[i * m..(i + 1) * m].copy_from_slice(b.row(p));
        }
        for i in 0..n {
            for k in 0..i {
                let f = self.lu[i * n + k];
                if f != 0.0 {
                    let (head, tail) = x.split_at_mut(i * m);
                    axpy(-f, &head[k * m..(k + 1) * m], &mut tail[..m]);
                }
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let f = self.lu[i * n + k];
                if f != 0.0 {
                    let (head, tail) = x.split_at_mut(k * m);
                    axpy(-f, &tail[..m], &mut head[i * m..(i + 1) * m]);
                }
            }
            let d = self.lu[i * n + i];
            for v in &mut x[i * m..(i + 1) * m] {
                *v /= d;
            }
        }
        Tensor::matrix(n, m, x)
    }
}

pub fn solve(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    Lu::factor(a)?.solve(b)
}

pub fn inverse(a: &Tensor) -> Result<Tensor> {
    let n = a.rows();
    solve(a, &Tensor::identity(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::matrix(r, c, (0..r * c).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).unwrap()
    }

    fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
        let b = random_matrix(rng, n, n);
        b.add(&b.transpose().unwrap()).unwrap()
    }

    fn max_residual(a: &Tensor, vals: &Tensor, vecs: &Tensor) -> f64 {
        let av = a.matmul(vecs).unwrap();
        let n = a.rows();
        let mut worst: f64 = 0.0;
        for j in 0..vals.len() {
            let mut r = 0.0;
            for i in 0..n {
                let d = av.get2(i, j) - vals.data()[j] * vecs.get2(i, j);
                r += d * d;
            }
            worst = worst.max(r.sqrt());
        }
        worst
    }

    #[test]
    fn identity_spectrum() {
        let (vals, vecs) = eigh_sym(&Tensor::identity(3)).unwrap();
        assert_eq!(vals.data(), &[1.0, 1.0, 1.0]);
        assert!(orthonormality_error(&vecs).unwrap() < 1e-14);
    }

    #[test]
    fn two_by_two_from_characteristic_polynomial() {
        // λ² − 4λ + 3 = 0 → λ ∈ {3, 1}
        let a = Tensor::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]).unwrap();
        let (vals, vecs) = eigh_sym(&a).unwrap();
        assert!((vals.data()[0] - 3.0).abs() < 1e-14);
        assert!((vals.data()[1] - 1.0).abs() < 1e-14);
        let h = core::f64::consts::FRAC_1_SQRT_2;
        assert!((vecs.get2(0, 0).abs() - h).abs() < 1e-12);
        assert!((vecs.get2(0, 0) - vecs.get2(1, 0)).abs() < 1e-12);
        assert!((vecs.get2(0, 1) + vecs.get2(1, 1)).abs() < 1e-12);
    }

    #[test]
    fn random_six_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_symmetric(&mut rng, 6);
        let (vals, vecs) = eigh_sym(&a).unwrap();
        let mut scaled = vecs.clone();
        for i in 0..6 {
            for j in 0..6 {
                scaled.set2(i, j, vecs.get2(i, j) * vals.data()[j]);
            }
        }
        let rebuilt = scaled.matmul_nt(&vecs).unwrap();
        assert!(rebuilt.sub(&a).unwrap().norm() <= 1e-8);
        assert!(vals.data().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn eigen_residuals_up_to_64() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        for n in [1, 2, 5, 17, 33, 64] {
            let a = random_symmetric(&mut rng, n);
            let (vals, vecs) = eigh_sym(&a).unwrap();
            assert!(max_residual(&a, &vals, &vecs) <= 1e-8 * a.norm(), "n = {n}");
            assert!(orthonormality_error(&vecs).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn rejects_asymmetric() {
        let a = Tensor::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]).unwrap();
        assert!(matches!(eigh_sym(&a), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn subspace_iteration_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(300);
        let n = 300;
        let b = random_matrix(&mut rng, n, 12);
        // PSD with a clear top-4 gap.
        let mut a = b.matmul_nt(&b).unwrap();
        for i in 0..4 {
            let v = a.get2(i, i);
            a.set2(i, i, v + 200.0 * (4 - i) as f64);
        }
        let (vals, vecs) = eigh_top(&a, 4).unwrap();
        let (dense, _) = eigh_sym(&a).unwrap();
        for j in 0..4 {
            assert!((vals.data()[j] - dense.data()[j]).abs() <= 1e-8 * dense.data()[0]);
        }
        assert!(max_residual(&a, &vals, &vecs) <= 1e-8 * a.norm());
    }

    #[test]
    fn orthonormalize_scaled_axes() {
        let a = Tensor::from_rows(&[&[2.0, 0.0], &[0.0, 3.0], &[0.0, 0.0]]).unwrap();
        let q = orthonormalize(&a).unwrap();
        assert_eq!(q.data(), &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn orthonormalize_random_8x3() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        let q = orthonormalize(&random_matrix(&mut rng, 8, 3)).unwrap();
        assert!(orthonormality_error(&q).unwrap() <= 1e-12);
    }

    #[test]
    fn orthonormalize_rank_deficient() {
        let a = Tensor::from_rows(&[&[1.0, 2.0], &[1.0, 2.0], &[0.0, 0.0]]).unwrap();
        assert_eq!(orthonormalize(&a), Err(Error::RankDeficient(1)));
    }

    #[test]
    fn lu_solves_and_detects_singularity() {
        let a = Tensor::from_rows(&[&[0.0, 2.0, 1.0], &[1.0, 1.0, 0.0], &[3.0, 0.0, 1.0]]).unwrap();
        let inv = inverse(&a).unwrap();
        assert!(a.matmul(&inv).unwrap().sub(&Tensor::identity(3)).unwrap().norm() < 1e-14);
        let singular = Tensor::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]).unwrap();
        assert_eq!(solve(&singular, &Tensor::identity(2)).unwrap_err(), Error::Singular);
    }

    proptest! {
        #[test]
        fn orthonormalize_is_idempotent(seed in 0u64..10_000, m in 3usize..12, s in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = orthonormalize(&random_matrix(&mut rng, m, s.min(m))).unwrap();
            let qq = orthonormalize(&q).unwrap();
            for j in 0..q.cols() {
                let a = q.column(j);
                let b = qq.column(j);
                let same = a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12);
                let flipped = a.iter().zip(&b).all(|(x, y)| (x + y).abs() < 1e-12);
                prop_assert!(same || flipped);
            }
        }
    }
}
