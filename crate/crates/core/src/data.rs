//! In-memory datasets: class filtering, seeded subsampling and synthetic
//! Gaussian blobs.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, shape_err};
use crate::{Error, Result, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// `[n, ..sample_shape]`; images are `[n, 1, h, w]` in `[0, 1]`.
    pub samples: Tensor,
    pub labels: Option<Vec<usize>>,
    /// Free-form description of where the data came from.
    pub provenance: String,
}

impl Dataset {
    pub fn new(samples: Tensor, labels: Option<Vec<usize>>, provenance: impl Into<String>) -> Result<Self> {
        if samples.ndim() < 2 {
            return Err(shape_err!("samples need a leading count and a sample shape, got {:?}", samples.shape()));
        }
        if let Some(l) = &labels {
            if l.len() != samples.rows() {
                return Err(Error::LengthMismatch(samples.rows(), l.len()));
            }
        }
        Ok(Self {
            samples,
            labels,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.samples.shape()[1..]
    }

    /// Samples at `indices`, as a batch.
    pub fn batch(&self, indices: &[usize]) -> Tensor {
        self.samples.gather_rows(indices)
    }

    fn select(&self, indices: &[usize], note: String) -> Self {
        Self {
            samples: self.samples.gather_rows(indices),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            provenance: format!("{}; {}", self.provenance, note),
        }
    }

    /// Keeps the samples whose label is in `keep`, in their original order.
    pub fn filter_classes(&self, keep: &[usize]) -> Result<Self> {
        let labels = self.labels.as_ref().ok_or_else(|| invalid!("class filter needs labels"))?;
        let keep: BTreeSet<usize> = keep.iter().copied().collect();
        let indices: Vec<usize> = (0..self.len()).filter(|&i| keep.contains(&labels[i])).collect();
        if indices.is_empty() {
            return Err(invalid!("class filter {:?} leaves no samples", keep));
        }
        Ok(self.select(&indices, format!("classes {:?}", keep)))
    }

    /// A seeded subset of `n` samples without replacement, in original order.
    pub fn subsample(&self, n: usize, seed: u64) -> Result<Self> {
        if n > self.len() {
            return Err(invalid!("cannot draw {} of {} samples", n, self.len()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut indices = rand::seq::index::sample(&mut rng, self.len(), n).into_vec();
        indices.sort_unstable();
        Ok(self.select(&indices, format!("subsample {} seed {}", n, seed)))
    }
}

/// `n_per` isotropic Gaussian samples around each row of `centers`
/// (`k × d`), grouped by class.
pub fn synth_gaussians(centers: &Tensor, n_per: usize, spread: f64, seed: u64) -> Result<Dataset> {
    let (k, d) = centers.dims2()?;
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(invalid!("spread must be positive and finite, got {}", spread));
    }
    let noise = Normal::new(0.0, spread).map_err(|_| invalid!("bad spread {}", spread))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(k * n_per * d);
    let mut labels = Vec::with_capacity(k * n_per);
    for c in 0..k {
        for _ in 0..n_per {
            data.extend(centers.row(c).iter().map(|&m| m + noise.sample(&mut rng)));
            labels.push(c);
        }
    }
    Dataset::new(
        Tensor::matrix(k * n_per, d, data)?,
        Some(labels),
        format!("gaussians k={} n_per={} spread={} seed={}", k, n_per, spread, seed),
    )
}

/// `k` centers evenly spaced on a circle of the given radius in the plane.
pub fn circle_centers(k: usize, radius: f64) -> Tensor {
    let mut t = Tensor::zeros(&[k, 2]);
    for c in 0..k {
        let a = 2.0 * core::f64::consts::PI * c as f64 / k as f64;
        t.set2(c, 0, radius * libm::cos(a));
        t.set2(c, 1, radius * libm::sin(a));
    }
    t
}
