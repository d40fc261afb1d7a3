//! Minibatch training, warm-up schedule and evaluation.
//!
//! Every random draw comes from a ChaCha8 generator seeded with
//! `config.seed`: stream 0 initializes the model and stream `e + 1` shuffles
//! epoch `e`. A [`TrainState`] therefore resumes exactly from its epoch
//! counter alone.

use alloc::boxed::Box;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::invalid;
use crate::geometry;
use crate::linalg::orthonormality_error;
use crate::metrics;
use crate::nn::{Architecture, DEFAULT_LEAKY_SLOPE};
use crate::objective::{self, LossGraph, LossWeights, Model};
use crate::optim::{AdamConfig, AdamState, StiefelConfig, StiefelState};
use crate::{Error, Result, Tensor};

/// Samples encoded per chunk when scoring a whole dataset.
const EVAL_CHUNK: usize = 512;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Latent (score) dimension.
    pub s: usize,
    /// Number of clusters.
    pub k: usize,
    pub eta_rec: f64,
    pub eta_cl: f64,
    /// Epochs at the start with the cluster term weighted by 0.
    pub warmup_epochs: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub arch: Architecture,
    /// Encoder output width `d_f`.
    pub feature_dim: usize,
    pub leaky_slope: f64,
    /// Ends the decoder in a sigmoid, for data in `[0, 1]`.
    pub bounded_output: bool,
    /// Rotates `U` within its span onto the ordered weighted principal
    /// axes when the cluster term switches on.
    pub align_at_warmup: bool,
    pub adam: AdamConfig,
    pub stiefel: StiefelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            s: 4,
            k: 3,
            eta_rec: 1.0,
            eta_cl: 1.0,
            warmup_epochs: 10,
            epochs: 200,
            batch_size: 64,
            seed: 0,
            arch: Architecture::Mlp { hidden: alloc::vec![32, 32] },
            feature_dim: 16,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            bounded_output: false,
            align_at_warmup: true,
            adam: AdamConfig::default(),
            stiefel: StiefelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 || self.s + 1 < self.k {
            return Err(invalid!("need k ≥ 2 and s ≥ k − 1, got s = {}, k = {}", self.s, self.k));
        }
        if self.feature_dim < self.s {
            return Err(invalid!("feature_dim {} is smaller than s = {}", self.feature_dim, self.s));
        }
        if self.batch_size < 2 {
            return Err(invalid!("batch_size must be at least 2, got {}", self.batch_size));
        }
        for (name, v) in [("eta_rec", self.eta_rec), ("eta_cl", self.eta_cl)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid!("{} must be finite and non-negative, got {}", name, v));
            }
        }
        for (name, v) in [("lr", self.adam.lr), ("stiefel_lr", self.stiefel.lr)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid!("{} must be positive, got {}", name, v));
            }
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            eta_rec: self.eta_rec,
            eta_cl: self.eta_cl,
        }
    }

    pub fn cluster_enabled(&self, epoch: usize) -> bool {
        epoch >= self.warmup_epochs
    }
}

/// Per-epoch means of the loss terms, per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub variance: f64,
    pub regularizer: f64,
    pub reconstruction: f64,
    pub cluster: f64,
    pub total: f64,
    pub cluster_weight: f64,
    pub batches: usize,
    /// Degrees floored during the epoch.
    pub clamped: usize,
    /// `‖UᵀU − I‖_F` at the end of the epoch.
    pub orthonormality: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub n: usize,
    pub ari: Option<f64>,
    pub nmi: Option<f64>,
    pub ams: f64,
    /// Mean cosine distance of each sample's score to its assigned code.
    pub mean_cosine_distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub metrics: Option<Metrics>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.total)
    }

    pub fn clamped(&self) -> usize {
        self.epochs.iter().map(|e| e.clamped).sum()
    }
}

/// Everything needed to continue training bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub config: TrainConfig,
    pub model: Model,
    pub encoder_opt: Vec<AdamState>,
    pub decoder_opt: Vec<AdamState>,
    pub projection_opt: StiefelState,
    /// Number of completed epochs.
    pub epoch: usize,
    pub records: Vec<EpochRecord>,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl TrainState {
    pub fn new(config: TrainConfig, sample_shape: &[usize]) -> Result<Self> {
        config.validate()?;
        let (encoder, decoder) = config.arch.build(sample_shape, config.feature_dim, config.leaky_slope, config.bounded_output)?;
        let mut rng = rng_for(config.seed, 0);
        let model = Model::init(encoder, decoder, config.s, config.k, &mut rng)?;
        let adam = |params: &[Tensor]| params.iter().map(|p| AdamState::new(p.shape(), config.adam)).collect();
        let encoder_opt = adam(&model.encoder_params);
        let decoder_opt = adam(&model.decoder_params);
        let projection_opt = StiefelState::new(model.projection.shape(), config.stiefel);
        Ok(Self {
            config,
            model,
            encoder_opt,
            decoder_opt,
            projection_opt,
            epoch: 0,
            records: Vec::new(),
        })
    }

    /// Batches of one epoch: a seeded permutation cut into `batch_size`
    /// pieces, dropping a final piece smaller than 2.
    pub fn epoch_batches(&self, n: usize, epoch: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_for(self.config.seed, epoch as u64 + 1));
        order
            .chunks(self.config.batch_size)
            .filter(|c| c.len() >= 2)
            .map(<[usize]>::to_vec)
            .collect()
    }

    /// One optimizer step on one batch.
    pub fn step(&mut self, x: &Tensor, cluster_enabled: bool) -> Result<objective::LossTerms> {
        let lg = LossGraph::build(&self.model, x, self.config.weights(), cluster_enabled)?;
        let grads = lg.gradients(&self.model)?;
        for ((p, g), opt) in self.model.encoder_params.iter_mut().zip(&grads.encoder).zip(&mut self.encoder_opt) {
            opt.step(p, g)?;
        }
        for ((p, g), opt) in self.model.decoder_params.iter_mut().zip(&grads.decoder).zip(&mut self.decoder_opt) {
            opt.step(p, g)?;
        }
        self.projection_opt.step(&mut self.model.projection, &grads.projection)?;
        Ok(lg.terms)
    }

    pub fn run_epoch(&mut self, data: &Dataset) -> Result<&EpochRecord> {
        check_data(data, self.model.input_shape())?;
        let epoch = self.epoch;
        let enabled = self.config.cluster_enabled(epoch);
        if self.config.align_at_warmup && epoch > 0 && epoch == self.config.warmup_epochs {
            self.align_projection(data)?;
        }
        let batches = self.epoch_batches(data.len(), epoch);
        if batches.is_empty() {
            return Err(invalid!("dataset of {} samples yields no batch of at least 2", data.len()));
        }
        let mut sums = [0.0; 5];
        let mut seen = 0usize;
        let mut clamped = 0;
        let mut cluster_weight = 0.0;
        for (b, idx) in batches.iter().enumerate() {
            let x = data.batch(idx);
            let terms = self.step(&x, enabled).map_err(|source| Error::Diverged {
                epoch,
                batch: b,
                source: Box::new(source),
            })?;
            for (s, v) in sums.iter_mut().zip([terms.variance, terms.regularizer, terms.reconstruction, terms.cluster, terms.total]) {
                *s += v;
            }
            seen += idx.len();
            clamped += terms.clamped;
            cluster_weight = terms.cluster_weight;
        }
        let mean = |v: f64| v / seen as f64;
        let record = EpochRecord {
            epoch,
            variance: mean(sums[0]),
            regularizer: mean(sums[1]),
            reconstruction: mean(sums[2]),
            cluster: mean(sums[3]),
            total: mean(sums[4]),
            cluster_weight,
            batches: batches.len(),
            clamped,
            orthonormality: orthonormality_error(&self.model.projection)?,
        };
        log::info!(
            "epoch {} total {:.6} var {:.6} reg {:.6} rec {:.6} cl {:.6}",
            epoch,
            record.total,
            record.variance,
            record.regularizer,
            record.reconstruction,
            record.cluster
        );
        self.records.push(record);
        self.epoch += 1;
        Ok(self.records.last().expect("just pushed"))
    }

    /// Replaces `U` by `UR`, where the columns of `R` are the eigenvectors
    /// of the weighted score covariance `Σ d_i⁻¹ e_i e_iᵀ` over `data`, in
    /// descending order. The span of `U`, and with it the reconstruction and
    /// variance terms, is unchanged; the first `k − 1` scores become the
    /// leading weighted principal components. The Stiefel momentum is
    /// rotated along.
    pub fn align_projection(&mut self, data: &Dataset) -> Result<()> {
        check_data(data, self.model.input_shape())?;
        let features = dataset_features(&self.model, &data.samples)?;
        let total = Tensor::vector(column_sums(&features));
        let d: Vec<f64> = (0..features.rows())
            .map(|i| crate::linalg::dot(features.row(i), total.data()).max(objective::DEGREE_FLOOR))
            .collect();
        let centered = crate::ksc::center_features(&features, &crate::ksc::DegreeVector(Tensor::vector(d.clone())))?;
        let e = centered.matmul(&self.model.projection)?;
        let mut weighted = e.clone();
        for (i, row) in weighted.data_mut().chunks_mut(e.cols()).enumerate() {
            for v in row {
                *v /= d[i];
            }
        }
        let cov = e.matmul_tn(&weighted)?;
        let cov = cov.add(&cov.transpose()?)?.scale(0.5);
        let (_, r) = crate::linalg::eigh_sym(&cov)?;
        self.model.projection = self.model.projection.matmul(&r)?;
        self.projection_opt.momentum = self.projection_opt.momentum.matmul(&r)?;
        Ok(())
    }

    /// Stores the dataset feature center and traversal anchors in the model
    /// and evaluates it.
    pub fn finish(&mut self, data: &Dataset) -> Result<TrainReport> {
        let metrics = if data.is_empty() {
            None
        } else {
            let features = dataset_features(&self.model, &data.samples)?;
            self.model.center = objective::dataset_center(&features)?;
            let scores = centered_scores(&self.model, features)?;
            self.model.anchors = objective::anchor_radii(&scores, &self.model.codes)?;
            Some(metrics_from_scores(&self.model, &scores, data.labels.as_deref())?)
        };
        Ok(TrainReport {
            epochs: self.records.clone(),
            metrics,
        })
    }
}

fn check_data(data: &Dataset, shape: &[usize]) -> Result<()> {
    if data.sample_shape() != shape {
        return Err(invalid!("samples of shape {:?} but the model expects {:?}", data.sample_shape(), shape));
    }
    Ok(())
}

fn dataset_features(model: &Model, samples: &Tensor) -> Result<Tensor> {
    let n = samples.rows();
    let d_f = model.feature_dim();
    let mut out = Vec::with_capacity(n * d_f);
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        out.extend_from_slice(model.features(&samples.gather_rows(chunk))?.data());
    }
    Tensor::matrix(n, d_f, out)
}

fn column_sums(m: &Tensor) -> Vec<f64> {
    let mut out = alloc::vec![0.0; m.cols()];
    for row in m.data().chunks(m.cols()) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

fn centered_scores(model: &Model, mut features: Tensor) -> Result<Tensor> {
    let f = model.feature_dim();
    for row in features.data_mut().chunks_mut(f) {
        for (v, c) in row.iter_mut().zip(model.center.data()) {
            *v -= c;
        }
    }
    features.matmul(&model.projection)
}

/// Scores of a whole dataset under the stored feature center.
pub fn dataset_scores(model: &Model, data: &Dataset) -> Result<Tensor> {
    check_data(data, model.input_shape())?;
    centered_scores(model, dataset_features(model, &data.samples)?)
}

fn metrics_from_scores(model: &Model, scores: &Tensor, labels: Option<&[usize]>) -> Result<Metrics> {
    let assignment = geometry::assign(scores, &model.codes)?;
    let (ari, nmi) = match labels {
        Some(l) => (
            Some(metrics::adjusted_rand_index(l, &assignment.labels)?),
            Some(metrics::normalized_mutual_information(l, &assignment.labels)?),
        ),
        None => (None, None),
    };
    Ok(Metrics {
        n: scores.rows(),
        ari,
        nmi,
        ams: metrics::average_membership_strength(scores, &model.codes)?,
        mean_cosine_distance: assignment.mean_distance(),
    })
}

/// Metrics of a frozen model on `data`. ARI and NMI need labels.
pub fn evaluate(model: &Model, data: &Dataset) -> Result<Metrics> {
    let scores = dataset_scores(model, data)?;
    metrics_from_scores(model, &scores, data.labels.as_deref())
}

/// Runs `config.epochs` epochs from a fresh seeded state.
pub fn train(config: TrainConfig, data: &Dataset) -> Result<(Model, TrainReport)> {
    if data.is_empty() {
        return Err(invalid!("cannot train on an empty dataset"));
    }
    let mut state = TrainState::new(config, data.sample_shape())?;
    while state.epoch < state.config.epochs {
        state.run_epoch(data)?;
    }
    let report = state.finish(data)?;
    Ok((state.model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{circle_centers, synth_gaussians};
    use alloc::vec;

    fn toy(n_per: usize) -> Dataset {
        synth_gaussians(&circle_centers(3, 3.0), n_per, 0.3, 7).unwrap()
    }

    fn small_config(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            warmup_epochs: 2,
            batch_size: 16,
            arch: Architecture::Mlp { hidden: vec![8] },
            feature_dim: 6,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let data = toy(10);
        let (model, report) = train(small_config(0), &data).unwrap();
        assert!(report.epochs.is_empty());
        let fresh = TrainState::new(small_config(0), &[2]).unwrap().model;
        assert_eq!(model.encoder_params, fresh.encoder_params);
        assert_eq!(model.projection, fresh.projection);
    }

    #[test]
    fn warmup_masks_cluster_weight() {
        let data = toy(10);
        let cfg = TrainConfig { warmup_epochs: 3, ..small_config(3) };
        let (_, report) = train(cfg, &data).unwrap();
        assert_eq!(report.epochs.len(), 3);
        assert!(report.epochs.iter().all(|e| e.cluster_weight == 0.0));
        let cfg = small_config(4);
        let (_, report) = train(cfg, &data).unwrap();
        let weights: Vec<f64> = report.epochs.iter().map(|e| e.cluster_weight).collect();
        assert_eq!(weights, vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn reproducible_and_orthonormal() {
        let data = toy(12);
        let (m1, r1) = train(small_config(3), &data).unwrap();
        let (m2, r2) = train(small_config(3), &data).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(m1, m2);
        assert!(r1.epochs.iter().all(|e| e.orthonormality <= 1e-6));
    }

    #[test]
    fn resume_matches_uninterrupted() {
        let data = toy(12);
        let mut a = TrainState::new(small_config(4), &[2]).unwrap();
        for _ in 0..4 {
            a.run_epoch(&data).unwrap();
        }
        let mut b = TrainState::new(small_config(4), &[2]).unwrap();
        b.run_epoch(&data).unwrap();
        b.run_epoch(&data).unwrap();
        let mut resumed = b.clone();
        resumed.run_epoch(&data).unwrap();
        resumed.run_epoch(&data).unwrap();
        assert_eq!(a, resumed);
    }

    #[test]
    fn alignment_keeps_span_and_orders_components() {
        let data = toy(12);
        let mut st = TrainState::new(small_config(2), &[2]).unwrap();
        st.run_epoch(&data).unwrap();
        let before = st.model.projection.clone();
        st.align_projection(&data).unwrap();
        let u = &st.model.projection;
        let p0 = before.matmul_nt(&before).unwrap();
        let p1 = u.matmul_nt(u).unwrap();
        assert!(p0.sub(&p1).unwrap().max_abs() < 1e-12);
        assert!(orthonormality_error(u).unwrap() < 1e-12);

        // Oracle: weighted score covariance is diagonal and descending.
        let f = dataset_features(&st.model, &data.samples).unwrap();
        let total = column_sums(&f);
        let d: Vec<f64> = (0..f.rows()).map(|i| crate::linalg::dot(f.row(i), &total)).collect();
        let wsum: f64 = d.iter().map(|x| 1.0 / x).sum();
        let mut mean = vec![0.0; f.cols()];
        for i in 0..f.rows() {
            for (m, x) in mean.iter_mut().zip(f.row(i)) {
                *m += x / d[i] / wsum;
            }
        }
        let s = u.cols();
        let mut cov = vec![0.0; s * s];
        for i in 0..f.rows() {
            let c: Vec<f64> = f.row(i).iter().zip(&mean).map(|(x, m)| x - m).collect();
            let e = Tensor::matrix(1, c.len(), c).unwrap().matmul(u).unwrap();
            for a in 0..s {
                for b in 0..s {
                    cov[a * s + b] += e.data()[a] * e.data()[b] / d[i];
                }
            }
        }
        let scale = cov[0];
        for a in 0..s {
            for b in 0..s {
                if a != b {
                    assert!(cov[a * s + b].abs() < 1e-9 * scale);
                }
            }
            if a > 0 {
                assert!(cov[a * s + a] <= cov[(a - 1) * s + a - 1] * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn short_last_batch_is_dropped() {
        let st = TrainState::new(TrainConfig { batch_size: 4, ..small_config(1) }, &[2]).unwrap();
        let batches = st.epoch_batches(9, 0);
        assert_eq!(batches.len(), 2);
        let batches = st.epoch_batches(10, 0);
        assert_eq!(batches.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        assert_ne!(st.epoch_batches(10, 0), st.epoch_batches(10, 1));
    }

    #[test]
    fn evaluate_is_deterministic_and_label_optional() {
        let data = toy(10);
        let (model, _) = train(small_config(1), &data).unwrap();
        assert_eq!(evaluate(&model, &data).unwrap(), evaluate(&model, &data).unwrap());
        let unlabeled = Dataset { labels: None, ..data };
        let m = evaluate(&model, &unlabeled).unwrap();
        assert!(m.ari.is_none() && m.nmi.is_none());
        assert!((0.0..=1.0).contains(&m.ams));
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            TrainConfig { batch_size: 1, ..TrainConfig::default() },
            TrainConfig { s: 1, k: 3, ..TrainConfig::default() },
            TrainConfig { eta_cl: -1.0, ..TrainConfig::default() },
            TrainConfig { feature_dim: 2, ..TrainConfig::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}
