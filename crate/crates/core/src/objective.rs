//! The trainable model and its loss.
//!
//! Per batch, with encoder features `Φ` (`b × d_f`):
//!
//! * degrees `d = Φ Φᵀ 1` from the in-batch linear kernel, floored at
//!   [`DEGREE_FLOOR`];
//! * centered features `Φ_c = Φ − Σ d_i⁻¹ φ_i / Σ d_i⁻¹`;
//! * scores `E = Φ_c U`.
//!
//! The minimized objective is
//! `−½ Σ d_i⁻¹ ‖e_i‖² + Σ ‖φ_c,i‖² + η_rec Σ ‖x_i − ψ(U e_i)‖² + η_cl Σ min_c d^cos(e′_i, s_c)`
//! where `e′` holds the first `k − 1` score components.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Graph, NodeId};
use crate::error::{invalid, shape_err};
use crate::geometry::{self, ClusterCodes};
use crate::ksc::{self, DegreeVector};
use crate::nn::Network;
use crate::{linalg, Error, Result, Tensor};

/// Lower bound applied to learned degrees.
pub const DEGREE_FLOOR: f64 = 1e-6;

/// Encoder, decoder, projection `U` and cluster codes.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub encoder: Network,
    pub decoder: Network,
    pub encoder_params: Vec<Tensor>,
    pub decoder_params: Vec<Tensor>,
    /// `d_f × s` with orthonormal columns.
    pub projection: Tensor,
    pub codes: ClusterCodes,
    /// Degree-weighted feature mean used to encode samples outside a batch.
    pub center: Tensor,
    /// Per-cluster radius used as the base point of component traversals.
    pub anchors: Vec<f64>,
}

impl Model {
    /// Seeded initialization: fan-in uniform network weights and a
    /// Gaussian matrix orthonormalized into `U`.
    pub fn init<R: Rng>(encoder: Network, decoder: Network, s: usize, k: usize, rng: &mut R) -> Result<Self> {
        let d_f = encoder.output_len();
        check_dims(&encoder, &decoder, d_f, s, k)?;
        let encoder_params = encoder.init_params(rng);
        let decoder_params = decoder.init_params(rng);
        let raw: Vec<f64> = (0..d_f * s).map(|_| rng.sample(StandardNormal)).collect();
        let projection = linalg::orthonormalize(&Tensor::matrix(d_f, s, raw)?)?;
        Ok(Self {
            encoder,
            decoder,
            encoder_params,
            decoder_params,
            projection,
            codes: ClusterCodes::simplex(k)?,
            center: Tensor::zeros(&[d_f]),
            anchors: alloc::vec![1.0; k],
        })
    }

    /// Validates and assembles a model from stored parts.
    pub fn from_parts(
        encoder: Network,
        decoder: Network,
        encoder_params: Vec<Tensor>,
        decoder_params: Vec<Tensor>,
        projection: Tensor,
        codes: ClusterCodes,
        center: Tensor,
        anchors: Vec<f64>,
    ) -> Result<Self> {
        let (d_f, s) = projection.dims2()?;
        check_dims(&encoder, &decoder, d_f, s, codes.k())?;
        for (net, params) in [(&encoder, &encoder_params), (&decoder, &decoder_params)] {
            let shapes = net.param_shapes();
            if shapes.len() != params.len() || shapes.iter().zip(params).any(|(s, p)| s.as_slice() != p.shape()) {
                return Err(shape_err!("parameter tensors do not match the network layout"));
            }
        }
        if center.shape() != [d_f] || anchors.len() != codes.k() {
            return Err(shape_err!("center {:?} / {} anchors for d_f = {}, k = {}", center.shape(), anchors.len(), d_f, codes.k()));
        }
        Ok(Self {
            encoder,
            decoder,
            encoder_params,
            decoder_params,
            projection,
            codes,
            center,
            anchors,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.projection.rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.projection.cols()
    }

    pub fn k(&self) -> usize {
        self.codes.k()
    }

    pub fn input_shape(&self) -> &[usize] {
        self.encoder.input_shape()
    }

    /// Raw encoder features of a batch.
    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        let b = batch_len(self, x)?;
        self.encoder.infer(&self.encoder_params, x)?.into_reshape(&[b, self.feature_dim()])
    }

    /// Scores of samples centered with the stored center.
    pub fn scores(&self, x: &Tensor) -> Result<Tensor> {
        let mut phi = self.features(x)?;
        let f = self.feature_dim();
        for row in phi.data_mut().chunks_mut(f) {
            for (v, c) in row.iter_mut().zip(self.center.data()) {
                *v -= c;
            }
        }
        phi.matmul(&self.projection)
    }
}

fn check_dims(encoder: &Network, decoder: &Network, d_f: usize, s: usize, k: usize) -> Result<()> {
    if encoder.output_shape() != [d_f] {
        return Err(shape_err!("encoder output {:?} is not a feature vector of length {}", encoder.output_shape(), d_f));
    }
    if decoder.input_shape() != [d_f] || decoder.output_shape() != encoder.input_shape() {
        return Err(shape_err!("decoder {:?} → {:?} does not invert encoder {:?} → [{}]",
            decoder.input_shape(), decoder.output_shape(), encoder.input_shape(), d_f));
    }
    if k < 2 || s + 1 < k || s > d_f {
        return Err(invalid!("need 2 ≤ k ≤ s + 1 and s ≤ d_f, got k = {}, s = {}, d_f = {}", k, s, d_f));
    }
    Ok(())
}

fn batch_len(model: &Model, x: &Tensor) -> Result<usize> {
    let per = model.encoder.input_len();
    let b = x.shape().first().copied().unwrap_or(0);
    if b * per != x.len() || x.shape()[1..] != *model.input_shape() {
        return Err(shape_err!("batch {:?} does not hold samples of shape {:?}", x.shape(), model.input_shape()));
    }
    Ok(b)
}

/// Raw, centered and projected features of one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchFeatures {
    pub raw: Tensor,
    pub centered: Tensor,
    pub degrees: DegreeVector,
    pub scores: Tensor,
    /// Number of degrees that hit [`DEGREE_FLOOR`].
    pub clamped: usize,
}

/// Encodes a batch through the explicit kernel matrix, independently of the
/// differentiable path in [`LossGraph`].
pub fn encode_batch(model: &Model, x: &Tensor) -> Result<BatchFeatures> {
    let b = batch_len(model, x)?;
    if b < 2 {
        return Err(invalid!("a batch needs at least two samples, got {}", b));
    }
    let raw = model.features(x)?;
    let kernel = ksc::linear_kernel(&raw)?;
    let mut clamped = 0;
    let d: Vec<f64> = (0..b)
        .map(|i| {
            let v: f64 = kernel.values.row(i).iter().sum();
            if v < DEGREE_FLOOR {
                clamped += 1;
            }
            v.max(DEGREE_FLOOR)
        })
        .collect();
    let degrees = DegreeVector(Tensor::vector(d));
    let centered = ksc::center_features(&raw, &degrees)?;
    let scores = centered.matmul(&model.projection)?;
    Ok(BatchFeatures {
        raw,
        centered,
        degrees,
        scores,
        clamped,
    })
}

/// `½ Σ d_i⁻¹ ‖Uᵀ φ_c,i‖²`.
pub fn weighted_variance_term(batch: &BatchFeatures, u: &Tensor) -> Result<f64> {
    let e = batch.centered.matmul(u)?;
    Ok(0.5
        * batch
            .degrees
            .values()
            .iter()
            .enumerate()
            .map(|(i, d)| linalg::dot(e.row(i), e.row(i)) / d)
            .sum::<f64>())
}

/// `Σ ‖φ_c,i‖²`.
pub fn feature_regularizer(batch: &BatchFeatures) -> f64 {
    linalg::dot(batch.centered.data(), batch.centered.data())
}

/// `Σ ‖x_i − ψ(U Uᵀ φ_c,i)‖²`.
pub fn reconstruction_loss(model: &Model, x: &Tensor, batch: &BatchFeatures) -> Result<f64> {
    let projected = batch.scores.matmul_nt(&model.projection)?;
    let out = model.decoder.infer(&model.decoder_params, &projected)?;
    if out.len() != x.len() {
        return Err(shape_err!("reconstruction {:?} vs input {:?}", out.shape(), x.shape()));
    }
    Ok(out.data().iter().zip(x.data()).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Weights of the reconstruction and cluster terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub eta_rec: f64,
    pub eta_cl: f64,
}

/// Batch sums of the four terms and the weighted total.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossTerms {
    pub variance: f64,
    pub regularizer: f64,
    pub reconstruction: f64,
    pub cluster: f64,
    /// Weight the cluster term entered the total with.
    pub cluster_weight: f64,
    pub total: f64,
    pub clamped: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossGradients {
    pub encoder: Vec<Tensor>,
    pub decoder: Vec<Tensor>,
    pub projection: Tensor,
}

/// The recorded objective for one batch.
pub struct LossGraph {
    pub graph: Graph,
    pub encoder_params: Vec<NodeId>,
    pub decoder_params: Vec<NodeId>,
    pub projection: NodeId,
    pub scores: NodeId,
    pub total: NodeId,
    pub terms: LossTerms,
}

impl LossGraph {
    /// Records the objective. With `cluster_enabled` false the cluster term
    /// is still evaluated but enters the total with weight 0.
    pub fn build(model: &Model, x: &Tensor, weights: LossWeights, cluster_enabled: bool) -> Result<Self> {
        let b = batch_len(model, x)?;
        if b < 2 {
            return Err(invalid!("a batch needs at least two samples, got {}", b));
        }
        if !(weights.eta_rec >= 0.0 && weights.eta_cl >= 0.0) {
            return Err(invalid!("loss weights must be non-negative, got {:?}", weights));
        }
        let d_f = model.feature_dim();
        let k = model.k();
        let mut g = Graph::new();
        let enc: Vec<NodeId> = model.encoder_params.iter().map(|t| g.param(t.clone())).collect();
        let dec: Vec<NodeId> = model.decoder_params.iter().map(|t| g.param(t.clone())).collect();
        let u = g.param(model.projection.clone());
        let input = g.constant(x.clone());

        let phi = model.encoder.forward(&mut g, &enc, input)?;
        let phi = g.reshape(phi, &[b, d_f])?;

        let col = g.col_sums(phi)?;
        let col = g.reshape(col, &[d_f, 1])?;
        let deg = g.matmul(phi, col)?;
        let deg = g.reshape(deg, &[b])?;
        let clamped = g.value(deg).data().iter().filter(|&&d| d < DEGREE_FLOOR).count();
        if clamped > 0 {
            log::warn!("{} of {} batch degrees below {}, clamped", clamped, b, DEGREE_FLOOR);
        }
        let deg = g.clamp_min(deg, DEGREE_FLOOR);
        let w = g.reciprocal(deg);

        let w_row = g.reshape(w, &[1, b])?;
        let weighted = g.matmul(w_row, phi)?;
        let weighted = g.reshape(weighted, &[d_f])?;
        let w_total = g.sum(w);
        let center = g.div_scalar(weighted, w_total)?;
        let centered = g.sub_row(phi, center)?;
        let scores = g.matmul(centered, u)?;

        let norms = g.row_sq_norms(scores)?;
        let weighted_norms = g.mul(w, norms)?;
        let variance = g.sum(weighted_norms);
        let variance = g.scale(variance, 0.5);

        let regularizer = g.sum_sq(centered);

        let projected = g.matmul_nt(scores, u)?;
        let recon = model.decoder.forward(&mut g, &dec, projected)?;
        let residual = g.sub(recon, input)?;
        let reconstruction = g.sum_sq(residual);

        let head = g.slice_cols(scores, 0, k - 1)?;
        let distances = g.min_cosine_distance(head, model.codes.matrix())?;
        let cluster = g.sum(distances);

        let cluster_weight = if cluster_enabled { weights.eta_cl } else { 0.0 };
        let neg_var = g.scale(variance, -1.0);
        let total = g.add(neg_var, regularizer)?;
        let rec_w = g.scale(reconstruction, weights.eta_rec);
        let total = g.add(total, rec_w)?;
        let cl_w = g.scale(cluster, cluster_weight);
        let total = g.add(total, cl_w)?;

        let scalar = |g: &Graph, id: NodeId, name: &str| -> Result<f64> {
            let v = g.value(id).data()[0];
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFinite(format!("{} term is {}", name, v)))
            }
        };
        let terms = LossTerms {
            variance: scalar(&g, variance, "variance")?,
            regularizer: scalar(&g, regularizer, "regularizer")?,
            reconstruction: scalar(&g, reconstruction, "reconstruction")?,
            cluster: scalar(&g, cluster, "cluster")?,
            cluster_weight,
            total: scalar(&g, total, "total")?,
            clamped,
        };
        Ok(Self {
            graph: g,
            encoder_params: enc,
            decoder_params: dec,
            projection: u,
            scores,
            total,
            terms,
        })
    }

    pub fn gradients(&self, model: &Model) -> Result<LossGradients> {
        let mut grads = self.graph.backward(self.total)?;
        let mut take = |ids: &[NodeId], like: &[Tensor]| -> Vec<Tensor> {
            ids.iter().zip(like).map(|(&id, t)| grads.take_or_zeros(id, t)).collect()
        };
        let encoder = take(&self.encoder_params, &model.encoder_params);
        let decoder = take(&self.decoder_params, &model.decoder_params);
        let projection = grads.take_or_zeros(self.projection, &model.projection);
        Ok(LossGradients {
            encoder,
            decoder,
            projection,
        })
    }
}

/// Loss terms for one batch without gradients.
pub fn total_loss(model: &Model, x: &Tensor, weights: LossWeights, cluster_enabled: bool) -> Result<LossTerms> {
    Ok(LossGraph::build(model, x, weights, cluster_enabled)?.terms)
}

pub fn loss_and_gradients(model: &Model, x: &Tensor, weights: LossWeights, cluster_enabled: bool) -> Result<(LossTerms, LossGradients)> {
    let lg = LossGraph::build(model, x, weights, cluster_enabled)?;
    let grads = lg.gradients(model)?;
    Ok((lg.terms, grads))
}

/// `ψ(U e*)` for each row of `latents` (`m × s`).
pub fn decode_latents(model: &Model, latents: &Tensor) -> Result<Tensor> {
    let (_, s) = latents.dims2()?;
    if s != model.latent_dim() {
        return Err(shape_err!("latent length {} but s = {}", s, model.latent_dim()));
    }
    let features = latents.matmul_nt(&model.projection)?;
    model.decoder.infer(&model.decoder_params, &features)
}

/// `ψ(U e*)` for a single latent vector; the result has the per-sample
/// input shape.
pub fn decode_latent(model: &Model, e_star: &Tensor) -> Result<Tensor> {
    if e_star.shape() != [model.latent_dim()] {
        return Err(shape_err!("latent {:?} but s = {}", e_star.shape(), model.latent_dim()));
    }
    let out = decode_latents(model, &e_star.reshape(&[1, model.latent_dim()])?)?;
    out.into_reshape(model.input_shape())
}

/// Direction swept by a traversal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Along the cluster's code.
    Cluster,
    /// Along latent axis `j ≥ k − 1`, starting from the cluster's anchor
    /// point on its code ray.
    Component(usize),
}

/// Latent points `r · s_c` (cluster direction) or
/// `anchor · s_c + r · e_j` (component `j`), one per radius.
pub fn traversal_latents(codes: &ClusterCodes, s: usize, cluster: usize, radii: &[f64], direction: Direction, anchor: f64) -> Result<Vec<Tensor>> {
    if radii.iter().any(|r| !r.is_finite()) || !anchor.is_finite() {
        return Err(invalid!("traversal radii must be finite"));
    }
    let code = codes.padded(cluster, s)?;
    match direction {
        Direction::Cluster => Ok(radii.iter().map(|&r| code.scale(r)).collect()),
        Direction::Component(j) => {
            if j + 1 < codes.k() || j >= s {
                return Err(invalid!("component {} is outside {}..{}", j, codes.dim(), s));
            }
            let base = code.scale(anchor);
            Ok(radii
                .iter()
                .map(|&r| {
                    let mut e = base.clone();
                    e.data_mut()[j] += r;
                    e
                })
                .collect())
        }
    }
}

/// 90th percentile of score norms among the samples assigned to each
/// cluster; 1 for empty clusters.
pub fn anchor_radii(scores: &Tensor, codes: &ClusterCodes) -> Result<Vec<f64>> {
    let assignment = geometry::assign(scores, codes)?;
    let mut per: Vec<Vec<f64>> = alloc::vec![Vec::new(); codes.k()];
    for (i, &c) in assignment.labels.iter().enumerate() {
        let r = scores.row(i);
        per[c].push(libm::sqrt(linalg::dot(r, r)));
    }
    Ok(per
        .into_iter()
        .map(|mut norms| {
            if norms.is_empty() {
                return 1.0;
            }
            norms.sort_by(f64::total_cmp);
            let idx = libm::round((norms.len() - 1) as f64 * 0.9) as usize;
            norms[idx]
        })
        .collect())
}

/// Degree-weighted feature mean over a whole dataset, with degrees from the
/// full linear kernel `d = Φ (Φᵀ 1)`.
pub fn dataset_center(features: &Tensor) -> Result<Tensor> {
    let (n, f) = features.dims2()?;
    let mut col = alloc::vec![0.0; f];
    for i in 0..n {
        for (c, v) in col.iter_mut().zip(features.row(i)) {
            *c += v;
        }
    }
    let d: Vec<f64> = (0..n).map(|i| linalg::dot(features.row(i), &col).max(DEGREE_FLOOR)).collect();
    ksc::weighted_center(features, &DegreeVector(Tensor::vector(d)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Architecture, LayerSpec};
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mlp_model(seed: u64, d: usize, d_f: usize, s: usize, k: usize) -> Model {
        let (enc, dec) = Architecture::Mlp { hidden: vec![6] }.build(&[d], d_f, 0.2, false).unwrap();
        Model::init(enc, dec, s, k, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).unwrap()
    }

    fn batch_from(raw: Tensor, degrees: Vec<f64>, u: &Tensor) -> BatchFeatures {
        let degrees = DegreeVector(Tensor::vector(degrees));
        let centered = ksc::center_features(&raw, &degrees).unwrap();
        let scores = centered.matmul(u).unwrap();
        BatchFeatures {
            raw,
            centered,
            degrees,
            scores,
            clamped: 0,
        }
    }

    /// A model whose encoder is the identity on `R²` (one affine layer).
    fn identity_model() -> Model {
        let enc = Network::new(vec![2], vec![LayerSpec::Affine { inputs: 2, outputs: 2 }]).unwrap();
        let dec = Network::new(vec![2], vec![LayerSpec::Affine { inputs: 2, outputs: 2 }]).unwrap();
        let eye = Tensor::identity(2);
        Model::from_parts(
            enc,
            dec,
            vec![eye.clone(), Tensor::zeros(&[2])],
            vec![eye.clone(), Tensor::zeros(&[2])],
            eye,
            ClusterCodes::simplex(3).unwrap(),
            Tensor::zeros(&[2]),
            vec![1.0; 3],
        )
        .unwrap()
    }

    #[test]
    fn two_sample_hand_example() {
        let m = identity_model();
        let x = Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        let bf = encode_batch(&m, &x).unwrap();
        assert_eq!(bf.degrees.values(), &[1.0, 1.0]);
        assert_eq!(bf.centered.data(), &[0.5, -0.5, -0.5, 0.5]);
        assert_eq!(bf.scores, bf.centered);
    }

    #[test]
    fn identical_inputs_center_to_zero() {
        let m = mlp_model(1, 3, 4, 3, 3);
        let x = Tensor::from_rows(&[&[0.2, 0.4, 0.1], &[0.2, 0.4, 0.1], &[0.2, 0.4, 0.1]]).unwrap();
        let bf = encode_batch(&m, &x).unwrap();
        assert!(bf.centered.max_abs() < 1e-15);
        assert!(bf.scores.max_abs() < 1e-15);
    }

    #[test]
    fn single_sample_batch_is_rejected() {
        let m = mlp_model(1, 3, 4, 3, 3);
        assert!(encode_batch(&m, &Tensor::zeros(&[1, 3])).is_err());
    }

    #[test]
    fn weighted_mean_of_centered_features_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..10 {
            let m = mlp_model(seed, 4, 5, 3, 3);
            let x = random(&mut rng, &[7, 4]);
            let bf = encode_batch(&m, &x).unwrap();
            let mean = ksc::weighted_center(&bf.centered, &bf.degrees).unwrap();
            assert!(mean.norm() <= 1e-10);
            let e = bf.centered.matmul(&m.projection).unwrap();
            assert!(e.sub(&bf.scores).unwrap().max_abs() <= 1e-12);
        }
    }

    #[test]
    fn variance_term_cases() {
        let u = Tensor::matrix(2, 1, vec![1.0, 0.0]).unwrap();
        let zero = batch_from(Tensor::zeros(&[2, 2]), vec![1.0, 1.0], &u);
        assert_eq!(weighted_variance_term(&zero, &u).unwrap(), 0.0);
        let bf = BatchFeatures {
            raw: Tensor::zeros(&[2, 2]),
            centered: Tensor::from_rows(&[&[1.0, 0.0], &[-1.0, 0.0]]).unwrap(),
            degrees: DegreeVector(Tensor::vector(vec![1.0, 1.0])),
            scores: Tensor::zeros(&[2, 1]),
            clamped: 0,
        };
        assert_eq!(weighted_variance_term(&bf, &u).unwrap(), 1.0);
    }

    #[test]
    fn full_projection_is_lossless() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = mlp_model(2, 3, 4, 4, 3);
        let bf = encode_batch(&m, &random(&mut rng, &[6, 3])).unwrap();
        let direct: f64 = (0..6)
            .map(|i| 0.5 * linalg::dot(bf.centered.row(i), bf.centered.row(i)) / bf.degrees.values()[i])
            .sum();
        assert!((weighted_variance_term(&bf, &m.projection).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn regularizer_cases() {
        let u = Tensor::identity(2);
        let mut bf = batch_from(Tensor::zeros(&[2, 2]), vec![1.0, 1.0], &u);
        assert_eq!(feature_regularizer(&bf), 0.0);
        bf.centered = Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 2.0]]).unwrap();
        assert_eq!(feature_regularizer(&bf), 5.0);
        bf.centered = bf.centered.scale(2.0);
        assert_eq!(feature_regularizer(&bf), 20.0);
    }

    #[test]
    fn exact_inverse_reconstructs() {
        let m = identity_model();
        // Inputs already centered: the identity decoder returns them exactly.
        let x = Tensor::from_rows(&[&[0.5, -0.5], &[-0.5, 0.5]]).unwrap();
        let bf = encode_batch(&m, &Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap()).unwrap();
        assert_eq!(reconstruction_loss(&m, &x, &bf).unwrap(), 0.0);
        let shifted = x.map(|v| v + 1.0);
        assert_eq!(reconstruction_loss(&m, &shifted, &bf).unwrap(), 4.0);
    }

    #[test]
    fn graph_terms_match_independent_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = mlp_model(3, 4, 5, 3, 3);
        let x = random(&mut rng, &[6, 4]);
        let w = LossWeights { eta_rec: 0.7, eta_cl: 1.3 };
        let terms = total_loss(&m, &x, w, true).unwrap();
        let bf = encode_batch(&m, &x).unwrap();
        let var = weighted_variance_term(&bf, &m.projection).unwrap();
        let reg = feature_regularizer(&bf);
        let rec = reconstruction_loss(&m, &x, &bf).unwrap();
        let cl = geometry::cluster_loss(&bf.scores, &m.codes).unwrap();
        assert!((terms.variance - var).abs() <= 1e-12);
        assert!((terms.regularizer - reg).abs() <= 1e-12);
        assert!((terms.reconstruction - rec).abs() <= 1e-12);
        assert!((terms.cluster - cl).abs() <= 1e-12);
        assert!((terms.total - (-var + reg + 0.7 * rec + 1.3 * cl)).abs() <= 1e-12);
    }

    #[test]
    fn zero_weights_leave_variance_and_regularizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = mlp_model(4, 4, 5, 3, 3);
        let x = random(&mut rng, &[5, 4]);
        let t = total_loss(&m, &x, LossWeights { eta_rec: 0.0, eta_cl: 0.0 }, true).unwrap();
        assert_eq!(t.total, -t.variance + t.regularizer);
    }

    #[test]
    fn disabled_cluster_term_ignores_codes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = mlp_model(5, 4, 5, 3, 3);
        let x = random(&mut rng, &[5, 4]);
        let w = LossWeights { eta_rec: 1.0, eta_cl: 1.0 };
        let mut rotated = m.clone();
        rotated.codes = ClusterCodes::from_matrix(m.codes.matrix().scale(-1.0)).unwrap();
        let (a, ga) = loss_and_gradients(&m, &x, w, false).unwrap();
        let (b, gb) = loss_and_gradients(&rotated, &x, w, false).unwrap();
        assert_eq!(a.total, b.total);
        assert_eq!(a.cluster_weight, 0.0);
        assert_eq!(ga, gb);
    }

    #[test]
    fn cluster_term_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let m = mlp_model(6, 4, 5, 3, 3);
        let bf = encode_batch(&m, &random(&mut rng, &[6, 4])).unwrap();
        let a = geometry::cluster_loss(&bf.scores, &m.codes).unwrap();
        let b = geometry::cluster_loss(&bf.scores.scale(37.0), &m.codes).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn exact_eigenvectors_maximize_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = mlp_model(7, 4, 6, 2, 3);
        let bf = encode_batch(&m, &random(&mut rng, &[10, 4])).unwrap();
        // C = Φ_cᵀ D⁻¹ Φ_c
        let mut scaled = bf.centered.clone();
        for (i, d) in bf.degrees.values().iter().enumerate() {
            for v in scaled.row_mut(i) {
                *v /= d;
            }
        }
        let c = bf.centered.matmul_tn(&scaled).unwrap();
        let (_, vecs) = linalg::eigh_sym(&c).unwrap();
        let best_u = vecs.slice_cols(0, 2).unwrap();
        let best = weighted_variance_term(&bf, &best_u).unwrap();
        for _ in 0..100 {
            let u = linalg::orthonormalize(&random(&mut rng, &[6, 2])).unwrap();
            assert!(weighted_variance_term(&bf, &u).unwrap() <= best + 1e-8);
        }
    }

    fn check_finite_differences(m: &Model, x: &Tensor) {
        let w = LossWeights { eta_rec: 0.9, eta_cl: 1.1 };
        let (_, grads) = loss_and_gradients(m, x, w, true).unwrap();
        let h = 1e-6;
        let eval = |m: &Model| total_loss(m, x, w, true).unwrap().total;
        let check = |analytic: f64, plus: f64, minus: f64| {
            let numeric = (plus - minus) / (2.0 * h);
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
            assert!(err <= 1e-4, "analytic {analytic} numeric {numeric}");
        };
        for (p, g) in grads.encoder.iter().enumerate() {
            for idx in (0..g.len()).step_by(7) {
                let (mut a, mut b) = (m.clone(), m.clone());
                a.encoder_params[p].data_mut()[idx] += h;
                b.encoder_params[p].data_mut()[idx] -= h;
                check(g.data()[idx], eval(&a), eval(&b));
            }
        }
        for (p, g) in grads.decoder.iter().enumerate() {
            for idx in (0..g.len()).step_by(5) {
                let (mut a, mut b) = (m.clone(), m.clone());
                a.decoder_params[p].data_mut()[idx] += h;
                b.decoder_params[p].data_mut()[idx] -= h;
                check(g.data()[idx], eval(&a), eval(&b));
            }
        }
        for idx in 0..grads.projection.len() {
            let (mut a, mut b) = (m.clone(), m.clone());
            a.projection.data_mut()[idx] += h;
            b.projection.data_mut()[idx] -= h;
            check(grads.projection.data()[idx], eval(&a), eval(&b));
        }
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = mlp_model(8, 4, 5, 3, 3);
        check_finite_differences(&m, &random(&mut rng, &[5, 4]));
    }

    #[test]
    fn decode_chains_with_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let m = mlp_model(9, 4, 5, 3, 3);
        let x = random(&mut rng, &[4, 4]);
        let bf = encode_batch(&m, &x).unwrap();
        let recon = decode_latents(&m, &bf.scores).unwrap();
        let one = decode_latent(&m, &Tensor::vector(bf.scores.row(2).to_vec())).unwrap();
        assert_eq!(one.data(), recon.row(2));
        let origin = decode_latent(&m, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(origin.shape(), &[4]);
        assert_eq!(origin, decode_latent(&m, &Tensor::zeros(&[3])).unwrap());
    }

    #[test]
    fn traversal_points() {
        let codes = ClusterCodes::simplex(3).unwrap();
        let pts = traversal_latents(&codes, 5, 0, &[0.0, 2.0], Direction::Cluster, 1.0).unwrap();
        assert_eq!(pts[0].data(), &[0.0; 5]);
        let expected = codes.padded(0, 5).unwrap().scale(2.0);
        assert_eq!(pts[1], expected);
        assert!((pts[1].data()[0] - 2.0).abs() < 1e-12);
        let line = traversal_latents(&codes, 5, 1, &[-1.0, 0.0, 1.0], Direction::Cluster, 1.0).unwrap();
        assert_eq!(line[0], line[2].scale(-1.0));
        let comp = traversal_latents(&codes, 5, 2, &[0.0, 3.0], Direction::Component(3), 2.0).unwrap();
        assert_eq!(comp[0], codes.padded(2, 5).unwrap().scale(2.0));
        assert_eq!(comp[1].data()[3], 3.0);
        assert!(traversal_latents(&codes, 5, 3, &[1.0], Direction::Cluster, 1.0).is_err());
        assert!(traversal_latents(&codes, 5, 0, &[1.0], Direction::Component(1), 1.0).is_err());
        assert!(traversal_latents(&codes, 5, 0, &[f64::NAN], Direction::Cluster, 1.0).is_err());
    }

    #[test]
    fn projection_starts_orthonormal() {
        let m = mlp_model(10, 4, 8, 5, 3);
        assert!(linalg::orthonormality_error(&m.projection).unwrap() < 1e-12);
    }

    #[test]
    fn rejects_bad_dims() {
        let (enc, dec) = Architecture::Mlp { hidden: vec![] }.build(&[3], 4, 0.2, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(Model::init(enc.clone(), dec.clone(), 1, 3, &mut rng).is_err());
        assert!(Model::init(enc, dec, 5, 3, &mut rng).is_err());
    }
}
