//! Layer specifications and feed-forward networks built on the tape.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{Graph, NodeId};
use crate::error::{invalid, shape_err};
use crate::{Result, Tensor};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

/// One layer. Extents are per sample; the batch axis is implicit.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Affine {
        inputs: usize,
        outputs: usize,
    },
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    ConvTranspose {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    LeakyRelu {
        slope: f64,
    },
    Sigmoid,
    Reshape {
        shape: Vec<usize>,
    },
}

impl LayerSpec {
    fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            Self::Affine { inputs, outputs } => vec![vec![inputs, outputs], vec![outputs]],
            Self::Conv { in_channels, out_channels, kernel, .. } => {
                vec![vec![out_channels, in_channels, kernel, kernel], vec![out_channels]]
            }
            Self::ConvTranspose { in_channels, out_channels, kernel, .. } => {
                vec![vec![in_channels, out_channels, kernel, kernel], vec![out_channels]]
            }
            _ => Vec::new(),
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            Self::Affine { inputs, .. } => inputs,
            Self::Conv { in_channels, kernel, .. } => in_channels * kernel * kernel,
            Self::ConvTranspose { out_channels, kernel, .. } => out_channels * kernel * kernel,
            _ => 0,
        }
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let len: usize = input.iter().product();
        match *self {
            Self::Affine { inputs, outputs } => {
                if input != [inputs] {
                    return Err(shape_err!("affine layer expects [{}], got {:?}", inputs, input));
                }
                Ok(vec![outputs])
            }
            Self::Conv { in_channels, out_channels, kernel, stride, padding } => {
                let &[c, h, w] = input else {
                    return Err(shape_err!("convolution expects [c, h, w], got {:?}", input));
                };
                let win = crate::conv::Window::new(c, h, w, kernel, stride, padding)
                    .filter(|_| c == in_channels)
                    .ok_or_else(|| shape_err!("convolution {:?} does not fit {:?}", self, input))?;
                Ok(vec![out_channels, win.out_h, win.out_w])
            }
            Self::ConvTranspose { in_channels, out_channels, kernel, stride, padding } => {
                let &[c, h, w] = input else {
                    return Err(shape_err!("transposed convolution expects [c, h, w], got {:?}", input));
                };
                let grow = |x: usize| ((x.max(1) - 1) * stride + kernel).checked_sub(2 * padding).filter(|&v| v > 0);
                match (c == in_channels && h > 0 && w > 0, grow(h), grow(w)) {
                    (true, Some(oh), Some(ow)) => Ok(vec![out_channels, oh, ow]),
                    _ => Err(shape_err!("transposed convolution {:?} does not fit {:?}", self, input)),
                }
            }
            Self::LeakyRelu { .. } | Self::Sigmoid => Ok(input.to_vec()),
            Self::Reshape { ref shape } => {
                if shape.iter().product::<usize>() != len {
                    return Err(shape_err!("cannot reshape {:?} into {:?}", input, shape));
                }
                Ok(shape.clone())
            }
        }
    }
}

/// A chain of layers applied to inputs of a fixed per-sample shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    output_shape: Vec<usize>,
}

impl Network {
    /// Validates shape consistency of the whole chain.
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Result<Self> {
        let mut shape = input_shape.clone();
        for (i, layer) in layers.iter().enumerate() {
            shape = layer
                .output_shape(&shape)
                .map_err(|e| shape_err!("layer {}: {}", i, e))?;
        }
        Ok(Self {
            input_shape,
            layers,
            output_shape: shape,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn output_len(&self) -> usize {
        self.output_shape.iter().product()
    }

    /// Parameter tensor shapes in layer order (weight, then bias).
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.layers.iter().flat_map(LayerSpec::param_shapes).collect()
    }

    /// Uniform fan-in initialization: every weight and bias of a layer is
    /// drawn from `U(−1/√fan_in, 1/√fan_in)`.
    pub fn init_params<R: Rng>(&self, rng: &mut R) -> Vec<Tensor> {
        let mut params = Vec::new();
        for layer in &self.layers {
            let bound = 1.0 / libm::sqrt(layer.fan_in().max(1) as f64);
            for shape in layer.param_shapes() {
                let n = shape.iter().product();
                let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
                params.push(Tensor::new(&shape, data).expect("shape product matches"));
            }
        }
        params
    }

    fn check_params<T>(&self, params: &[T], shape_of: impl Fn(&T) -> Vec<usize>) -> Result<()> {
        let expected = self.param_shapes();
        if params.len() != expected.len() {
            return Err(shape_err!("network needs {} parameter tensors, got {}", expected.len(), params.len()));
        }
        for (i, (p, e)) in params.iter().zip(&expected).enumerate() {
            if shape_of(p) != *e {
                return Err(shape_err!("parameter {} has shape {:?}, expected {:?}", i, shape_of(p), e));
            }
        }
        Ok(())
    }

    /// Records the network on `graph`. `input` is `[b, ..input_shape]` and
    /// the result is `[b, ..output_shape]`.
    pub fn forward(&self, graph: &mut Graph, params: &[NodeId], input: NodeId) -> Result<NodeId> {
        self.check_params(params, |&id| graph.value(id).shape().to_vec())?;
        let batch = self.batch_of(graph.value(input))?;
        let mut x = input;
        let mut shape = self.input_shape.clone();
        let mut p = params.iter().copied();
        for layer in &self.layers {
            let mut full = vec![batch];
            full.extend_from_slice(&shape);
            if graph.value(x).shape() != full.as_slice() {
                x = graph.reshape(x, &full)?;
            }
            x = match *layer {
                LayerSpec::Affine { .. } => {
                    let (w, b) = (p.next().expect("checked"), p.next().expect("checked"));
                    let y = graph.matmul(x, w)?;
                    graph.add_row(y, b)?
                }
                LayerSpec::Conv { stride, padding, .. } => {
                    let (w, b) = (p.next().expect("checked"), p.next().expect("checked"));
                    graph.conv2d(x, w, b, stride, padding)?
                }
                LayerSpec::ConvTranspose { stride, padding, .. } => {
                    let (w, b) = (p.next().expect("checked"), p.next().expect("checked"));
                    graph.conv_transpose2d(x, w, b, stride, padding)?
                }
                LayerSpec::LeakyRelu { slope } => graph.leaky_relu(x, slope),
                LayerSpec::Sigmoid => graph.sigmoid(x),
                LayerSpec::Reshape { .. } => x,
            };
            shape = layer.output_shape(&shape)?;
        }
        let mut full = vec![batch];
        full.extend_from_slice(&shape);
        if graph.value(x).shape() != full.as_slice() {
            x = graph.reshape(x, &full)?;
        }
        Ok(x)
    }

    /// Evaluates the network without keeping the graph.
    pub fn infer(&self, params: &[Tensor], input: &Tensor) -> Result<Tensor> {
        self.check_params(params, |t| t.shape().to_vec())?;
        let mut g = Graph::new();
        let ids: Vec<NodeId> = params.iter().map(|t| g.constant(t.clone())).collect();
        let x = g.constant(input.clone());
        let y = self.forward(&mut g, &ids, x)?;
        Ok(g.value(y).clone())
    }

    fn batch_of(&self, x: &Tensor) -> Result<usize> {
        let per = self.input_len();
        let b = x.shape().first().copied().unwrap_or(0);
        if b == 0 || b * per != x.len() {
            return Err(shape_err!("input {:?} is not a batch of {:?}", x.shape(), self.input_shape));
        }
        Ok(b)
    }
}

/// Encoder/decoder family.
#[derive(Clone, Debug, PartialEq)]
pub enum Architecture {
    /// Fully connected layers with the given hidden widths; the decoder
    /// mirrors the encoder.
    Mlp { hidden: Vec<usize> },
    /// Three strided convolutions and two affine layers, mirrored with
    /// transposed convolutions in the decoder. Needs a single-channel input
    /// whose side length survives the 4/2/1, 4/2/1, 3/2/1 kernel chain.
    Conv { channels: [usize; 3], hidden: usize },
}

impl Architecture {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Mlp { .. } => "mlp",
            Self::Conv { .. } => "conv",
        }
    }

    pub fn default_conv() -> Self {
        Self::Conv {
            channels: [8, 16, 32],
            hidden: 64,
        }
    }

    /// Builds `(encoder, decoder)` for per-sample `input_shape`.
    ///
    /// The encoder ends in a sigmoid so features are positive and every
    /// linear-kernel degree `φ_iᵀ Σ_j φ_j` is strictly positive. The decoder
    /// ends in a sigmoid when `bounded_output` (pixel data in `[0, 1]`).
    pub fn build(&self, input_shape: &[usize], feature_dim: usize, slope: f64, bounded_output: bool) -> Result<(Network, Network)> {
        if feature_dim == 0 {
            return Err(invalid!("feature dimension must be positive"));
        }
        let (enc, dec) = match self {
            Self::Mlp { hidden } => mlp_layers(input_shape, hidden, feature_dim, slope),
            Self::Conv { channels, hidden } => conv_layers(input_shape, *channels, *hidden, feature_dim, slope)?,
        };
        let mut dec = dec;
        if bounded_output {
            dec.push(LayerSpec::Sigmoid);
        }
        let encoder = Network::new(input_shape.to_vec(), enc)?;
        let decoder = Network::new(vec![feature_dim], dec)?;
        if decoder.output_shape() != input_shape {
            return Err(shape_err!(
                "{} decoder produces {:?} for input {:?}",
                self.name(),
                decoder.output_shape(),
                input_shape
            ));
        }
        Ok((encoder, decoder))
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Mlp { hidden } => format!("mlp {:?}", hidden),
            Self::Conv { channels, hidden } => format!("conv {:?} hidden {}", channels, hidden),
        }
    }
}

fn mlp_layers(input_shape: &[usize], hidden: &[usize], feature_dim: usize, slope: f64) -> (Vec<LayerSpec>, Vec<LayerSpec>) {
    let d: usize = input_shape.iter().product();
    let mut widths = vec![d];
    widths.extend_from_slice(hidden);
    let mut enc = Vec::new();
    if input_shape.len() != 1 {
        enc.push(LayerSpec::Reshape { shape: vec![d] });
    }
    for w in widths.windows(2) {
        enc.push(LayerSpec::Affine { inputs: w[0], outputs: w[1] });
        enc.push(LayerSpec::LeakyRelu { slope });
    }
    enc.push(LayerSpec::Affine {
        inputs: *widths.last().expect("non-empty"),
        outputs: feature_dim,
    });
    enc.push(LayerSpec::Sigmoid);

    let mut dec = Vec::new();
    let mut prev = feature_dim;
    for &w in hidden.iter().rev() {
        dec.push(LayerSpec::Affine { inputs: prev, outputs: w });
        dec.push(LayerSpec::LeakyRelu { slope });
        prev = w;
    }
    dec.push(LayerSpec::Affine { inputs: prev, outputs: d });
    if input_shape.len() != 1 {
        dec.push(LayerSpec::Reshape {
            shape: input_shape.to_vec(),
        });
    }
    (enc, dec)
}

fn conv_layers(input_shape: &[usize], ch: [usize; 3], hidden: usize, feature_dim: usize, slope: f64) -> Result<(Vec<LayerSpec>, Vec<LayerSpec>)> {
    let &[1, h, w] = input_shape else {
        return Err(shape_err!("conv architecture needs a [1, h, w] input, got {:?}", input_shape));
    };
    // (kernel, stride, padding) per stage.
    const STAGES: [(usize, usize, usize); 3] = [(4, 2, 1), (4, 2, 1), (3, 2, 1)];
    let mut sizes = vec![(h, w)];
    for &(k, s, p) in &STAGES {
        let (a, b) = *sizes.last().expect("non-empty");
        if a + 2 * p < k || b + 2 * p < k {
            return Err(shape_err!("input {}×{} too small for the conv architecture", h, w));
        }
        sizes.push(((a + 2 * p - k) / s + 1, (b + 2 * p - k) / s + 1));
    }
    let (fh, fw) = sizes[3];
    let flat = ch[2] * fh * fw;
    let in_ch = [1, ch[0], ch[1]];
    let mut enc = Vec::new();
    for (i, &(k, s, p)) in STAGES.iter().enumerate() {
        enc.push(LayerSpec::Conv {
            in_channels: in_ch[i],
            out_channels: ch[i],
            kernel: k,
            stride: s,
            padding: p,
        });
        enc.push(LayerSpec::LeakyRelu { slope });
    }
    enc.push(LayerSpec::Reshape { shape: vec![flat] });
    enc.push(LayerSpec::Affine { inputs: flat, outputs: hidden });
    enc.push(LayerSpec::LeakyRelu { slope });
    enc.push(LayerSpec::Affine { inputs: hidden, outputs: feature_dim });
    enc.push(LayerSpec::Sigmoid);

    let mut dec = vec![
        LayerSpec::Affine { inputs: feature_dim, outputs: hidden },
        LayerSpec::LeakyRelu { slope },
        LayerSpec::Affine { inputs: hidden, outputs: flat },
        LayerSpec::LeakyRelu { slope },
        LayerSpec::Reshape {
            shape: vec![ch[2], fh, fw],
        },
    ];
    for i in (0..3).rev() {
        let (k, s, p) = STAGES[i];
        dec.push(LayerSpec::ConvTranspose {
            in_channels: ch[i],
            out_channels: in_ch[i],
            kernel: k,
            stride: s,
            padding: p,
        });
        if i > 0 {
            dec.push(LayerSpec::LeakyRelu { slope });
        }
    }
    Ok((enc, dec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_affine_gives_zero() {
        let net = Network::new(vec![3], vec![LayerSpec::Affine { inputs: 3, outputs: 2 }]).unwrap();
        let params = vec![Tensor::zeros(&[3, 2]), Tensor::zeros(&[2])];
        let x = Tensor::matrix(4, 3, (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(net.infer(&params, &x).unwrap(), Tensor::zeros(&[4, 2]));
    }

    #[test]
    fn mnist_conv_shapes() {
        let (enc, dec) = Architecture::default_conv().build(&[1, 28, 28], 32, DEFAULT_LEAKY_SLOPE, true).unwrap();
        assert_eq!(enc.output_shape(), &[32]);
        assert_eq!(dec.output_shape(), &[1, 28, 28]);
        let convs = enc.layers().iter().filter(|l| matches!(l, LayerSpec::Conv { .. })).count();
        let affine = enc.layers().iter().filter(|l| matches!(l, LayerSpec::Affine { .. })).count();
        assert_eq!((convs, affine), (3, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = enc.init_params(&mut rng);
        let x = Tensor::full(&[2, 1, 28, 28], 0.5);
        let y = enc.infer(&params, &x).unwrap();
        assert_eq!(y.shape(), &[2, 32]);
    }

    #[test]
    fn inconsistent_chain_rejected() {
        let layers = vec![
            LayerSpec::Affine { inputs: 3, outputs: 4 },
            LayerSpec::Affine { inputs: 5, outputs: 1 },
        ];
        assert!(Network::new(vec![3], layers).is_err());
    }

    #[test]
    fn wrong_input_rejected() {
        let net = Network::new(vec![3], vec![LayerSpec::Sigmoid]).unwrap();
        assert!(net.infer(&[], &Tensor::zeros(&[2, 4])).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let (enc, _) = Architecture::Mlp { hidden: vec![5, 4] }.build(&[2], 3, 0.2, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = enc.init_params(&mut rng);
        let x = Tensor::matrix(3, 2, vec![0.1, 0.2, -0.3, 0.4, 1.5, -2.0]).unwrap();
        let a = enc.infer(&params, &x).unwrap();
        let b = enc.infer(&params, &x).unwrap();
        assert_eq!(a.data(), b.data());
    }
}
