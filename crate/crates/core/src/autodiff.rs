//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation as a node holding its output value.
//! Nodes only ever reference earlier nodes, so the tape is topologically
//! ordered by construction and [`Graph::backward`] is a single reverse sweep
//! that visits each node once.

use alloc::vec;
use alloc::vec::Vec;

use crate::conv::{self, Window};
use crate::error::shape_err;
use crate::{linalg, Error, Result, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    MatMulNt(NodeId, NodeId),
    MatMulTn(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    SubRow(NodeId, NodeId),
    Scale(NodeId, f64),
    Sum(NodeId),
    SumSq(NodeId),
    ColSums(NodeId),
    RowSqNorms(NodeId),
    Reciprocal(NodeId),
    ClampMin(NodeId, f64),
    DivScalar(NodeId, NodeId),
    LeakyRelu(NodeId, f64),
    Sigmoid(NodeId),
    Reshape(NodeId),
    SliceCols(NodeId, usize),
    Conv {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        window: Window,
    },
    ConvTranspose {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        window: Window,
    },
    MinCosine {
        input: NodeId,
        codes: Tensor,
        /// Winning code per row; `None` for zero-norm rows.
        choice: Vec<Option<usize>>,
    },
}

impl Op {
    fn parents(&self) -> Vec<NodeId> {
        use Op::*;
        match self {
            Leaf => Vec::new(),
            MatMul(a, b) | MatMulNt(a, b) | MatMulTn(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b)
            | AddRow(a, b) | SubRow(a, b) | DivScalar(a, b) => vec![*a, *b],
            Scale(a, _) | Sum(a) | SumSq(a) | ColSums(a) | RowSqNorms(a) | Reciprocal(a)
            | ClampMin(a, _) | LeakyRelu(a, _) | Sigmoid(a) | Reshape(a) | SliceCols(a, _) => {
                vec![*a]
            }
            Conv { input, weight, bias, .. } | ConvTranspose { input, weight, bias, .. } => {
                vec![*input, *weight, *bias]
            }
            MinCosine { input, .. } => vec![*input],
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// A recorded computation.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Removes and returns the gradient of `id`, or zeros of `like`'s shape
    /// when the loss does not depend on it.
    pub fn take_or_zeros(&mut self, id: NodeId, like: &Tensor) -> Tensor {
        self.grads
            .get_mut(id.0)
            .and_then(Option::take)
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A trainable leaf: gradients flow to it.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// A constant leaf: no gradient is computed for it.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn derived(&mut self, value: Tensor, op: Op) -> NodeId {
        let requires_grad = op.parents().iter().any(|p| self.nodes[p.0].requires_grad);
        self.push(value, op, requires_grad)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.derived(v, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul_nt(self.value(b))?;
        Ok(self.derived(v, Op::MatMulNt(a, b)))
    }

    /// `aᵀ · b`
    pub fn matmul_tn(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul_tn(self.value(b))?;
        Ok(self.derived(v, Op::MatMulTn(a, b)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.derived(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.derived(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.derived(v, Op::Mul(a, b)))
    }

    fn row_broadcast(&self, x: NodeId, row: NodeId, sign: f64) -> Result<Tensor> {
        let (xv, rv) = (self.value(x), self.value(row));
        if xv.ndim() < 2 || xv.cols() != rv.len() {
            return Err(shape_err!("cannot broadcast {:?} over rows of {:?}", rv.shape(), xv.shape()));
        }
        let mut out = xv.clone();
        let n = rv.len();
        for chunk in out.data_mut().chunks_mut(n) {
            for (o, r) in chunk.iter_mut().zip(rv.data()) {
                *o += sign * r;
            }
        }
        Ok(out)
    }

    /// Adds a length-`n` row to every row of an `m×n` matrix.
    pub fn add_row(&mut self, x: NodeId, row: NodeId) -> Result<NodeId> {
        let v = self.row_broadcast(x, row, 1.0)?;
        Ok(self.derived(v, Op::AddRow(x, row)))
    }

    pub fn sub_row(&mut self, x: NodeId, row: NodeId) -> Result<NodeId> {
        let v = self.row_broadcast(x, row, -1.0)?;
        Ok(self.derived(v, Op::SubRow(x, row)))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let v = self.value(x).scale(factor);
        self.derived(v, Op::Scale(x, factor))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(x).sum());
        self.derived(v, Op::Sum(x))
    }

    /// Sum of squared entries.
    pub fn sum_sq(&mut self, x: NodeId) -> NodeId {
        let d = self.value(x).data();
        let v = Tensor::scalar(linalg::dot(d, d));
        self.derived(v, Op::SumSq(x))
    }

    /// Column sums of an `m×n` matrix, shape `[n]`.
    pub fn col_sums(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = self.value(x);
        let (_, n) = xv.dims2()?;
        let mut out = vec![0.0; n];
        for row in xv.data().chunks(n) {
            for (o, r) in out.iter_mut().zip(row) {
                *o += r;
            }
        }
        Ok(self.derived(Tensor::vector(out), Op::ColSums(x)))
    }

    /// Squared Euclidean norm of every row, shape `[m]`.
    pub fn row_sq_norms(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = self.value(x);
        let (_, n) = xv.dims2()?;
        let out = xv.data().chunks(n.max(1)).map(|r| linalg::dot(r, r)).collect();
        Ok(self.derived(Tensor::vector(out), Op::RowSqNorms(x)))
    }

    pub fn reciprocal(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|a| 1.0 / a);
        self.derived(v, Op::Reciprocal(x))
    }

    /// `max(x, floor)` elementwise; the gradient is cut where the floor is active.
    pub fn clamp_min(&mut self, x: NodeId, floor: f64) -> NodeId {
        let v = self.value(x).map(|a| a.max(floor));
        self.derived(v, Op::ClampMin(x, floor))
    }

    /// Divides every entry of `x` by the scalar node `s`.
    pub fn div_scalar(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        if self.value(s).len() != 1 {
            return Err(shape_err!("divisor must be a scalar, got {:?}", self.value(s).shape()));
        }
        let d = self.value(s).data()[0];
        let v = self.value(x).map(|a| a / d);
        Ok(self.derived(v, Op::DivScalar(x, s)))
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> NodeId {
        let v = self.value(x).map(|a| if a > 0.0 { a } else { slope * a });
        self.derived(v, Op::LeakyRelu(x, slope))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(sigmoid);
        self.derived(v, Op::Sigmoid(x))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(x).reshape(shape)?;
        Ok(self.derived(v, Op::Reshape(x)))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, x: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let v = self.value(x).slice_cols(start, end)?;
        Ok(self.derived(v, Op::SliceCols(x, start)))
    }

    /// 2-D convolution. `input: [b, ci, h, w]`, `weight: [co, ci, k, k]`,
    /// `bias: [co]`.
    pub fn conv2d(&mut self, input: NodeId, weight: NodeId, bias: NodeId, stride: usize, padding: usize) -> Result<NodeId> {
        let (x, w, b) = (self.value(input), self.value(weight), self.value(bias));
        let (&[batch, ci, h, wd], &[co, wci, k, k2]) = (x.shape(), w.shape()) else {
            return Err(shape_err!("conv2d expects 4-D input and weight, got {:?} and {:?}", x.shape(), w.shape()));
        };
        if wci != ci || k != k2 || b.len() != co {
            return Err(shape_err!("conv2d weight {:?} / bias {:?} do not fit input {:?}", w.shape(), b.shape(), x.shape()));
        }
        let window = Window::new(ci, h, wd, k, stride, padding)
            .ok_or_else(|| shape_err!("kernel {} does not fit a {}×{} input with padding {}", k, h, wd, padding))?;
        let out = conv::conv_forward(&window, x.data(), w.data(), b.data(), batch);
        let v = Tensor::new(&[batch, co, window.out_h, window.out_w], out)?;
        Ok(self.derived(v, Op::Conv { input, weight, bias, window }))
    }

    /// Transposed 2-D convolution. `input: [b, ci, h, w]`,
    /// `weight: [ci, co, k, k]`, `bias: [co]`; output extent
    /// `(h − 1)·stride − 2·padding + k`.
    pub fn conv_transpose2d(&mut self, input: NodeId, weight: NodeId, bias: NodeId, stride: usize, padding: usize) -> Result<NodeId> {
        let (x, w, b) = (self.value(input), self.value(weight), self.value(bias));
        let (&[batch, ci, h, wd], &[wci, co, k, k2]) = (x.shape(), w.shape()) else {
            return Err(shape_err!("conv_transpose2d expects 4-D input and weight, got {:?} and {:?}", x.shape(), w.shape()));
        };
        if wci != ci || k != k2 || b.len() != co || h == 0 || wd == 0 {
            return Err(shape_err!("conv_transpose2d weight {:?} / bias {:?} do not fit input {:?}", w.shape(), b.shape(), x.shape()));
        }
        let out_h = ((h - 1) * stride + k).checked_sub(2 * padding);
        let out_w = ((wd - 1) * stride + k).checked_sub(2 * padding);
        let window = match (out_h, out_w) {
            (Some(oh), Some(ow)) => Window::new(co, oh, ow, k, stride, padding),
            _ => None,
        }
        .filter(|win| win.out_h == h && win.out_w == wd)
        .ok_or_else(|| shape_err!("transposed kernel {} / stride {} / padding {} invalid for {}×{}", k, stride, padding, h, wd))?;
        let out = conv::conv_transpose_forward(&window, x.data(), w.data(), b.data(), batch);
        let v = Tensor::new(&[batch, co, window.height, window.width], out)?;
        Ok(self.derived(v, Op::ConvTranspose { input, weight, bias, window }))
    }

    /// Per-row minimum cosine distance to a fixed set of code rows.
    ///
    /// `x: m×q`, `codes: k×q`; output `[m]`. Ties resolve to the lowest code
    /// index. A zero row has distance 1 and receives no gradient.
    pub fn min_cosine_distance(&mut self, x: NodeId, codes: &Tensor) -> Result<NodeId> {
        let xv = self.value(x);
        let (m, q) = xv.dims2()?;
        let (_, cq) = codes.dims2()?;
        if q != cq {
            return Err(shape_err!("rows have {} components but codes have {}", q, cq));
        }
        let mut out = Vec::with_capacity(m);
        let mut choice = Vec::with_capacity(m);
        for i in 0..m {
            match crate::geometry::nearest_code(xv.row(i), codes) {
                Some((c, d)) => {
                    out.push(d);
                    choice.push(Some(c));
                }
                None => {
                    out.push(1.0);
                    choice.push(None);
                }
            }
        }
        let op = Op::MinCosine {
            input: x,
            codes: codes.clone(),
            choice,
        };
        Ok(self.derived(Tensor::vector(out), op))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = &self.nodes[loss.0].value;
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            if node.op.parents().iter().any(|p| p.0 >= i) {
                return Err(Error::GraphCycle(i));
            }
            self.propagate(i, &g, &mut grads)?;
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[i];
        let val = |id: NodeId| &self.nodes[id.0].value;
        let mut send = |id: NodeId, t: Tensor| -> Result<()> {
            match &mut grads[id.0] {
                Some(acc) => acc.add_assign(&t),
                slot @ None => {
                    *slot = Some(t);
                    Ok(())
                }
            }
        };
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                if self.wants(a) {
                    send(a, g.matmul_nt(val(b))?)?;
                }
                if self.wants(b) {
                    send(b, val(a).matmul_tn(g)?)?;
                }
            }
            &Op::MatMulNt(a, b) => {
                if self.wants(a) {
                    send(a, g.matmul(val(b))?)?;
                }
                if self.wants(b) {
                    send(b, g.matmul_tn(val(a))?)?;
                }
            }
            &Op::MatMulTn(a, b) => {
                if self.wants(a) {
                    send(a, val(b).matmul_nt(g)?)?;
                }
                if self.wants(b) {
                    send(b, val(a).matmul(g)?)?;
                }
            }
            &Op::Add(a, b) => {
                if self.wants(a) {
                    send(a, g.clone())?;
                }
                if self.wants(b) {
                    send(b, g.clone())?;
                }
            }
            &Op::Sub(a, b) => {
                if self.wants(a) {
                    send(a, g.clone())?;
                }
                if self.wants(b) {
                    send(b, g.scale(-1.0))?;
                }
            }
            &Op::Mul(a, b) => {
                if self.wants(a) {
                    send(a, g.zip_map(val(b), |x, y| x * y)?)?;
                }
                if self.wants(b) {
                    send(b, g.zip_map(val(a), |x, y| x * y)?)?;
                }
            }
            &Op::AddRow(x, r) | &Op::SubRow(x, r) => {
                let sign = if matches!(node.op, Op::AddRow(..)) { 1.0 } else { -1.0 };
                if self.wants(x) {
                    send(x, g.clone())?;
                }
                if self.wants(r) {
                    let rv = val(r);
                    let n = rv.len();
                    let mut acc = vec![0.0; n];
                    for chunk in g.data().chunks(n) {
                        for (a, c) in acc.iter_mut().zip(chunk) {
                            *a += c;
                        }
                    }
                    let t = Tensor::new(rv.shape(), acc)?.scale(sign);
                    send(r, t)?;
                }
            }
            &Op::Scale(x, f) => send(x, g.scale(f))?,
            &Op::Sum(x) => send(x, Tensor::full(val(x).shape(), g.data()[0]))?,
            &Op::SumSq(x) => {
                let gs = 2.0 * g.data()[0];
                send(x, val(x).scale(gs))?;
            }
            &Op::ColSums(x) => {
                let xv = val(x);
                let n = g.len();
                let mut out = Tensor::zeros(xv.shape());
                for row in out.data_mut().chunks_mut(n) {
                    row.copy_from_slice(g.data());
                }
                send(x, out)?;
            }
            &Op::RowSqNorms(x) => {
                let mut out = val(x).clone();
                let n = out.cols();
                for (row, &gi) in out.data_mut().chunks_mut(n.max(1)).zip(g.data()) {
                    for v in row {
                        *v *= 2.0 * gi;
                    }
                }
                send(x, out)?;
            }
            &Op::Reciprocal(x) => send(x, g.zip_map(val(x), |gi, xi| -gi / (xi * xi))?)?,
            &Op::ClampMin(x, floor) => {
                send(x, g.zip_map(val(x), |gi, xi| if xi > floor { gi } else { 0.0 })?)?
            }
            &Op::DivScalar(x, s) => {
                let d = val(s).data()[0];
                if self.wants(x) {
                    send(x, g.scale(1.0 / d))?;
                }
                if self.wants(s) {
                    let gx = g.dot(val(x))?;
                    send(s, Tensor::new(val(s).shape(), vec![-gx / (d * d)])?)?;
                }
            }
            &Op::LeakyRelu(x, slope) => {
                send(x, g.zip_map(val(x), |gi, xi| if xi > 0.0 { gi } else { slope * gi })?)?
            }
            &Op::Sigmoid(x) => send(x, g.zip_map(&node.value, |gi, y| gi * y * (1.0 - y))?)?,
            &Op::Reshape(x) => send(x, g.reshape(val(x).shape())?)?,
            &Op::SliceCols(x, start) => {
                let xv = val(x);
                let (r, c) = xv.dims2()?;
                let w = g.cols();
                let mut out = Tensor::zeros(&[r, c]);
                for i in 0..r {
                    out.row_mut(i)[start..start + w].copy_from_slice(g.row(i));
                }
                send(x, out)?;
            }
            Op::Conv { input, weight, bias, window } => {
                let (xv, wv) = (val(*input), val(*weight));
                let batch = xv.shape()[0];
                let co = val(*bias).len();
                let mut dw = vec![0.0; wv.len()];
                let mut db = vec![0.0; co];
                let mut dx = self.wants(*input).then(|| vec![0.0; xv.len()]);
                conv::conv_backward(window, xv.data(), wv.data(), g.data(), batch, co, dx.as_deref_mut(), &mut dw, &mut db);
                if let Some(dx) = dx {
                    send(*input, Tensor::new(xv.shape(), dx)?)?;
                }
                if self.wants(*weight) {
                    send(*weight, Tensor::new(wv.shape(), dw)?)?;
                }
                if self.wants(*bias) {
                    send(*bias, Tensor::new(val(*bias).shape(), db)?)?;
                }
            }
            Op::ConvTranspose { input, weight, bias, window } => {
                let (xv, wv) = (val(*input), val(*weight));
                let batch = xv.shape()[0];
                let mut dw = vec![0.0; wv.len()];
                let mut db = vec![0.0; val(*bias).len()];
                let mut dx = self.wants(*input).then(|| vec![0.0; xv.len()]);
                conv::conv_transpose_backward(window, xv.data(), wv.data(), g.data(), batch, dx.as_deref_mut(), &mut dw, &mut db);
                if let Some(dx) = dx {
                    send(*input, Tensor::new(xv.shape(), dx)?)?;
                }
                if self.wants(*weight) {
                    send(*weight, Tensor::new(wv.shape(), dw)?)?;
                }
                if self.wants(*bias) {
                    send(*bias, Tensor::new(val(*bias).shape(), db)?)?;
                }
            }
            Op::MinCosine { input, codes, choice } => {
                let xv = val(*input);
                let mut out = Tensor::zeros(xv.shape());
                for (i, c) in choice.iter().enumerate() {
                    let Some(c) = *c else { continue };
                    let row = xv.row(i);
                    let code = codes.row(c);
                    let nx = libm::sqrt(linalg::dot(row, row));
                    let ns = libm::sqrt(linalg::dot(code, code));
                    let xs = linalg::dot(row, code);
                    let gi = g.data()[i];
                    for ((o, &xj), &sj) in out.row_mut(i).iter_mut().zip(row).zip(code) {
                        // d = 1 − x·s / (|x||s|)
                        *o = -gi * (sj / (nx * ns) - xs * xj / (nx * nx * nx * ns));
                    }
                }
                send(*input, out)?;
            }
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).unwrap()
    }

    /// Central-difference check of every op against its recorded backward.
    fn check(build: impl Fn(&mut Graph, &[NodeId]) -> NodeId, inputs: &[Tensor]) {
        let mut g = Graph::new();
        let ids: Vec<_> = inputs.iter().map(|t| g.param(t.clone())).collect();
        let loss = build(&mut g, &ids);
        let grads = g.backward(loss).unwrap();
        let h = 1e-5;
        for (k, t) in inputs.iter().enumerate() {
            let analytic = grads.get(ids[k]).cloned().unwrap_or_else(|| Tensor::zeros(t.shape()));
            for j in 0..t.len() {
                let eval = |delta: f64| {
                    let mut perturbed = inputs.to_vec();
                    perturbed[k].data_mut()[j] += delta;
                    let mut g = Graph::new();
                    let ids: Vec<_> = perturbed.into_iter().map(|t| g.param(t)).collect();
                    let l = build(&mut g, &ids);
                    g.value(l).data()[0]
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let a = analytic.data()[j];
                let denom = a.abs().max(numeric.abs()).max(1e-6);
                assert!((a - numeric).abs() / denom < 1e-5, "input {k} coord {j}: {a} vs {numeric}");
            }
        }
    }

    #[test]
    fn sum_gives_ones() {
        let mut g = Graph::new();
        let p = g.param(Tensor::vector(vec![0.3, -2.0, 7.0]));
        let l = g.sum(p);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(p).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn quadratic() {
        let mut g = Graph::new();
        let p = g.param(Tensor::vector(vec![1.0, 2.0]));
        let l = g.sum_sq(p);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(p).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let p = g.param(Tensor::vector(vec![1.0, 2.0]));
        assert_eq!(g.backward(p).unwrap_err(), Error::NonScalarLoss(vec![2]));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::vector(vec![1.0, 2.0]));
        let p = g.param(Tensor::vector(vec![3.0, 4.0]));
        let m = g.mul(c, p).unwrap();
        let l = g.sum(m);
        let grads = g.backward(l).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(p).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn matrix_ops_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let inputs = [rand_tensor(&mut rng, &[3, 4]), rand_tensor(&mut rng, &[4, 2]), rand_tensor(&mut rng, &[5, 4]), rand_tensor(&mut rng, &[4])];
        check(
            |g, ids| {
                let ab = g.matmul(ids[0], ids[1]).unwrap();
                let ct = g.matmul_nt(ids[2], ids[0]).unwrap(); // 5×3
                let tn = g.matmul_tn(ct, ids[2]).unwrap(); // 3×4
                let r = g.add_row(tn, ids[3]).unwrap();
                let s = g.sub_row(r, ids[3]).unwrap();
                let s = g.add_row(s, ids[3]).unwrap();
                let sq = g.row_sq_norms(s).unwrap();
                let cs = g.col_sums(ab).unwrap();
                let a = g.sum_sq(sq);
                let b = g.sum_sq(cs);
                let t = g.add(a, b).unwrap();
                g.scale(t, 0.01)
            },
            &inputs,
        );
    }

    #[test]
    fn elementwise_ops_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut pos = rand_tensor(&mut rng, &[2, 3]);
        for v in pos.data_mut() {
            *v = v.abs() + 0.5;
        }
        let inputs = [rand_tensor(&mut rng, &[2, 3]), pos, Tensor::scalar(1.7)];
        check(
            |g, ids| {
                let lr = g.leaky_relu(ids[0], 0.2);
                let sg = g.sigmoid(ids[0]);
                let m = g.mul(lr, sg).unwrap();
                let rc = g.reciprocal(ids[1]);
                let cl = g.clamp_min(rc, 0.0);
                let d = g.div_scalar(cl, ids[2]).unwrap();
                let s = g.sub(m, d).unwrap();
                let rs = g.reshape(s, &[3, 2]).unwrap();
                let sl = g.slice_cols(rs, 1, 2).unwrap();
                let t = g.sum_sq(sl);
                let u = g.sum(m);
                g.add(t, u).unwrap()
            },
            &inputs,
        );
    }

    #[test]
    fn convolutions_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let inputs = [
            rand_tensor(&mut rng, &[2, 2, 5, 5]),
            rand_tensor(&mut rng, &[3, 2, 3, 3]),
            rand_tensor(&mut rng, &[3]),
            rand_tensor(&mut rng, &[3, 2, 4, 4]),
            rand_tensor(&mut rng, &[2]),
        ];
        check(
            |g, ids| {
                let c = g.conv2d(ids[0], ids[1], ids[2], 2, 1).unwrap(); // [2,3,3,3]
                let t = g.conv_transpose2d(c, ids[3], ids[4], 2, 1).unwrap(); // [2,2,6,6]
                g.sum_sq(t)
            },
            &inputs,
        );
    }

    #[test]
    fn identity_one_by_one_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let x = rand_tensor(&mut rng, &[2, 3, 4, 4]);
        let mut w = Tensor::zeros(&[3, 3, 1, 1]);
        for c in 0..3 {
            w.data_mut()[c * 3 + c] = 1.0;
        }
        let mut g = Graph::new();
        let (xi, wi, bi) = (g.constant(x.clone()), g.param(w), g.param(Tensor::zeros(&[3])));
        let y = g.conv2d(xi, wi, bi, 1, 0).unwrap();
        assert_eq!(g.value(y), &x);
    }

    #[test]
    fn min_cosine_matches_finite_differences() {
        let codes = Tensor::from_rows(&[&[1.0, 0.0], &[-0.5, 0.75f64.sqrt()], &[-0.5, -(0.75f64.sqrt())]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let inputs = [rand_tensor(&mut rng, &[6, 2])];
        check(
            |g, ids| {
                let d = g.min_cosine_distance(ids[0], &codes).unwrap();
                g.sum(d)
            },
            &inputs,
        );
    }

    #[test]
    fn zero_rows_have_unit_distance_and_no_gradient() {
        let codes = Tensor::from_rows(&[&[1.0], &[-1.0]]).unwrap();
        let mut g = Graph::new();
        let x = g.param(Tensor::from_rows(&[&[0.0], &[2.0]]).unwrap());
        let d = g.min_cosine_distance(x, &codes).unwrap();
        assert_eq!(g.value(d).data(), &[1.0, 0.0]);
        let l = g.sum(d);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 0.0]);
    }
}
