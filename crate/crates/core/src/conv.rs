//! im2col-based kernels for 2-D convolution and its transpose.

use alloc::vec;

use crate::linalg::{gemm_nn, gemm_nt, gemm_tn};

/// Spatial geometry of one convolution: a `channels × height × width` image
/// scanned by a square `kernel` with the given stride and zero padding,
/// producing `out_h × out_w` window positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Window {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Window {
    pub fn new(channels: usize, height: usize, width: usize, kernel: usize, stride: usize, padding: usize) -> Option<Self> {
        let span_h = height + 2 * padding;
        let span_w = width + 2 * padding;
        if stride == 0 || kernel == 0 || span_h < kernel || span_w < kernel {
            return None;
        }
        Some(Self {
            channels,
            height,
            width,
            kernel,
            stride,
            padding,
            out_h: (span_h - kernel) / stride + 1,
            out_w: (span_w - kernel) / stride + 1,
        })
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    fn source(&self, out: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (out * self.stride + k).checked_sub(self.padding)?;
        (pos < extent).then_some(pos)
    }

    pub fn im2col(&self, image: &[f64], cols: &mut [f64]) {
        let (k, n) = (self.kernel, self.col_cols());
        for c in 0..self.channels {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let dst = &mut cols[row * n..(row + 1) * n];
                    for oy in 0..self.out_h {
                        let iy = self.source(oy, ki, self.height);
                        for ox in 0..self.out_w {
                            let ix = self.source(ox, kj, self.width);
                            dst[oy * self.out_w + ox] = match (iy, ix) {
                                (Some(y), Some(x)) => image[(c * self.height + y) * self.width + x],
                                _ => 0.0,
                            };
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds columns back into an image (adjoint of [`Window::im2col`]).
    pub fn col2im(&self, cols: &[f64], image: &mut [f64]) {
        let (k, n) = (self.kernel, self.col_cols());
        for c in 0..self.channels {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let src = &cols[row * n..(row + 1) * n];
                    for oy in 0..self.out_h {
                        let Some(y) = self.source(oy, ki, self.height) else {
                            continue;
                        };
                        for ox in 0..self.out_w {
                            if let Some(x) = self.source(ox, kj, self.width) {
                                image[(c * self.height + y) * self.width + x] += src[oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Forward convolution. `input: b × window.image_len()`,
/// `weight: out_channels × window.col_rows()`; returns
/// `b × out_channels × out_h × out_w`.
pub(crate) fn conv_forward(w: &Window, input: &[f64], weight: &[f64], bias: &[f64], batch: usize) -> alloc::vec::Vec<f64> {
    let co = bias.len();
    let (rows, n) = (w.col_rows(), w.col_cols());
    let mut cols = vec![0.0; rows * n];
    let mut out = vec![0.0; batch * co * n];
    for b in 0..batch {
        w.im2col(&input[b * w.image_len()..(b + 1) * w.image_len()], &mut cols);
        let dst = &mut out[b * co * n..(b + 1) * co * n];
        for (c, &bc) in bias.iter().enumerate() {
            dst[c * n..(c + 1) * n].fill(bc);
        }
        gemm_nn(weight, &cols, dst, co, rows, n);
    }
    out
}

/// Gradients of [`conv_forward`]. Accumulates into the provided buffers;
/// `d_input` may be `None` when the input needs no gradient.
pub(crate) fn conv_backward(
    w: &Window,
    input: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    batch: usize,
    co: usize,
    mut d_input: Option<&mut [f64]>,
    d_weight: &mut [f64],
    d_bias: &mut [f64],
) {
    let (rows, n) = (w.col_rows(), w.col_cols());
    let mut cols = vec![0.0; rows * n];
    let mut dcols = vec![0.0; rows * n];
    for b in 0..batch {
        let g = &grad_out[b * co * n..(b + 1) * co * n];
        for c in 0..co {
            d_bias[c] += g[c * n..(c + 1) * n].iter().sum::<f64>();
        }
        w.im2col(&input[b * w.image_len()..(b + 1) * w.image_len()], &mut cols);
        gemm_nt(g, &cols, d_weight, co, n, rows);
        if let Some(dx) = d_input.as_deref_mut() {
            dcols.fill(0.0);
            gemm_tn(weight, g, &mut dcols, co, rows, n);
            w.col2im(&dcols, &mut dx[b * w.image_len()..(b + 1) * w.image_len()]);
        }
    }
}

/// Transposed convolution. `w` describes the *output* image scanned by the
/// kernel (so `w.out_h × w.out_w` equals the input's spatial extent).
/// `input: b × ci × out_h × out_w`, `weight: ci × w.col_rows()`.
pub(crate) fn conv_transpose_forward(w: &Window, input: &[f64], weight: &[f64], bias: &[f64], batch: usize) -> alloc::vec::Vec<f64> {
    let (rows, n) = (w.col_rows(), w.col_cols());
    let ci = weight.len() / rows;
    let mut cols = vec![0.0; rows * n];
    let mut out = vec![0.0; batch * w.image_len()];
    let plane = w.height * w.width;
    for b in 0..batch {
        cols.fill(0.0);
        gemm_tn(weight, &input[b * ci * n..(b + 1) * ci * n], &mut cols, ci, rows, n);
        let dst = &mut out[b * w.image_len()..(b + 1) * w.image_len()];
        for (c, &bc) in bias.iter().enumerate() {
            dst[c * plane..(c + 1) * plane].fill(bc);
        }
        w.col2im(&cols, dst);
    }
    out
}

pub(crate) fn conv_transpose_backward(
    w: &Window,
    input: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    batch: usize,
    mut d_input: Option<&mut [f64]>,
    d_weight: &mut [f64],
    d_bias: &mut [f64],
) {
    let (rows, n) = (w.col_rows(), w.col_cols());
    let ci = weight.len() / rows;
    let plane = w.height * w.width;
    let mut dcols = vec![0.0; rows * n];
    for b in 0..batch {
        let g = &grad_out[b * w.image_len()..(b + 1) * w.image_len()];
        for (c, db) in d_bias.iter_mut().enumerate() {
            *db += g[c * plane..(c + 1) * plane].iter().sum::<f64>();
        }
        w.im2col(g, &mut dcols);
        let x = &input[b * ci * n..(b + 1) * ci * n];
        gemm_nt(x, &dcols, d_weight, ci, n, rows);
        if let Some(dx) = d_input.as_deref_mut() {
            gemm_nn(weight, &dcols, &mut dx[b * ci * n..(b + 1) * ci * n], ci, rows, n);
        }
    }
}
