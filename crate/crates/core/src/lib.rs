//! Kernel spectral clustering with a learned encoder and decoder.
//!
//! An encoder `phi` and decoder `psi` are trained jointly with a projection
//! matrix `U` that lives on the Stiefel manifold (`UᵀU = I`). Score vectors
//! `e_i = Uᵀ phi_c(x_i)` are pushed onto the rays of a regular simplex so that
//! each cluster forms a line through the origin, and decoding points along
//! those rays (`x* = psi(U e*)`) exaggerates what a cluster is about.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the command line
//! tool and everything else that touches the operating system live in the
//! `genksc` companion crate.
//!
//! Module map:
//!
//! * [`tensor`], [`linalg`], [`autodiff`], [`nn`]: dense arithmetic, the
//!   Jacobi eigensolver, the reverse-mode tape and the layer zoo.
//! * [`ksc`]: classical kernel spectral clustering on a fixed kernel.
//! * [`geometry`], [`metrics`]: simplex codes, cosine assignment and
//!   clustering quality scores.
//! * [`objective`]: the trainable model and its four-term loss.
//! * [`optim`]: Adam and Cayley-Adam.
//! * [`train`], [`data`]: the training loop, evaluation and datasets.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autodiff;
mod conv;
pub mod data;
mod error;
pub mod geometry;
pub mod ksc;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod objective;
pub mod optim;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
