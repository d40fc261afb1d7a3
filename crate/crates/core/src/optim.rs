//! Adam for unconstrained parameters and Cayley-Adam for the projection
//! matrix on the Stiefel manifold.

use crate::error::shape_err;
use crate::linalg::{orthonormality_error, orthonormalize, Lu};
use crate::{Error, Result, Tensor};

/// Drift beyond which the Stiefel step re-orthonormalizes `U`.
pub const REORTHONORMALIZE_ABOVE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Tensor,
    pub v: Tensor,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(shape: &[usize], config: AdamConfig) -> Self {
        Self {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            t: 0,
            config,
        }
    }

    /// One bias-corrected Adam update of `param` in place.
    pub fn step(&mut self, param: &mut Tensor, grad: &Tensor) -> Result<()> {
        if param.shape() != grad.shape() || param.shape() != self.m.shape() {
            return Err(shape_err!(
                "param {:?}, grad {:?} and state {:?} differ",
                param.shape(),
                grad.shape(),
                self.m.shape()
            ));
        }
        grad.ensure_finite("adam gradient")?;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.t += 1;
        let c1 = 1.0 - libm::pow(beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(beta2, self.t as f64);
        let (m, v) = (self.m.data_mut(), self.v.data_mut());
        for (((p, &g), mi), vi) in param.data_mut().iter_mut().zip(grad.data()).zip(m).zip(v) {
            *mi = beta1 * *mi + (1.0 - beta1) * g;
            *vi = beta2 * *vi + (1.0 - beta2) * g * g;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *p -= lr * m_hat / (libm::sqrt(v_hat) + eps);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StiefelConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Caps the step at `2q / ‖W‖_F`, keeping the Cayley map well inside its
    /// accurate range.
    pub q: f64,
}

impl Default for StiefelConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            q: 0.5,
        }
    }
}

/// Cayley-Adam state for one `n×p` frame.
///
/// The second moment is a single scalar over the whole gradient matrix so
/// that rescaling keeps the generator exactly skew-symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct StiefelState {
    pub momentum: Tensor,
    pub second_moment: f64,
    pub t: u64,
    pub config: StiefelConfig,
    pub reorthonormalizations: u64,
}

/// Diagnostics of one Cayley step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StiefelStep {
    pub tau: f64,
    pub halvings: u32,
    /// `‖UᵀU − I‖_F` right after the Cayley update.
    pub drift: f64,
    pub reorthonormalized: bool,
}

impl StiefelState {
    pub fn new(shape: &[usize], config: StiefelConfig) -> Self {
        Self {
            momentum: Tensor::zeros(shape),
            second_moment: 0.0,
            t: 0,
            config,
            reorthonormalizations: 0,
        }
    }

    /// One Cayley-Adam step on `u` (`n×p`, orthonormal columns) with
    /// Euclidean gradient `grad`.
    pub fn step(&mut self, u: &mut Tensor, grad: &Tensor) -> Result<StiefelStep> {
        let (n, p) = u.dims2()?;
        if grad.shape() != u.shape() || self.momentum.shape() != u.shape() {
            return Err(shape_err!(
                "frame {:?}, gradient {:?} and momentum {:?} differ",
                u.shape(),
                grad.shape(),
                self.momentum.shape()
            ));
        }
        grad.ensure_finite("stiefel gradient")?;
        let StiefelConfig { lr, beta1, beta2, eps, q } = self.config;
        self.t += 1;
        let t = self.t as f64;

        self.momentum = self.momentum.scale(beta1).add(&grad.scale(1.0 - beta1))?;
        let g2 = grad.dot(grad)?;
        self.second_moment = beta2 * self.second_moment + (1.0 - beta2) * g2;
        let v_hat = self.second_moment / (1.0 - libm::pow(beta2, t));
        let r = (1.0 - libm::pow(beta1, t)) * (libm::sqrt(v_hat) + eps);
        let scaled = self.momentum.scale(1.0 / r);

        let w = skew_generator(u, &scaled)?;
        // Keep the momentum in the tangent space at the current point.
        self.momentum = w.matmul(u)?.scale(r);

        let mut tau = lr.min(2.0 * q / (w.norm() + eps));
        let mut halvings = 0;
        let next = loop {
            match cayley_transform(u, &w, tau) {
                Ok(next) => break next,
                Err(Error::Singular) if halvings < 5 => {
                    tau *= 0.5;
                    halvings += 1;
                }
                Err(e) => return Err(e),
            }
        };
        debug_assert_eq!(next.shape(), &[n, p]);
        let drift = orthonormality_error(&next)?;
        let reorthonormalized = drift > REORTHONORMALIZE_ABOVE;
        *u = if reorthonormalized {
            self.reorthonormalizations += 1;
            orthonormalize(&next)?
        } else {
            next
        };
        Ok(StiefelStep {
            tau,
            halvings,
            drift,
            reorthonormalized,
        })
    }
}

/// `W = Ŵ − Ŵᵀ` with `Ŵ = M Uᵀ − ½ U (Uᵀ M Uᵀ)`. `W U` is the tangent-space
/// projection of `M` at `U`.
pub fn skew_generator(u: &Tensor, m: &Tensor) -> Result<Tensor> {
    let mut w_hat = m.matmul_nt(u)?;
    let utm = u.matmul_tn(m)?; // p×p
    let correction = u.matmul(&utm)?.matmul_nt(u)?;
    for (a, c) in w_hat.data_mut().iter_mut().zip(correction.data()) {
        *a -= 0.5 * c;
    }
    w_hat.sub(&w_hat.transpose()?)
}

/// Descent-direction Cayley retraction `(I + τ/2 W)⁻¹ (I − τ/2 W) U`.
///
/// For skew-symmetric `W` this is an orthogonal map, so orthonormal columns
/// stay orthonormal.
pub fn cayley_transform(u: &Tensor, w: &Tensor, tau: f64) -> Result<Tensor> {
    let n = u.rows();
    let half = 0.5 * tau;
    let eye = Tensor::identity(n);
    let lhs = eye.add(&w.scale(half))?;
    let rhs = eye.sub(&w.scale(half))?.matmul(u)?;
    Lu::factor(&lhs)?.solve(&rhs)
}
