//! Adaptive tanh hashing activation.
//!
//! Each code bit `i` owns a learnable scale `α_i > 0` and maps its input
//! through `tanh(α_i · s)`. As `α_i` grows the unit approaches `sign(s)`,
//! so the layer can be trained by backpropagation and still emit near-binary
//! activations. The penalty `λ Σ α_i⁻²` is part of the training objective,
//! not of the activation value; it rewards large scales.

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

pub const DEFAULT_ALPHA_MIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ATanhLayer {
    alpha: Vec<f64>,
    lambda: f64,
    alpha_min: f64,
}

impl ATanhLayer {
    /// One unit per bit, every `α_i = 1`.
    pub fn new(bits: usize, lambda: f64) -> Result<Self> {
        Self::with_alpha(vec![1.0; bits], lambda)
    }

    pub fn with_alpha(alpha: Vec<f64>, lambda: f64) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::invalid("ATanh layer needs at least one bit"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        if alpha.iter().any(|a| !(a.is_finite() && *a >= DEFAULT_ALPHA_MIN)) {
            return Err(Error::invalid(format!(
                "every alpha must be finite and >= {DEFAULT_ALPHA_MIN}"
            )));
        }
        Ok(Self {
            alpha,
            lambda,
            alpha_min: DEFAULT_ALPHA_MIN,
        })
    }

    pub fn bits(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha_min(&self) -> f64 {
        self.alpha_min
    }

    pub fn mean_alpha(&self) -> f64 {
        self.alpha.iter().sum::<f64>() / self.alpha.len() as f64
    }

    pub(crate) fn alpha_mut(&mut self) -> &mut [f64] {
        &mut self.alpha
    }

    /// Sets every scale to `value` (fixed-schedule and frozen variants).
    pub fn set_all_alpha(&mut self, value: f64) {
        let value = value.max(self.alpha_min);
        self.alpha.iter_mut().for_each(|a| *a = value);
    }

    /// Clamps every scale to at least `alpha_min`.
    pub fn clamp_alpha(&mut self) {
        let floor = self.alpha_min;
        for a in &mut self.alpha {
            if a.is_nan() || *a < floor {
                *a = floor;
            }
        }
    }

    fn check(&self, s: &DenseMatrix) -> Result<()> {
        if s.cols() != self.bits() {
            return Err(Error::invalid(format!(
                "ATanh expects {} columns, got {}",
                self.bits(),
                s.cols()
            )));
        }
        Ok(())
    }

    fn check_pair(&self, s: &DenseMatrix, upstream: &DenseMatrix) -> Result<()> {
        self.check(s)?;
        if upstream.shape() != s.shape() {
            return Err(Error::invalid(format!(
                "upstream shape {:?} does not match input {:?}",
                upstream.shape(),
                s.shape()
            )));
        }
        Ok(())
    }

    /// `a_bi = tanh(α_i · s_bi)`.
    pub fn forward(&self, s: &DenseMatrix) -> Result<DenseMatrix> {
        self.check(s)?;
        let mut out = s.clone();
        for b in 0..out.rows() {
            for (v, &alpha) in out.row_mut(b).iter_mut().zip(&self.alpha) {
                *v = (alpha * *v).tanh();
            }
        }
        Ok(out)
    }

    /// `upstream ⊙ α_i (1 − tanh²(α_i s))`.
    pub fn grad_input(&self, s: &DenseMatrix, upstream: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_pair(s, upstream)?;
        let mut out = upstream.clone();
        for b in 0..out.rows() {
            let srow = s.row(b);
            for ((g, &alpha), &sv) in out.row_mut(b).iter_mut().zip(&self.alpha).zip(srow) {
                let t = (alpha * sv).tanh();
                *g *= alpha * (1.0 - t * t);
            }
        }
        Ok(out)
    }

    /// Gradient of `mean_b Σ_i upstream_bi · a_bi + λ Σ_i α_i⁻²` w.r.t. each
    /// `α_i`: the batch mean of `upstream · (1 − tanh²(α_i s)) · s`, plus the
    /// penalty term `−2λ α_i⁻³` once per bit.
    ///
    /// `upstream` holds per-sample gradients; pass `batch × ∂L/∂a` when `L`
    /// is already a batch mean.
    pub fn grad_alpha(&self, s: &DenseMatrix, upstream: &DenseMatrix) -> Result<Vec<f64>> {
        self.check_pair(s, upstream)?;
        let batch = s.rows();
        let mut grad = vec![0.0; self.bits()];
        for b in 0..batch {
            for (((acc, &alpha), &sv), &g) in grad
                .iter_mut()
                .zip(&self.alpha)
                .zip(s.row(b))
                .zip(upstream.row(b))
            {
                let t = (alpha * sv).tanh();
                *acc += g * (1.0 - t * t) * sv;
            }
        }
        let scale = if batch > 0 { 1.0 / batch as f64 } else { 0.0 };
        for (acc, &alpha) in grad.iter_mut().zip(&self.alpha) {
            *acc = *acc * scale - 2.0 * self.lambda / (alpha * alpha * alpha);
        }
        Ok(grad)
    }

    /// `λ Σ_i α_i⁻²`.
    pub fn reg_loss(&self) -> f64 {
        self.lambda * self.alpha.iter().map(|a| 1.0 / (a * a)).sum::<f64>()
    }
}

/// Elementwise sign with `sign(0) = +1`.
pub fn binarize(a: &DenseMatrix) -> DenseMatrix {
    a.map(|v| if v >= 0.0 { 1.0 } else { -1.0 })
}
