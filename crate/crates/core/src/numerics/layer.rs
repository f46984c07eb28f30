use serde::{Deserialize, Serialize};

use super::{DenseMatrix, RngState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative w.r.t. the pre-activation. ReLU uses 0 at exactly 0.
    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Glorot-uniform weights: entries from `[-L, L]`, `L = sqrt(6 / (in + out))`.
pub fn glorot_init(in_dim: usize, out_dim: usize, rng: &mut RngState) -> Result<DenseMatrix> {
    if in_dim == 0 || out_dim == 0 {
        return Err(Error::invalid(format!(
            "glorot_init needs nonzero dims, got {in_dim}x{out_dim}"
        )));
    }
    let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
    Ok(DenseMatrix::from_fn(in_dim, out_dim, |_, _| {
        rng.uniform(-limit, limit)
    }))
}

/// Affine layer `out = act(input · W + b)` with `W` stored as `in_dim × out_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weights: DenseMatrix,
    bias: Vec<f64>,
    activation: Activation,
}

/// Gradients produced by [`DenseLayer::backward`].
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub input: DenseMatrix,
    pub weights: DenseMatrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weights: DenseMatrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.cols() {
            return Err(Error::invalid(format!(
                "bias length {} does not match output dim {}",
                bias.len(),
                weights.cols()
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// Glorot weights, zero bias.
    pub fn glorot(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut RngState) -> Result<Self> {
        let weights = glorot_init(in_dim, out_dim, rng)?;
        Self::new(weights, vec![0.0; out_dim], activation)
    }

    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &DenseMatrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Mutable `(weights, bias)` storage.
    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (self.weights.as_mut_slice(), &mut self.bias)
    }

    /// Returns `(pre_activation, output)`.
    pub fn forward(&self, input: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
        if input.cols() != self.in_dim() {
            return Err(Error::invalid(format!(
                "layer expects {} input columns, got {}",
                self.in_dim(),
                input.cols()
            )));
        }
        let mut pre = input.matmul(&self.weights)?;
        pre.add_row_vector(&self.bias)?;
        let act = self.activation;
        let out = match act {
            Activation::Identity => pre.clone(),
            Activation::Relu => pre.map(|z| act.apply(z)),
        };
        Ok((pre, out))
    }

    /// Gradients of `sum(upstream ⊙ output)` w.r.t. input, weights and bias.
    pub fn backward(
        &self,
        input: &DenseMatrix,
        pre_activation: &DenseMatrix,
        upstream: &DenseMatrix,
    ) -> Result<LayerGrads> {
        let batch = input.rows();
        if input.cols() != self.in_dim()
            || pre_activation.shape() != (batch, self.out_dim())
            || upstream.shape() != pre_activation.shape()
        {
            return Err(Error::invalid(format!(
                "backward shapes: input {:?}, pre {:?}, upstream {:?} for layer {}x{}",
                input.shape(),
                pre_activation.shape(),
                upstream.shape(),
                self.in_dim(),
                self.out_dim()
            )));
        }
        let act = self.activation;
        let delta = match act {
            Activation::Identity => upstream.clone(),
            Activation::Relu => upstream.zip_map(pre_activation, |g, z| g * act.derivative(z))?,
        };
        Ok(LayerGrads {
            input: delta.matmul_nt(&self.weights)?,
            weights: input.matmul_tn(&delta)?,
            bias: delta.column_sums(),
        })
    }
}
