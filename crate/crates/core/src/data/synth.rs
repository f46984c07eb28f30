use serde::{Deserialize, Serialize};

use super::MultimodalDataset;
use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, RngState};
use crate::retrieval::LabelSet;

/// Probability that an item gets a second label in multi-label mode.
const SECOND_LABEL_PROB: f64 = 0.3;

/// Class-structured paired data: each item draws a class `c`, a latent
/// `z ~ N(μ_c, I)`, and observes `x = tanh(A_x z) + ε`, `y = tanh(A_y z) + ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub classes: usize,
    pub latent_dim: usize,
    pub dim_x: usize,
    pub dim_y: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Give some items a second, partially overlapping label.
    #[serde(default)]
    pub multi_label: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            classes: 4,
            latent_dim: 8,
            dim_x: 32,
            dim_y: 16,
            noise_sigma: 0.1,
            seed: 0,
            multi_label: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::invalid("synthetic data needs at least 2 classes"));
        }
        if self.latent_dim == 0 || self.dim_x == 0 || self.dim_y == 0 {
            return Err(Error::invalid("synthetic dims must be >= 1"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise sigma must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Random map with `N(0, 1/latent_dim)` entries, `out × latent`.
fn random_map(out: usize, latent: usize, rng: &mut RngState) -> DenseMatrix {
    let sd = 1.0 / (latent as f64).sqrt();
    DenseMatrix::from_fn(out, latent, |_, _| sd * rng.standard_normal())
}

fn observe(map: &DenseMatrix, z: &[f64], sigma: f64, rng: &mut RngState, out: &mut Vec<f64>) {
    for r in 0..map.rows() {
        let dot: f64 = map.row(r).iter().zip(z).map(|(a, b)| a * b).sum();
        out.push(dot.tanh() + sigma * rng.standard_normal());
    }
}

pub fn synth_generate(config: &SynthConfig) -> Result<MultimodalDataset> {
    config.validate()?;
    let mut rng = RngState::new(config.seed);
    let d = config.latent_dim;
    let a_x = random_map(config.dim_x, d, &mut rng);
    let a_y = random_map(config.dim_y, d, &mut rng);
    let spread = 4.0 / (d as f64).sqrt();
    let means: Vec<Vec<f64>> = (0..config.classes)
        .map(|_| (0..d).map(|_| spread * rng.standard_normal()).collect())
        .collect();

    let mut xs = Vec::with_capacity(config.n * config.dim_x);
    let mut ys = Vec::with_capacity(config.n * config.dim_y);
    let mut labels = Vec::with_capacity(config.n);
    let mut z = vec![0.0; d];
    for _ in 0..config.n {
        let c = rng.index(config.classes);
        for (zk, mu) in z.iter_mut().zip(&means[c]) {
            *zk = mu + rng.standard_normal();
        }
        observe(&a_x, &z, config.noise_sigma, &mut rng, &mut xs);
        observe(&a_y, &z, config.noise_sigma, &mut rng, &mut ys);
        let mut row = vec![false; config.classes];
        row[c] = true;
        if config.multi_label && rng.unit() < SECOND_LABEL_PROB {
            let other = (c + 1 + rng.index(config.classes - 1)) % config.classes;
            row[other] = true;
        }
        labels.push(row);
    }
    let labels = if config.n == 0 {
        LabelSet::one_hot(&[], config.classes)?
    } else {
        LabelSet::from_rows(&labels)?
    };
    MultimodalDataset::new(
        DenseMatrix::from_vec(config.n, config.dim_x, xs)?,
        DenseMatrix::from_vec(config.n, config.dim_y, ys)?,
        labels,
    )
}

/// Index of the single active label of each item (first one if several).
#[cfg(test)]
pub(crate) fn primary_classes(labels: &LabelSet) -> Vec<usize> {
    (0..labels.len())
        .map(|i| (0..labels.num_labels()).find(|&l| labels.has(i, l)).unwrap_or(0))
        .collect()
}
