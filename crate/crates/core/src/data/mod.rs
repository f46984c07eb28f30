//! Paired two-modality datasets, deterministic query/retrieval splits,
//! per-dimension standardization, feature files and a synthetic generator.

mod io;
mod synth;

use serde::{Deserialize, Serialize};

pub use io::{load_dataset, load_matrix, save_dataset, save_matrix_binary, save_matrix_text, DatasetPaths, MATRIX_MAGIC};
pub use synth::{synth_generate, SynthConfig};

use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, RngState};
use crate::retrieval::LabelSet;

/// Row-aligned features of two modalities plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalDataset {
    x: DenseMatrix,
    y: DenseMatrix,
    labels: LabelSet,
}

impl MultimodalDataset {
    pub fn new(x: DenseMatrix, y: DenseMatrix, labels: LabelSet) -> Result<Self> {
        if x.rows() != y.rows() || x.rows() != labels.len() {
            return Err(Error::invalid(format!(
                "row counts differ: x {}, y {}, labels {}",
                x.rows(),
                y.rows(),
                labels.len()
            )));
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::invalid("features must be finite"));
        }
        Ok(Self { x, y, labels })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self) -> &DenseMatrix {
        &self.x
    }

    pub fn y(&self) -> &DenseMatrix {
        &self.y
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn subset(&self, indices: &[usize]) -> MultimodalDataset {
        MultimodalDataset {
            x: self.x.select_rows(indices),
            y: self.y.select_rows(indices),
            labels: self.labels.select(indices),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub query_fraction: f64,
    pub seed: u64,
}

/// Disjoint query and retrieval partitions of one dataset.
#[derive(Debug, Clone)]
pub struct Split {
    pub query: MultimodalDataset,
    pub retrieval: MultimodalDataset,
    pub query_indices: Vec<usize>,
    pub retrieval_indices: Vec<usize>,
}

/// Shuffles indices with `spec.seed` and takes the first
/// `round(n · fraction)` as queries. Both sides keep dataset order.
pub fn split(dataset: &MultimodalDataset, spec: &SplitSpec) -> Result<Split> {
    let f = spec.query_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::invalid(format!("query fraction {f} must lie in (0, 1)")));
    }
    let n = dataset.len();
    let n_query = (n as f64 * f).round() as usize;
    if n_query == 0 || n_query >= n {
        return Err(Error::invalid(format!(
            "query fraction {f} leaves an empty side for {n} items"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    RngState::new(spec.seed).shuffle(&mut order);
    let mut query_indices = order[..n_query].to_vec();
    let mut retrieval_indices = order[n_query..].to_vec();
    query_indices.sort_unstable();
    retrieval_indices.sort_unstable();
    Ok(Split {
        query: dataset.subset(&query_indices),
        retrieval: dataset.subset(&retrieval_indices),
        query_indices,
        retrieval_indices,
    })
}

/// Per-dimension affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation; 1 where a dimension is constant.
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(m: &DenseMatrix) -> Standardizer {
        let n = m.rows().max(1) as f64;
        let mean: Vec<f64> = m.column_sums().into_iter().map(|s| s / n).collect();
        let mut var = vec![0.0; m.cols()];
        for r in 0..m.rows() {
            for ((v, &x), &mu) in var.iter_mut().zip(m.row(r)).zip(&mean) {
                *v += (x - mu) * (x - mu);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, m: &DenseMatrix) -> Result<DenseMatrix> {
        if m.cols() != self.mean.len() {
            return Err(Error::invalid(format!(
                "standardizer fitted on {} dims, got {}",
                self.mean.len(),
                m.cols()
            )));
        }
        let mut out = m.clone();
        for r in 0..out.rows() {
            for ((v, &mu), &sd) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - mu) / sd;
            }
        }
        Ok(out)
    }
}

/// Standardizers for both modalities, fitted on the training side only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStandardizer {
    pub x: Standardizer,
    pub y: Standardizer,
}

impl PairStandardizer {
    pub fn fit(train: &MultimodalDataset) -> Self {
        Self {
            x: Standardizer::fit(train.x()),
            y: Standardizer::fit(train.y()),
        }
    }

    pub fn apply(&self, d: &MultimodalDataset) -> Result<MultimodalDataset> {
        MultimodalDataset::new(self.x.apply(d.x())?, self.y.apply(d.y())?, d.labels().clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy(n: usize) -> MultimodalDataset {
        let x = DenseMatrix::from_fn(n, 2, |r, c| (r * 2 + c) as f64);
        let y = DenseMatrix::from_fn(n, 1, |r, _| -(r as f64));
        let labels = LabelSet::one_hot(&(0..n).map(|i| i % 3).collect::<Vec<_>>(), 3).unwrap();
        MultimodalDataset::new(x, y, labels).unwrap()
    }

    #[test]
    fn quarter_split_sizes() {
        let s = split(&toy(100), &SplitSpec { query_fraction: 0.25, seed: 1 }).unwrap();
        assert_eq!(s.query.len(), 25);
        assert_eq!(s.retrieval.len(), 75);
        for (k, &i) in s.query_indices.iter().enumerate() {
            assert_eq!(s.query.x().row(k), toy(100).x().row(i));
        }
    }

    #[test]
    fn split_deterministic() {
        let spec = SplitSpec { query_fraction: 0.3, seed: 5 };
        let a = split(&toy(50), &spec).unwrap();
        let b = split(&toy(50), &spec).unwrap();
        assert_eq!(a.query_indices, b.query_indices);
        let c = split(&toy(50), &SplitSpec { seed: 6, ..spec }).unwrap();
        assert_ne!(a.query_indices, c.query_indices);
    }

    #[test]
    fn degenerate_fractions() {
        for f in [0.0, 1.0, -0.1, 1.5, f64::NAN, 0.001] {
            assert!(split(&toy(10), &SplitSpec { query_fraction: f, seed: 1 }).is_err(), "{f}");
        }
    }

    #[test]
    fn mismatched_rows_rejected() {
        let x = DenseMatrix::zeros(3, 2);
        let y = DenseMatrix::zeros(2, 2);
        let l = LabelSet::one_hot(&[0, 0, 0], 1).unwrap();
        assert!(MultimodalDataset::new(x, y, l).is_err());
    }

    #[test]
    fn standardizer_zero_mean_unit_variance() {
        let d = toy(40);
        let s = Standardizer::fit(d.x());
        let z = s.apply(d.x()).unwrap();
        for c in 0..2 {
            let col: Vec<f64> = (0..40).map(|r| z.get(r, c)).collect();
            let mean = col.iter().sum::<f64>() / 40.0;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 40.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
        let constant = Standardizer::fit(&DenseMatrix::filled(5, 1, 3.0));
        assert_eq!(constant.scale, vec![1.0]);
        assert!(s.apply(&DenseMatrix::zeros(1, 3)).is_err());
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 2usize..300, f in 0.01f64..0.99, seed in any::<u64>()) {
            let d = toy(n);
            let n_query = (n as f64 * f).round() as usize;
            let result = split(&d, &SplitSpec { query_fraction: f, seed });
            if n_query == 0 || n_query >= n {
                prop_assert!(result.is_err());
            } else {
                let s = result.unwrap();
                let mut all: Vec<usize> = s.query_indices.iter().chain(&s.retrieval_indices).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
                prop_assert_eq!(s.query.len() + s.retrieval.len(), n);
            }
        }
    }
}
