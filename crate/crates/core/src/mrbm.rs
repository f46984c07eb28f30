//! Exact enumeration of tiny multimodal RBMs.
//!
//! With binary units `x ∈ {0,1}^dx`, `y ∈ {0,1}^dy`, `h ∈ {0,1}^dh` and
//!
//! ```text
//! E(x, y, h) = −xᵀW_x h − yᵀW_y h − xᵀb_x − yᵀb_y − hᵀb_h,   P = exp(−E) / Z,
//! ```
//!
//! the expected negative log-likelihood under a data distribution `P_D`
//! splits exactly into
//!
//! ```text
//! E_{P_D(x)}[ KL(P_D(y|x) ‖ P_θ(y|x)) ] + KL(P_D(x) ‖ P_θ(x)) + H(P_D(x, y))
//! ```
//!
//! (and symmetrically with the roles of x and y swapped). Everything here is
//! brute force over all `2^(dx+dy+dh)` states, so the identity can be checked
//! to rounding error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, RngState};
use crate::par::{self, Execution};

/// Largest `dx + dy + dh` that will be enumerated.
pub const MAX_TOTAL_UNITS: usize = 18;

#[derive(Debug, Clone, PartialEq)]
pub struct MrbmParams {
    pub w_x: DenseMatrix,
    pub w_y: DenseMatrix,
    pub b_x: Vec<f64>,
    pub b_y: Vec<f64>,
    pub b_h: Vec<f64>,
}

impl MrbmParams {
    pub fn zeros(dim_x: usize, dim_y: usize, dim_h: usize) -> Self {
        Self {
            w_x: DenseMatrix::zeros(dim_x, dim_h),
            w_y: DenseMatrix::zeros(dim_y, dim_h),
            b_x: vec![0.0; dim_x],
            b_y: vec![0.0; dim_y],
            b_h: vec![0.0; dim_h],
        }
    }

    /// Standard-normal weights and biases scaled by `scale`.
    pub fn random(dim_x: usize, dim_y: usize, dim_h: usize, scale: f64, rng: &mut RngState) -> Self {
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| scale * rng.standard_normal()).collect() };
        let w_x = DenseMatrix::from_vec(dim_x, dim_h, draw(dim_x * dim_h)).expect("finite draws");
        let w_y = DenseMatrix::from_vec(dim_y, dim_h, draw(dim_y * dim_h)).expect("finite draws");
        Self {
            w_x,
            w_y,
            b_x: draw(dim_x),
            b_y: draw(dim_y),
            b_h: draw(dim_h),
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.b_x.len(), self.b_y.len(), self.b_h.len())
    }

    fn validate(&self) -> Result<()> {
        let (dx, dy, dh) = self.dims();
        if self.w_x.shape() != (dx, dh) || self.w_y.shape() != (dy, dh) {
            return Err(Error::invalid("MRBM weight shapes disagree with bias lengths"));
        }
        if dx + dy + dh > MAX_TOTAL_UNITS {
            return Err(Error::Capacity(format!(
                "{dx}+{dy}+{dh} units exceed the enumeration bound of {MAX_TOTAL_UNITS}"
            )));
        }
        Ok(())
    }

    /// Energy for states given as bitmasks (bit `i` = unit `i`).
    fn energy_bits(&self, x: usize, y: usize, h: usize) -> f64 {
        let (dx, dy, dh) = self.dims();
        let on = |mask: usize, i: usize| mask >> i & 1 == 1;
        let mut e = 0.0;
        for j in (0..dh).filter(|&j| on(h, j)) {
            e -= self.b_h[j];
            for i in (0..dx).filter(|&i| on(x, i)) {
                e -= self.w_x.get(i, j);
            }
            for i in (0..dy).filter(|&i| on(y, i)) {
                e -= self.w_y.get(i, j);
            }
        }
        for i in (0..dx).filter(|&i| on(x, i)) {
            e -= self.b_x[i];
        }
        for i in (0..dy).filter(|&i| on(y, i)) {
            e -= self.b_y[i];
        }
        e
    }
}

fn to_mask(v: &[f64], what: &str) -> Result<usize> {
    let mut mask = 0;
    for (i, &b) in v.iter().enumerate() {
        if b == 1.0 {
            mask |= 1 << i;
        } else if b != 0.0 {
            return Err(Error::invalid(format!("{what}[{i}] = {b} is not binary")));
        }
    }
    Ok(mask)
}

/// `E(x, y, h)` for binary vectors.
pub fn energy(params: &MrbmParams, x: &[f64], y: &[f64], h: &[f64]) -> Result<f64> {
    let (dx, dy, dh) = params.dims();
    if x.len() != dx || y.len() != dy || h.len() != dh {
        return Err(Error::invalid(format!(
            "state dims {}/{}/{} do not match model {dx}/{dy}/{dh}",
            x.len(),
            y.len(),
            h.len()
        )));
    }
    Ok(params.energy_bits(to_mask(x, "x")?, to_mask(y, "y")?, to_mask(h, "h")?))
}

/// Probabilities of every `(x, y, h)` state; index `(x << (dy+dh)) | (y << dh) | h`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    pub dims: (usize, usize, usize),
    pub probs: Vec<f64>,
    pub log_partition: f64,
}

impl JointTable {
    pub fn prob(&self, x: usize, y: usize, h: usize) -> f64 {
        let (_, dy, dh) = self.dims;
        self.probs[(x << (dy + dh)) | (y << dh) | h]
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn exact_joint(params: &MrbmParams) -> Result<JointTable> {
    params.validate()?;
    let (dx, dy, dh) = params.dims();
    let mut neg_e = Vec::with_capacity(1 << (dx + dy + dh));
    for x in 0..1usize << dx {
        for y in 0..1usize << dy {
            for h in 0..1usize << dh {
                neg_e.push(-params.energy_bits(x, y, h));
            }
        }
    }
    let log_z = log_sum_exp(&neg_e);
    Ok(JointTable {
        dims: (dx, dy, dh),
        probs: neg_e.into_iter().map(|v| (v - log_z).exp()).collect(),
        log_partition: log_z,
    })
}

/// Distribution over `(x, y)` pairs; index `x · 2^dy + y`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTable {
    pub dim_x: usize,
    pub dim_y: usize,
    pub probs: Vec<f64>,
}

impl PairTable {
    #[inline]
    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.probs[(x << self.dim_y) | y]
    }

    fn ny(&self) -> usize {
        1 << self.dim_y
    }

    fn nx(&self) -> usize {
        1 << self.dim_x
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        (0..self.nx()).map(|x| (0..self.ny()).map(|y| self.prob(x, y)).sum()).collect()
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        (0..self.ny()).map(|y| (0..self.nx()).map(|x| self.prob(x, y)).sum()).collect()
    }

    /// Same distribution with the roles of x and y exchanged.
    pub fn swapped(&self) -> PairTable {
        let mut probs = vec![0.0; self.probs.len()];
        for x in 0..self.nx() {
            for y in 0..self.ny() {
                probs[(y << self.dim_x) | x] = self.prob(x, y);
            }
        }
        PairTable {
            dim_x: self.dim_y,
            dim_y: self.dim_x,
            probs,
        }
    }
}

/// `P_θ(x, y) = Σ_h P_θ(x, y, h)`.
pub fn marginal_xy(params: &MrbmParams) -> Result<PairTable> {
    let joint = exact_joint(params)?;
    let (dx, dy, dh) = joint.dims;
    let probs = joint.probs.chunks(1 << dh).map(|c| c.iter().sum()).collect();
    Ok(PairTable {
        dim_x: dx,
        dim_y: dy,
        probs,
    })
}

/// Explicit data distribution over `(x, y)` configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPmf(PairTable);

impl DataPmf {
    pub fn new(dim_x: usize, dim_y: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != 1 << (dim_x + dim_y) {
            return Err(Error::invalid(format!(
                "{} probabilities for {dim_x}+{dim_y} binary units",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("probabilities must be finite and >= 0"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(DataPmf(PairTable { dim_x, dim_y, probs }))
    }

    /// Random pmf; each cell is zeroed with probability `sparsity` (at least
    /// one cell stays positive).
    pub fn random(dim_x: usize, dim_y: usize, sparsity: f64, rng: &mut RngState) -> Self {
        let n = 1usize << (dim_x + dim_y);
        let mut w: Vec<f64> = (0..n)
            .map(|_| if rng.unit() < sparsity { 0.0 } else { -rng.unit().max(1e-300).ln() })
            .collect();
        if w.iter().all(|&v| v == 0.0) {
            w[rng.index(n)] = 1.0;
        }
        let total: f64 = w.iter().sum();
        let mut probs: Vec<f64> = w.iter().map(|v| v / total).collect();
        // Absorb rounding so the table sums to 1 within 1e-12 exactly as validated.
        let drift = 1.0 - probs.iter().sum::<f64>();
        let k = probs.iter().position(|&p| p > 0.0).unwrap();
        probs[k] += drift;
        DataPmf::new(dim_x, dim_y, probs).expect("normalized random pmf")
    }

    pub fn from_model(params: &MrbmParams) -> Result<Self> {
        Ok(DataPmf(marginal_xy(params)?))
    }

    pub fn table(&self) -> &PairTable {
        &self.0
    }

    pub fn swapped(&self) -> DataPmf {
        DataPmf(self.0.swapped())
    }
}

fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// `KL(p ‖ q)`, skipping cells where `p = 0`.
fn kl(p: &[f64], q: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(Error::Numerical("model assigns zero probability to a data point".into()));
            }
            total += pi * (pi / qi).ln();
        }
    }
    Ok(total)
}

fn check_support(model: &PairTable, data: &DataPmf) -> Result<()> {
    let d = data.table();
    if (d.dim_x, d.dim_y) != (model.dim_x, model.dim_y) {
        return Err(Error::invalid(format!(
            "data pmf over {}/{} units, model over {}/{}",
            d.dim_x, d.dim_y, model.dim_x, model.dim_y
        )));
    }
    Ok(())
}

/// `−Σ P_D(x, y) log P_θ(x, y)`.
pub fn nll(params: &MrbmParams, data: &DataPmf) -> Result<f64> {
    let model = marginal_xy(params)?;
    nll_from_table(&model, data)
}

fn nll_from_table(model: &PairTable, data: &DataPmf) -> Result<f64> {
    check_support(model, data)?;
    let mut total = 0.0;
    for (&pd, &pm) in data.table().probs.iter().zip(&model.probs) {
        if pd > 0.0 {
            if pm <= 0.0 {
                return Err(Error::Numerical("model assigns zero probability to a data point".into()));
            }
            total -= pd * pm.ln();
        }
    }
    Ok(total)
}

/// Which modality the decomposition conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Conditioning {
    /// Cross-modal term over `P(y|x)`, single-modality term over `P(x)`.
    OnX,
    /// Cross-modal term over `P(x|y)`, single-modality term over `P(y)`.
    OnY,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub cross_modal: f64,
    pub single_modal: f64,
    /// Joint entropy of the data distribution.
    pub constant: f64,
}

impl Decomposition {
    pub fn total(&self) -> f64 {
        self.cross_modal + self.single_modal + self.constant
    }
}

/// The three terms of the decomposition, each computed from its own
/// definition.
pub fn decompose(params: &MrbmParams, data: &DataPmf, conditioning: Conditioning) -> Result<Decomposition> {
    let model = marginal_xy(params)?;
    check_support(&model, data)?;
    let (model, data) = match conditioning {
        Conditioning::OnX => (model, data.table().clone()),
        Conditioning::OnY => (model.swapped(), data.table().swapped()),
    };
    let pd_x = data.marginal_x();
    let pm_x = model.marginal_x();
    let ny = data.ny();
    let mut cross = 0.0;
    for x in 0..data.nx() {
        if pd_x[x] == 0.0 {
            continue;
        }
        let pd_cond: Vec<f64> = (0..ny).map(|y| data.prob(x, y) / pd_x[x]).collect();
        let pm_cond: Vec<f64> = (0..ny).map(|y| model.prob(x, y) / pm_x[x]).collect();
        cross += pd_x[x] * kl(&pd_cond, &pm_cond)?;
    }
    Ok(Decomposition {
        cross_modal: cross,
        single_modal: kl(&pd_x, &pm_x)?,
        constant: entropy(&data.probs),
    })
}

/// Right-hand side of the decomposition conditioned on x.
pub fn decomposition_rhs(params: &MrbmParams, data: &DataPmf) -> Result<f64> {
    Ok(decompose(params, data, Conditioning::OnX)?.total())
}

/// Result of checking the identity on random instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub trials: usize,
    /// Max over trials of `|nll − rhs|` conditioning on x.
    pub max_abs_diff_x: f64,
    /// Same, conditioning on y.
    pub max_abs_diff_y: f64,
    pub min_cross_modal: f64,
    pub min_single_modal: f64,
}

impl IdentityCheck {
    pub fn max_abs_diff(&self) -> f64 {
        self.max_abs_diff_x.max(self.max_abs_diff_y)
    }
}

/// Draws `trials` random (params, pmf) pairs at the given dims and compares
/// `nll` with both decomposition forms.
pub fn check_identity(dims: (usize, usize, usize), trials: usize, seed: u64) -> Result<IdentityCheck> {
    let (dx, dy, dh) = dims;
    if dx == 0 || dy == 0 || dh == 0 {
        return Err(Error::invalid("every MRBM layer needs at least one unit"));
    }
    MrbmParams::zeros(dx, dy, dh).validate()?;
    let base = RngState::new(seed);
    let results = par::map_indexed(Execution::default(), trials, |t| -> Result<(f64, f64, f64, f64)> {
        let mut rng = base.derive(t as u64);
        let params = MrbmParams::random(dx, dy, dh, 1.0, &mut rng);
        let data = DataPmf::random(dx, dy, 0.2, &mut rng);
        let lhs = nll(&params, &data)?;
        let on_x = decompose(&params, &data, Conditioning::OnX)?;
        let on_y = decompose(&params, &data, Conditioning::OnY)?;
        Ok((
            (lhs - on_x.total()).abs(),
            (lhs - on_y.total()).abs(),
            on_x.cross_modal.min(on_y.cross_modal),
            on_x.single_modal.min(on_y.single_modal),
        ))
    });
    let mut check = IdentityCheck {
        trials,
        max_abs_diff_x: 0.0,
        max_abs_diff_y: 0.0,
        min_cross_modal: f64::INFINITY,
        min_single_modal: f64::INFINITY,
    };
    for r in results {
        let (dxv, dyv, c, s) = r?;
        check.max_abs_diff_x = check.max_abs_diff_x.max(dxv);
        check.max_abs_diff_y = check.max_abs_diff_y.max(dyv);
        check.min_cross_modal = check.min_cross_modal.min(c);
        check.min_single_modal = check.min_single_modal.min(s);
    }
    Ok(check)
}
