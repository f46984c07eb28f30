//! The two-pathway binary reconstruction network.
//!
//! ```text
//!  x ─ enc_x (n→128→512, ReLU) ─┐
//!                               ├─ s = hx·W_x + hy·W_y + b_h ─ ATanh ─ a ─┬─ dec_x (bits→512→128→n) ─ x̂
//!  y ─ enc_y (n→128→512, ReLU) ─┘                                         └─ dec_y (bits→512→128→n) ─ ŷ
//! ```
//!
//! The joint layer is bilinear in the two encodings and has no nonlinearity
//! of its own; the adaptive tanh is the only squashing between the encoders
//! and the decoders. Decoders read the real-valued activations during
//! training, and codes are `sign(a)` at encoding time.

mod checkpoint;
mod train;

use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use train::{
    alpha_schedule_value, finetune_unimodal, train, EpochRecord, TrainReport, DBRC_C_STAGES, SATURATION_THRESHOLD,
};

use crate::atanh::{binarize, ATanhLayer};
use crate::error::{Error, Result};
use crate::numerics::{glorot_init, Activation, DenseLayer, DenseMatrix, RmsPropConfig, RngState};
use crate::retrieval::CodeSet;

/// Encoder hidden widths used by default (`n → 128 → 512`).
pub const DEFAULT_ENCODER_DIMS: [usize; 2] = [128, 512];

/// Rows forwarded at once when encoding a feature set.
const ENCODE_CHUNK: usize = 512;

/// Training variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Learnable per-bit scale with the `λ Σ α⁻²` penalty.
    #[serde(rename = "DBRC")]
    Dbrc,
    /// Learnable scale without the penalty.
    #[serde(rename = "DBRC-N")]
    DbrcN,
    /// Scale stepped through a fixed doubling schedule, never learned.
    #[serde(rename = "DBRC-C")]
    DbrcC,
    /// Plain tanh (scale frozen at 1), thresholded after training.
    #[serde(rename = "TWO-STAGE")]
    TwoStage,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Dbrc, Variant::DbrcN, Variant::DbrcC, Variant::TwoStage];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Dbrc => "DBRC",
            Variant::DbrcN => "DBRC-N",
            Variant::DbrcC => "DBRC-C",
            Variant::TwoStage => "TWO-STAGE",
        }
    }

    /// Whether α is updated by its gradient.
    pub fn learns_alpha(self) -> bool {
        matches!(self, Variant::Dbrc | Variant::DbrcN)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('_', "-").as_str() {
            "DBRC" => Ok(Variant::Dbrc),
            "DBRC-N" => Ok(Variant::DbrcN),
            "DBRC-C" => Ok(Variant::DbrcC),
            "TWO-STAGE" | "TWOSTAGE" => Ok(Variant::TwoStage),
            other => Err(Error::invalid(format!("unknown variant {other:?}"))),
        }
    }
}

/// Which modalities feed the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Joint,
    /// Modality y is replaced by zeros.
    XOnly,
    /// Modality x is replaced by zeros.
    YOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbrcConfig {
    pub dim_x: usize,
    pub dim_y: usize,
    pub encoder_dims: [usize; 2],
    pub bits: usize,
    pub lambda: f64,
    pub epochs: usize,
    pub finetune_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rms_decay: f64,
    pub rms_epsilon: f64,
    pub seed: u64,
    pub variant: Variant,
}

impl DbrcConfig {
    /// Defaults for everything except the input dims and code length.
    pub fn new(dim_x: usize, dim_y: usize, bits: usize) -> Self {
        let rms = RmsPropConfig::default();
        Self {
            dim_x,
            dim_y,
            encoder_dims: DEFAULT_ENCODER_DIMS,
            bits,
            lambda: 0.001,
            epochs: 300,
            finetune_epochs: 150,
            batch_size: 64,
            learning_rate: rms.learning_rate,
            rms_decay: rms.decay,
            rms_epsilon: rms.epsilon,
            seed: 0,
            variant: Variant::Dbrc,
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn rmsprop(&self) -> RmsPropConfig {
        RmsPropConfig {
            learning_rate: self.learning_rate,
            decay: self.rms_decay,
            epsilon: self.rms_epsilon,
        }
    }

    /// λ actually applied: DBRC-N always trains without the penalty.
    pub fn effective_lambda(&self) -> f64 {
        if self.variant == Variant::DbrcN {
            0.0
        } else {
            self.lambda
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim_x == 0 || self.dim_y == 0 {
            return Err(Error::invalid("feature dims must be >= 1"));
        }
        if self.encoder_dims.contains(&0) {
            return Err(Error::invalid("encoder widths must be >= 1"));
        }
        if self.bits == 0 {
            return Err(Error::invalid("code length must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda must be finite and >= 0"));
        }
        self.rmsprop().validate()
    }
}

/// The full network. Parameters are exposed in a fixed declaration order
/// (see [`DbrcModel::param_slices`]) that checkpoints and optimizers share.
#[derive(Debug, Clone, PartialEq)]
pub struct DbrcModel {
    config: DbrcConfig,
    enc_x: Vec<DenseLayer>,
    enc_y: Vec<DenseLayer>,
    w_x: DenseMatrix,
    w_y: DenseMatrix,
    b_h: Vec<f64>,
    hash: ATanhLayer,
    dec_x: Vec<DenseLayer>,
    dec_y: Vec<DenseLayer>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub mode: Mode,
    enc_x: PathwayCache,
    enc_y: PathwayCache,
    /// Joint pre-activation fed to the hashing layer.
    pub s: DenseMatrix,
    /// Hashing-layer activations.
    pub a: DenseMatrix,
    dec_x: PathwayCache,
    dec_y: PathwayCache,
}

#[derive(Debug, Clone)]
struct PathwayCache {
    /// `inputs[l]` feeds layer `l`; the final element is the pathway output.
    inputs: Vec<DenseMatrix>,
    pre: Vec<DenseMatrix>,
}

impl PathwayCache {
    fn output(&self) -> &DenseMatrix {
        self.inputs.last().expect("pathway has at least its input")
    }
}

impl ForwardPass {
    pub fn recon_x(&self) -> &DenseMatrix {
        self.dec_x.output()
    }

    pub fn recon_y(&self) -> &DenseMatrix {
        self.dec_y.output()
    }

    pub fn batch(&self) -> usize {
        self.a.rows()
    }
}

/// Loss components of one batch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub recon_x: f64,
    pub recon_y: f64,
    pub regularizer: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.recon_x + self.recon_y + self.regularizer
    }
}

/// Gradient of the total loss for every parameter, in declaration order,
/// plus the per-bit α gradient.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
}

fn run_pathway(layers: &[DenseLayer], input: DenseMatrix) -> Result<PathwayCache> {
    let mut inputs = Vec::with_capacity(layers.len() + 1);
    let mut pre = Vec::with_capacity(layers.len());
    inputs.push(input);
    for layer in layers {
        let (z, out) = layer.forward(inputs.last().unwrap())?;
        pre.push(z);
        inputs.push(out);
    }
    Ok(PathwayCache { inputs, pre })
}

/// Backpropagates `upstream` through a pathway. Returns the gradient w.r.t.
/// the pathway input and pushes `(weights, bias)` grads in layer order.
fn backprop_pathway(
    layers: &[DenseLayer],
    cache: &PathwayCache,
    upstream: DenseMatrix,
    grads: &mut Vec<Vec<f64>>,
) -> Result<DenseMatrix> {
    let mut per_layer = Vec::with_capacity(layers.len());
    let mut g = upstream;
    for (l, layer) in layers.iter().enumerate().rev() {
        let lg = layer.backward(&cache.inputs[l], &cache.pre[l], &g)?;
        g = lg.input;
        per_layer.push((lg.weights.into_vec(), lg.bias));
    }
    for (w, b) in per_layer.into_iter().rev() {
        grads.push(w);
        grads.push(b);
    }
    Ok(g)
}

/// Mean of squared entrywise differences.
pub fn mse(pred: &DenseMatrix, target: &DenseMatrix) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::invalid(format!(
            "mse shapes {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.as_slice().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / n as f64)
}

fn mse_grad(pred: &DenseMatrix, target: &DenseMatrix) -> Result<DenseMatrix> {
    let scale = 2.0 / pred.as_slice().len().max(1) as f64;
    pred.zip_map(target, |p, t| scale * (p - t))
}

impl DbrcModel {
    /// Glorot weights, zero biases, every `α_i = 1`.
    pub fn build(config: &DbrcConfig, rng: &mut RngState) -> Result<DbrcModel> {
        config.validate()?;
        let [h1, h2] = config.encoder_dims;
        let encoder = |n: usize, rng: &mut RngState| -> Result<Vec<DenseLayer>> {
            Ok(vec![
                DenseLayer::glorot(n, h1, Activation::Relu, rng)?,
                DenseLayer::glorot(h1, h2, Activation::Relu, rng)?,
            ])
        };
        let decoder = |n: usize, rng: &mut RngState| -> Result<Vec<DenseLayer>> {
            Ok(vec![
                DenseLayer::glorot(config.bits, h2, Activation::Relu, rng)?,
                DenseLayer::glorot(h2, h1, Activation::Relu, rng)?,
                DenseLayer::glorot(h1, n, Activation::Identity, rng)?,
            ])
        };
        let enc_x = encoder(config.dim_x, rng)?;
        let enc_y = encoder(config.dim_y, rng)?;
        let w_x = glorot_init(h2, config.bits, rng)?;
        let w_y = glorot_init(h2, config.bits, rng)?;
        let dec_x = decoder(config.dim_x, rng)?;
        let dec_y = decoder(config.dim_y, rng)?;
        Ok(DbrcModel {
            config: config.clone(),
            enc_x,
            enc_y,
            w_x,
            w_y,
            b_h: vec![0.0; config.bits],
            hash: ATanhLayer::new(config.bits, config.effective_lambda())?,
            dec_x,
            dec_y,
        })
    }

    pub fn config(&self) -> &DbrcConfig {
        &self.config
    }

    pub fn hash_layer(&self) -> &ATanhLayer {
        &self.hash
    }

    pub(crate) fn hash_layer_mut(&mut self) -> &mut ATanhLayer {
        &mut self.hash
    }

    /// Replaces every `α_i`. Values must be finite and at least the floor.
    pub fn set_alpha(&mut self, alpha: &[f64]) -> Result<()> {
        if alpha.len() != self.hash.bits() {
            return Err(Error::invalid(format!("{} alpha values for {} bits", alpha.len(), self.hash.bits())));
        }
        let floor = self.hash.alpha_min();
        if alpha.iter().any(|a| !(a.is_finite() && *a >= floor)) {
            return Err(Error::invalid(format!("alpha values must be finite and >= {floor}")));
        }
        self.hash.alpha_mut().copy_from_slice(alpha);
        Ok(())
    }

    pub fn encoder_x(&self) -> &[DenseLayer] {
        &self.enc_x
    }

    pub fn encoder_y(&self) -> &[DenseLayer] {
        &self.enc_y
    }

    pub fn joint_weights(&self) -> (&DenseMatrix, &DenseMatrix, &[f64]) {
        (&self.w_x, &self.w_y, &self.b_h)
    }

    pub fn decoder_x(&self) -> &[DenseLayer] {
        &self.dec_x
    }

    pub fn decoder_y(&self) -> &[DenseLayer] {
        &self.dec_y
    }

    /// Every trainable tensor except α, in declaration order: encoder x,
    /// encoder y (weights then bias per layer), `W_x`, `W_y`, `b_h`,
    /// decoder x, decoder y.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in self.enc_x.iter().chain(&self.enc_y) {
            out.push(l.weights().as_slice());
            out.push(l.bias());
        }
        out.push(self.w_x.as_slice());
        out.push(self.w_y.as_slice());
        out.push(&self.b_h);
        for l in self.dec_x.iter().chain(&self.dec_y) {
            out.push(l.weights().as_slice());
            out.push(l.bias());
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in self.enc_x.iter_mut().chain(self.enc_y.iter_mut()) {
            let (w, b) = l.params_mut();
            out.push(w);
            out.push(b);
        }
        out.push(self.w_x.as_mut_slice());
        out.push(self.w_y.as_mut_slice());
        out.push(&mut self.b_h);
        for l in self.dec_x.iter_mut().chain(self.dec_y.iter_mut()) {
            let (w, b) = l.params_mut();
            out.push(w);
            out.push(b);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum::<usize>() + self.hash.bits()
    }

    fn check_inputs(&self, x: &DenseMatrix, y: &DenseMatrix) -> Result<()> {
        if x.cols() != self.config.dim_x || y.cols() != self.config.dim_y {
            return Err(Error::invalid(format!(
                "expected feature dims {}/{}, got {}/{}",
                self.config.dim_x,
                self.config.dim_y,
                x.cols(),
                y.cols()
            )));
        }
        if x.rows() != y.rows() {
            return Err(Error::invalid(format!(
                "modalities have {} and {} rows",
                x.rows(),
                y.rows()
            )));
        }
        Ok(())
    }

    /// Forward pass in the given mode. In `XOnly` the values of `y` are never
    /// read (only its row count), and symmetrically for `YOnly`.
    pub fn forward(&self, x: &DenseMatrix, y: &DenseMatrix, mode: Mode) -> Result<ForwardPass> {
        self.check_inputs(x, y)?;
        let x_in = match mode {
            Mode::YOnly => DenseMatrix::zeros(x.rows(), x.cols()),
            _ => x.clone(),
        };
        let y_in = match mode {
            Mode::XOnly => DenseMatrix::zeros(y.rows(), y.cols()),
            _ => y.clone(),
        };
        let enc_x = run_pathway(&self.enc_x, x_in)?;
        let enc_y = run_pathway(&self.enc_y, y_in)?;
        let mut s = enc_x.output().matmul(&self.w_x)?;
        s.add_assign(&enc_y.output().matmul(&self.w_y)?)?;
        s.add_row_vector(&self.b_h)?;
        let a = self.hash.forward(&s)?;
        let dec_x = run_pathway(&self.dec_x, a.clone())?;
        let dec_y = run_pathway(&self.dec_y, a.clone())?;
        Ok(ForwardPass {
            mode,
            enc_x,
            enc_y,
            s,
            a,
            dec_x,
            dec_y,
        })
    }

    /// Per-modality MSE of the reconstructions plus `λ Σ α⁻²`.
    pub fn loss_parts(&self, x: &DenseMatrix, y: &DenseMatrix, recon_x: &DenseMatrix, recon_y: &DenseMatrix) -> Result<LossParts> {
        Ok(LossParts {
            recon_x: mse(recon_x, x)?,
            recon_y: mse(recon_y, y)?,
            regularizer: self.hash.reg_loss(),
        })
    }

    pub fn total_loss(&self, x: &DenseMatrix, y: &DenseMatrix, recon_x: &DenseMatrix, recon_y: &DenseMatrix) -> Result<f64> {
        Ok(self.loss_parts(x, y, recon_x, recon_y)?.total())
    }

    /// Convenience: forward in `mode`, then the total loss against the full
    /// targets `x` and `y`.
    pub fn evaluate_loss(&self, x: &DenseMatrix, y: &DenseMatrix, mode: Mode) -> Result<f64> {
        let fp = self.forward(x, y, mode)?;
        self.total_loss(x, y, fp.recon_x(), fp.recon_y())
    }

    /// Exact gradients of [`DbrcModel::total_loss`] for the pass `fp`, whose
    /// reconstruction targets are `x` and `y`.
    pub fn backward(&self, fp: &ForwardPass, x: &DenseMatrix, y: &DenseMatrix) -> Result<Gradients> {
        let batch = fp.batch();
        let g_rx = mse_grad(fp.recon_x(), x)?;
        let g_ry = mse_grad(fp.recon_y(), y)?;

        let mut dec_x_grads = Vec::new();
        let mut dec_y_grads = Vec::new();
        let mut g_a = backprop_pathway(&self.dec_x, &fp.dec_x, g_rx, &mut dec_x_grads)?;
        g_a.add_assign(&backprop_pathway(&self.dec_y, &fp.dec_y, g_ry, &mut dec_y_grads)?)?;

        let g_s = self.hash.grad_input(&fp.s, &g_a)?;
        let per_sample = g_a.map(|g| g * batch as f64);
        let alpha = self.hash.grad_alpha(&fp.s, &per_sample)?;

        let g_wx = fp.enc_x.output().matmul_tn(&g_s)?;
        let g_wy = fp.enc_y.output().matmul_tn(&g_s)?;
        let g_bh = g_s.column_sums();
        let g_hx = g_s.matmul_nt(&self.w_x)?;
        let g_hy = g_s.matmul_nt(&self.w_y)?;

        let mut params = Vec::new();
        backprop_pathway(&self.enc_x, &fp.enc_x, g_hx, &mut params)?;
        backprop_pathway(&self.enc_y, &fp.enc_y, g_hy, &mut params)?;
        params.push(g_wx.into_vec());
        params.push(g_wy.into_vec());
        params.push(g_bh);
        params.extend(dec_x_grads);
        params.extend(dec_y_grads);
        Ok(Gradients { params, alpha })
    }

    /// Hashing-layer activations for a feature set, forwarded in chunks.
    pub fn activations(&self, x: &DenseMatrix, y: &DenseMatrix, mode: Mode) -> Result<DenseMatrix> {
        self.check_inputs(x, y)?;
        let n = x.rows();
        let mut data = Vec::with_capacity(n * self.config.bits);
        let mut start = 0;
        while start < n {
            let end = (start + ENCODE_CHUNK).min(n);
            let idx: Vec<usize> = (start..end).collect();
            let fp = self.forward(&x.select_rows(&idx), &y.select_rows(&idx), mode)?;
            data.extend_from_slice(fp.a.as_slice());
            start = end;
        }
        DenseMatrix::from_vec(n, self.config.bits, data)
    }

    /// Binary codes `sign(a)` for every row, bit-packed.
    pub fn encode_codes(&self, x: &DenseMatrix, y: &DenseMatrix, mode: Mode) -> Result<CodeSet> {
        CodeSet::pack(&binarize(&self.activations(x, y, mode)?))
    }

    /// Codes from one modality alone (`XOnly` for x, `YOnly` for y).
    pub fn encode_unimodal(&self, features: &DenseMatrix, modality: Modality) -> Result<CodeSet> {
        let (x, y, mode) = match modality {
            Modality::X => (
                features.clone(),
                DenseMatrix::zeros(features.rows(), self.config.dim_y),
                Mode::XOnly,
            ),
            Modality::Y => (
                DenseMatrix::zeros(features.rows(), self.config.dim_x),
                features.clone(),
                Mode::YOnly,
            ),
        };
        self.encode_codes(&x, &y, mode)
    }
}

/// One input modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    X,
    Y,
}

impl Modality {
    pub fn mode(self) -> Mode {
        match self {
            Modality::X => Mode::XOnly,
            Modality::Y => Mode::YOnly,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> DbrcConfig {
        let mut c = DbrcConfig::new(6, 5, 4);
        c.encoder_dims = [7, 9];
        c
    }

    fn random_batch(rows: usize, cols: usize, rng: &mut RngState) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| rng.standard_normal())
    }

    #[test]
    fn build_shapes() {
        let config = DbrcConfig::new(20, 10, 16);
        let model = DbrcModel::build(&config, &mut RngState::new(1)).unwrap();
        assert_eq!(model.encoder_x()[0].weights().shape(), (20, 128));
        assert_eq!(model.encoder_x()[1].weights().shape(), (128, 512));
        assert_eq!(model.joint_weights().0.shape(), (512, 16));
        assert_eq!(model.decoder_y()[0].weights().shape(), (16, 512));
        assert_eq!(model.decoder_y()[2].weights().shape(), (128, 10));
        assert_eq!(model.decoder_y()[2].activation(), Activation::Identity);
        assert!(model.hash_layer().alpha().iter().all(|&a| a == 1.0));
    }

    #[test]
    fn build_deterministic_and_validated() {
        let config = tiny_config();
        let a = DbrcModel::build(&config, &mut RngState::new(4)).unwrap();
        let b = DbrcModel::build(&config, &mut RngState::new(4)).unwrap();
        assert_eq!(a, b);
        let mut bad = config.clone();
        bad.bits = 0;
        assert!(matches!(DbrcModel::build(&bad, &mut RngState::new(1)), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn dbrc_n_forces_zero_lambda() {
        let config = tiny_config().with_variant(Variant::DbrcN);
        let model = DbrcModel::build(&config, &mut RngState::new(1)).unwrap();
        assert_eq!(model.hash_layer().lambda(), 0.0);
    }

    #[test]
    fn forward_shapes_and_range() {
        let config = tiny_config();
        let mut rng = RngState::new(2);
        let model = DbrcModel::build(&config, &mut rng).unwrap();
        let x = random_batch(3, 6, &mut rng);
        let y = random_batch(3, 5, &mut rng);
        let fp = model.forward(&x, &y, Mode::Joint).unwrap();
        assert_eq!(fp.a.shape(), (3, 4));
        assert_eq!(fp.recon_x().shape(), (3, 6));
        assert_eq!(fp.recon_y().shape(), (3, 5));
        assert!(fp.a.as_slice().iter().all(|v| v.abs() < 1.0));
        assert!(model.forward(&y, &x, Mode::Joint).is_err());
    }

    #[test]
    fn zero_input_unimodal_gives_bias() {
        let config = tiny_config();
        let mut rng = RngState::new(3);
        let model = DbrcModel::build(&config, &mut rng).unwrap();
        let x = DenseMatrix::zeros(2, 6);
        let y = random_batch(2, 5, &mut rng);
        let fp = model.forward(&x, &y, Mode::XOnly).unwrap();
        for r in 0..2 {
            assert_eq!(fp.s.row(r), model.joint_weights().2);
        }
    }

    #[test]
    fn unimodal_ignores_absent_modality() {
        let config = tiny_config();
        let mut rng = RngState::new(5);
        let model = DbrcModel::build(&config, &mut rng).unwrap();
        let x = random_batch(4, 6, &mut rng);
        let y1 = random_batch(4, 5, &mut rng);
        let y2 = random_batch(4, 5, &mut rng);
        let a = model.forward(&x, &y1, Mode::XOnly).unwrap();
        let b = model.forward(&x, &y2, Mode::XOnly).unwrap();
        assert_eq!(a.a, b.a);
        assert_eq!(a.recon_y(), b.recon_y());
        let x2 = random_batch(4, 6, &mut rng);
        let c = model.forward(&x, &y1, Mode::YOnly).unwrap();
        let d = model.forward(&x2, &y1, Mode::YOnly).unwrap();
        assert_eq!(c.a, d.a);
        assert_eq!(
            model.encode_unimodal(&x, Modality::X).unwrap(),
            model.encode_codes(&x, &y2, Mode::XOnly).unwrap()
        );
    }

    #[test]
    fn loss_hand_values() {
        let mut config = tiny_config();
        config.lambda = 0.0;
        let model = DbrcModel::build(&config, &mut RngState::new(1)).unwrap();
        let x = DenseMatrix::filled(2, 6, 0.5);
        let y = DenseMatrix::filled(2, 5, -0.5);
        assert_eq!(model.total_loss(&x, &y, &x, &y).unwrap(), 0.0);
        let rx = x.map(|v| v + 1.0);
        let ry = y.map(|v| v - 1.0);
        assert!((model.total_loss(&x, &y, &rx, &ry).unwrap() - 2.0).abs() < 1e-15);

        let mut config = DbrcConfig::new(3, 3, 32);
        config.encoder_dims = [4, 4];
        let model = DbrcModel::build(&config, &mut RngState::new(1)).unwrap();
        let x = DenseMatrix::filled(2, 3, 0.1);
        assert!((model.total_loss(&x, &x, &x, &x).unwrap() - 0.032).abs() < 1e-15);
    }

    #[test]
    fn param_order_is_stable() {
        let config = tiny_config();
        let mut model = DbrcModel::build(&config, &mut RngState::new(1)).unwrap();
        let shapes: Vec<usize> = model.param_slices().iter().map(|s| s.len()).collect();
        let shapes_mut: Vec<usize> = model.param_slices_mut().iter().map(|s| s.len()).collect();
        assert_eq!(shapes, shapes_mut);
        assert_eq!(shapes, vec![42, 7, 63, 9, 35, 7, 63, 9, 36, 36, 4, 36, 9, 63, 7, 42, 6, 36, 9, 63, 7, 35, 5]);
    }

    #[test]
    fn encode_gives_binary_codes() {
        let config = tiny_config();
        let mut rng = RngState::new(6);
        let model = DbrcModel::build(&config, &mut rng).unwrap();
        let x = random_batch(600, 6, &mut rng);
        let y = random_batch(600, 5, &mut rng);
        let codes = model.encode_codes(&x, &y, Mode::Joint).unwrap();
        assert_eq!(codes.len(), 600);
        assert!(codes.unpack().as_slice().iter().all(|&v| v == 1.0 || v == -1.0));
        assert_eq!(codes, model.encode_codes(&x, &y, Mode::Joint).unwrap());
        let whole = model.forward(&x, &y, Mode::Joint).unwrap();
        assert_eq!(model.activations(&x, &y, Mode::Joint).unwrap(), whole.a);
    }
}
