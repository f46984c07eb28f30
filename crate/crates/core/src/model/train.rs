use serde::{Deserialize, Serialize};

use super::{DbrcModel, Modality, Mode, Variant};
use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, RmsPropState, RngState};

/// Number of stages in the fixed DBRC-C schedule: α = 1, 2, 4, …, 1024.
pub const DBRC_C_STAGES: usize = 11;

/// Activations with magnitude above this count as saturated in reports.
pub const SATURATION_THRESHOLD: f64 = 0.9;

const STREAM_JOINT: u64 = 1;
const STREAM_FINETUNE_X: u64 = 2;
const STREAM_FINETUNE_Y: u64 = 3;

/// Scale used by DBRC-C during `epoch` of `epochs`.
pub fn alpha_schedule_value(epoch: usize, epochs: usize) -> f64 {
    let stage = (epoch * DBRC_C_STAGES / epochs.max(1)).min(DBRC_C_STAGES - 1);
    (1u64 << stage) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Sample-weighted mean over the epoch's minibatches, measured before
    /// each update.
    pub total_loss: f64,
    pub recon_x: f64,
    pub recon_y: f64,
    /// `λ Σ α⁻²` at the end of the epoch.
    pub regularizer: f64,
    pub mean_alpha: f64,
    /// Fraction of hashing activations with `|a| > 0.9` seen this epoch.
    pub saturated_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub phase: String,
    pub variant: Variant,
    pub mode: Mode,
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AlphaPolicy {
    Learn,
    Frozen,
    Schedule,
}

struct Optimizer {
    params: Vec<RmsPropState>,
    alpha: RmsPropState,
}

impl Optimizer {
    fn new(model: &DbrcModel) -> Self {
        let rms = model.config().rmsprop();
        Self {
            params: model
                .param_slices()
                .iter()
                .map(|p| RmsPropState::new(p.len(), rms))
                .collect(),
            alpha: RmsPropState::new(model.hash_layer().bits(), rms),
        }
    }
}

/// Joint training on paired features. Returns the trained copy; the input
/// model is untouched.
pub fn train(model: &DbrcModel, x: &DenseMatrix, y: &DenseMatrix) -> Result<(DbrcModel, TrainReport)> {
    let config = model.config();
    let policy = match config.variant {
        Variant::Dbrc | Variant::DbrcN => AlphaPolicy::Learn,
        Variant::DbrcC => AlphaPolicy::Schedule,
        Variant::TwoStage => AlphaPolicy::Frozen,
    };
    let mut trained = model.clone();
    if config.variant == Variant::TwoStage {
        trained.hash_layer_mut().set_all_alpha(1.0);
    }
    let mut rng = RngState::new(config.seed).derive(STREAM_JOINT);
    let epochs = config.epochs;
    let report = run_epochs(&mut trained, x, y, Mode::Joint, epochs, policy, &mut rng, "joint")?;
    Ok((trained, report))
}

/// Continues training a jointly trained model with one modality zeroed,
/// still reconstructing both. Learnable variants keep training α; fixed
/// variants keep the α they finished joint training with.
pub fn finetune_unimodal(
    trained: &DbrcModel,
    x: &DenseMatrix,
    y: &DenseMatrix,
    modality: Modality,
) -> Result<(DbrcModel, TrainReport)> {
    let config = trained.config();
    let policy = if config.variant.learns_alpha() {
        AlphaPolicy::Learn
    } else {
        AlphaPolicy::Frozen
    };
    let (stream, phase) = match modality {
        Modality::X => (STREAM_FINETUNE_X, "finetune-x"),
        Modality::Y => (STREAM_FINETUNE_Y, "finetune-y"),
    };
    let mut model = trained.clone();
    let mut rng = RngState::new(config.seed).derive(stream);
    let epochs = config.finetune_epochs;
    let report = run_epochs(&mut model, x, y, modality.mode(), epochs, policy, &mut rng, phase)?;
    Ok((model, report))
}

#[allow(clippy::too_many_arguments)]
fn run_epochs(
    model: &mut DbrcModel,
    x: &DenseMatrix,
    y: &DenseMatrix,
    mode: Mode,
    epochs: usize,
    policy: AlphaPolicy,
    rng: &mut RngState,
    phase: &str,
) -> Result<TrainReport> {
    if x.rows() != y.rows() {
        return Err(Error::invalid(format!(
            "modalities have {} and {} rows",
            x.rows(),
            y.rows()
        )));
    }
    if x.rows() == 0 {
        return Err(Error::invalid("training set is empty"));
    }
    let n = x.rows();
    let batch_size = model.config().batch_size;
    let mut opt = Optimizer::new(model);
    let mut order: Vec<usize> = (0..n).collect();
    let mut records = Vec::with_capacity(epochs);

    for epoch in 0..epochs {
        if policy == AlphaPolicy::Schedule {
            model
                .hash_layer_mut()
                .set_all_alpha(alpha_schedule_value(epoch, epochs));
        }
        rng.shuffle(&mut order);

        let (mut sum_x, mut sum_y, mut sum_total) = (0.0, 0.0, 0.0);
        let (mut saturated, mut activations) = (0usize, 0usize);
        for idx in order.chunks(batch_size) {
            let bx = x.select_rows(idx);
            let by = y.select_rows(idx);
            let fp = model.forward(&bx, &by, mode)?;
            let parts = model.loss_parts(&bx, &by, fp.recon_x(), fp.recon_y())?;
            if !parts.total().is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loss in {phase} epoch {epoch}"
                )));
            }
            let w = idx.len() as f64;
            sum_x += parts.recon_x * w;
            sum_y += parts.recon_y * w;
            sum_total += parts.total() * w;
            saturated += fp
                .a
                .as_slice()
                .iter()
                .filter(|v| v.abs() > SATURATION_THRESHOLD)
                .count();
            activations += fp.a.as_slice().len();

            let grads = model.backward(&fp, &bx, &by)?;
            let tag = |e: Error| match e {
                Error::Numerical(m) => Error::Numerical(format!("{phase} epoch {epoch}: {m}")),
                other => other,
            };
            for ((param, state), g) in model
                .param_slices_mut()
                .into_iter()
                .zip(opt.params.iter_mut())
                .zip(&grads.params)
            {
                state.update(param, g).map_err(tag)?;
            }
            if policy == AlphaPolicy::Learn {
                let hash = model.hash_layer_mut();
                opt.alpha.update(hash.alpha_mut(), &grads.alpha).map_err(tag)?;
                hash.clamp_alpha();
            }
        }

        let hash = model.hash_layer();
        records.push(EpochRecord {
            epoch,
            total_loss: sum_total / n as f64,
            recon_x: sum_x / n as f64,
            recon_y: sum_y / n as f64,
            regularizer: hash.reg_loss(),
            mean_alpha: hash.mean_alpha(),
            saturated_fraction: saturated as f64 / activations.max(1) as f64,
        });
    }

    Ok(TrainReport {
        phase: phase.to_string(),
        variant: model.config().variant,
        mode,
        epochs: records,
    })
}
