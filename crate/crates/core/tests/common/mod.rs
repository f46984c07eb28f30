//! Finite-difference oracle for whole-network gradients.

#![allow(dead_code)]

use dbrc_core::model::{DbrcConfig, DbrcModel, Mode};
use dbrc_core::numerics::{DenseLayer, DenseMatrix, RngState};

/// Step of the five-point stencil. Its truncation error is O(h⁴), so a
/// fairly large step keeps roundoff small.
const STEP: f64 = 1e-4;

/// Points whose ReLU pre-activations come this close to zero are rejected,
/// so no stencil evaluation crosses a kink.
const KINK_MARGIN: f64 = 1e-3;

/// Denominator floor: below this magnitude errors are effectively absolute.
const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// `f'(0)` from `f(±h)`, `f(±2h)`.
pub fn five_point(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (-f(2.0 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2.0 * h)) / (12.0 * h)
}

fn min_pre_activation(layers: &[DenseLayer], input: &DenseMatrix) -> (f64, DenseMatrix) {
    let mut margin = f64::INFINITY;
    let mut h = input.clone();
    for layer in layers {
        let (pre, out) = layer.forward(&h).unwrap();
        if layer.activation() == dbrc_core::numerics::Activation::Relu {
            margin = pre.as_slice().iter().fold(margin, |m, v| m.min(v.abs()));
        }
        h = out;
    }
    (margin, h)
}

/// Smallest |pre-activation| over every ReLU unit for this batch and mode.
pub fn relu_margin(model: &DbrcModel, x: &DenseMatrix, y: &DenseMatrix, mode: Mode) -> f64 {
    let x_in = if mode == Mode::YOnly { DenseMatrix::zeros(x.rows(), x.cols()) } else { x.clone() };
    let y_in = if mode == Mode::XOnly { DenseMatrix::zeros(y.rows(), y.cols()) } else { y.clone() };
    let (mx, _) = min_pre_activation(model.encoder_x(), &x_in);
    let (my, _) = min_pre_activation(model.encoder_y(), &y_in);
    let a = model.activations(x, y, mode).unwrap();
    let (dx, _) = min_pre_activation(model.decoder_x(), &a);
    let (dy, _) = min_pre_activation(model.decoder_y(), &a);
    mx.min(my).min(dx).min(dy)
}

/// A 6-dim / 4-bit network at a random point: every parameter jittered away
/// from its initial value and each α drawn from [0.5, 3]. Draws again until
/// every ReLU unit is clear of its kink in all three modes.
pub fn toy_point(seed: u64) -> (DbrcModel, DenseMatrix, DenseMatrix) {
    let mut config = DbrcConfig::new(6, 6, 4);
    config.encoder_dims = [8, 10];
    config.lambda = 0.01;
    config.seed = seed;
    let mut rng = RngState::new(seed);
    loop {
        let mut model = DbrcModel::build(&config, &mut rng).unwrap();
        for tensor in model.param_slices_mut() {
            for v in tensor.iter_mut() {
                *v += 0.2 * rng.standard_normal();
            }
        }
        let alpha: Vec<f64> = (0..4).map(|_| rng.uniform(0.5, 3.0)).collect();
        model.set_alpha(&alpha).unwrap();
        let x = DenseMatrix::from_vec(3, 6, (0..18).map(|_| rng.standard_normal()).collect()).unwrap();
        let y = DenseMatrix::from_vec(3, 6, (0..18).map(|_| rng.standard_normal()).collect()).unwrap();
        let clear = [Mode::Joint, Mode::XOnly, Mode::YOnly]
            .iter()
            .all(|&m| relu_margin(&model, &x, &y, m) > KINK_MARGIN);
        if clear {
            return (model, x, y);
        }
    }
}

/// Largest relative error between analytic and five-point finite-difference
/// gradients of the total loss, over every weight, bias and α.
pub fn max_gradient_error(model: &DbrcModel, x: &DenseMatrix, y: &DenseMatrix, mode: Mode) -> f64 {
    let fp = model.forward(x, y, mode).unwrap();
    let grads = model.backward(&fp, x, y).unwrap();
    let loss = |m: &DbrcModel| m.evaluate_loss(x, y, mode).unwrap();
    let mut worst: f64 = 0.0;

    for t in 0..model.param_slices().len() {
        let len = model.param_slices()[t].len();
        assert_eq!(grads.params[t].len(), len);
        for i in 0..len {
            let numeric = five_point(
                |d| {
                    let mut m = model.clone();
                    m.param_slices_mut()[t][i] += d;
                    loss(&m)
                },
                STEP,
            );
            worst = worst.max(relative_error(grads.params[t][i], numeric));
        }
    }

    let alpha = model.hash_layer().alpha().to_vec();
    for i in 0..alpha.len() {
        let numeric = five_point(
            |d| {
                let mut a = alpha.clone();
                a[i] += d;
                let mut m = model.clone();
                m.set_alpha(&a).unwrap();
                loss(&m)
            },
            STEP,
        );
        worst = worst.max(relative_error(grads.alpha[i], numeric));
    }
    worst
}
