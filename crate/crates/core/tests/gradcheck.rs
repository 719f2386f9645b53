//! Finite-difference oracle for the reverse-mode gradients: every
//! parameter of a micro-model, both loss modes, weights 0 and 0.5.

use mstk_core::denoiser::{draw_batch, loss_and_gradients, DenoiserModel, ModelConfig, TrainMode};
use mstk_core::diffusion::{NoiseSchedule, TargetAlign};
use mstk_core::rng::chacha;
use mstk_core::stroke::{RoughnessSchedule, StrokeOperator};
use mstk_core::ImageTensor;

use rand::Rng;

const FD_STEP: f64 = 1e-4;
const REL_TOL: f64 = 1e-5;

fn micro_setup() -> (
    DenoiserModel,
    NoiseSchedule,
    RoughnessSchedule,
    StrokeOperator,
) {
    let cfg = ModelConfig {
        channels: 1,
        height: 2,
        width: 2,
        hidden_width: 3,
        time_embed_dim: 4,
        class_embed_dim: 2,
        num_classes: 2,
    };
    let mut rng = chacha(77);
    let mut model = DenoiserModel::init(cfg, &mut rng).unwrap();
    // randomize everything (including the zero head) so no gradient is
    // trivially zero
    for v in model.params_mut() {
        *v += 0.3 * rng.random_range(-1.0..1.0);
    }
    // T = 10, cut at 5, w_10 = 0.5
    let sched = NoiseSchedule::linear(10, 1e-3, 2e-2).unwrap();
    let rough = RoughnessSchedule::new(10, 0.5, 0.5).unwrap();
    let op = StrokeOperator::new(2).unwrap();
    (model, sched, rough, op)
}

fn check_mode(mode: TrainMode, align: TargetAlign) {
    let (mut model, sched, rough, op) = micro_setup();
    let data = mstk_core::denoiser::synthetic_shapes(6, 1, 4, 2, 3).unwrap();
    let mut rng = chacha(5);
    let mut batch = draw_batch(&data, &sched, 3, 0.2, &mut rng).unwrap();
    // the shape generator needs size >= 4; crop to the 2x2 model inputs
    for img in batch.x_t.iter_mut().chain(batch.eps.iter_mut()) {
        let cropped: Vec<f64> = img.data()[..4].to_vec();
        *img = ImageTensor::new(1, 2, 2, cropped).unwrap();
    }
    // cover w = 0, an intermediate weight, and w = w_max = 0.5
    batch.t = vec![2, 7, 10];
    batch.labels = vec![0, 1, 2];

    let analytic = loss_and_gradients(&model, &batch, &rough, &op, mode, align).unwrap();
    let params = model.params().to_vec();
    let mut checked = 0;
    for i in 0..params.len() {
        model.params_mut()[i] = params[i] + FD_STEP;
        let up = loss_and_gradients(&model, &batch, &rough, &op, mode, align)
            .unwrap()
            .loss;
        model.params_mut()[i] = params[i] - FD_STEP;
        let down = loss_and_gradients(&model, &batch, &rough, &op, mode, align)
            .unwrap()
            .loss;
        model.params_mut()[i] = params[i];
        let fd = (up - down) / (2.0 * FD_STEP);
        let a = analytic.grads[i];
        if a.abs() < 1e-10 && fd.abs() < 1e-10 {
            continue;
        }
        let rel = (a - fd).abs() / a.abs().max(fd.abs());
        assert!(
            rel <= REL_TOL,
            "param {i}: analytic {a} vs finite-difference {fd} (rel {rel})"
        );
        checked += 1;
    }
    // the check must actually exercise most of the model
    assert!(checked > params.len() / 2, "only {checked} params had gradient");
}

#[test]
fn ddpm_gradients_match_finite_differences() {
    check_mode(TrainMode::Ddpm, TargetAlign::Current);
}

#[test]
fn multistroke_gradients_match_finite_differences() {
    check_mode(TrainMode::MultiStroke, TargetAlign::Current);
}

#[test]
fn next_state_target_gradients_match_finite_differences() {
    check_mode(TrainMode::MultiStroke, TargetAlign::NextState);
}
