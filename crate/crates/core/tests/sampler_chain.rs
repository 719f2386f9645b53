//! Chain-level sampler checks beyond the unit tests: injected-noise
//! moments, the zero-weight suffix, and coarse preservation along a run.

use mstk_core::denoiser::{DenoiserModel, ModelConfig};
use mstk_core::diffusion::{NoiseSchedule, VarianceConvention};
use mstk_core::rng::chacha;
use mstk_core::sampler::{sample_ddpm, sample_multistroke, SampleMode, SamplePlan};
use mstk_core::stroke::{RoughnessSchedule, StrokeOperator};
use mstk_core::ImageTensor;

use rand::Rng;

fn model(seed: u64, size: usize) -> DenoiserModel {
    let cfg = ModelConfig {
        channels: 1,
        height: size,
        width: size,
        hidden_width: 16,
        time_embed_dim: 8,
        class_embed_dim: 4,
        num_classes: 4,
    };
    let mut rng = chacha(seed);
    let mut m = DenoiserModel::init(cfg, &mut rng).unwrap();
    for v in m.params_mut() {
        *v += 0.02 * rng.random_range(-1.0..1.0);
    }
    m
}

#[test]
fn injected_noise_detail_variance_shrinks_by_weight_squared() {
    // eta~ = (1-w) eta + w S eta at w = 0.5: the detail component carries
    // a quarter of the unmixed detail energy
    let op = StrokeOperator::new(2).unwrap();
    let mut rng = chacha(31);
    let draws = 100_000;
    let mut mixed_energy = 0.0;
    let mut plain_energy = 0.0;
    for _ in 0..draws {
        let eta = ImageTensor::randn(1, 4, 4, &mut rng);
        let eta_mixed = op.mix(&eta, 0.5).unwrap();
        mixed_energy += op.detail_project(&eta_mixed).unwrap().sq_norm();
        plain_energy += op.detail_project(&eta).unwrap().sq_norm();
    }
    mixed_energy /= draws as f64;
    plain_energy /= draws as f64;
    let ratio = mixed_energy / plain_energy;
    assert!((ratio - 0.25).abs() < 0.02 * 0.25, "ratio {ratio}");
    // and the coarse component is untouched draw by draw
    let eta = ImageTensor::randn(1, 4, 4, &mut rng);
    let qc_mixed = op.coarse_project(&op.mix(&eta, 0.5).unwrap()).unwrap();
    let qc = op.coarse_project(&eta).unwrap();
    assert!(qc_mixed.max_abs_diff(&qc).unwrap() < 1e-12);
}

#[test]
fn plan_confined_below_the_cut_reduces_to_ddpm() {
    // every step with w_t = w_s = 0 runs the plain update bit for bit
    let m = model(1, 8);
    let sched = NoiseSchedule::linear(50, 1e-4, 2.8e-2).unwrap();
    // cut index t0 = 25: weights vanish for t <= 25
    let rough = RoughnessSchedule::new(50, 0.5, 0.5).unwrap();
    let op = StrokeOperator::new(2).unwrap();
    let below_cut = vec![20usize, 15, 10, 5, 0];
    let ddpm_plan = SamplePlan::new(
        below_cut.clone(),
        VarianceConvention::FixedLarge,
        SampleMode::Ddpm,
        50,
    )
    .unwrap();
    let ms_plan = SamplePlan::new(
        below_cut,
        VarianceConvention::FixedLarge,
        SampleMode::MultiStroke,
        50,
    )
    .unwrap();
    let a = sample_ddpm(&m, &sched, &ddpm_plan, 3, &mut chacha(9)).unwrap();
    let b = sample_multistroke(&m, &sched, &rough, &op, &ms_plan, 3, &mut chacha(9)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn multistroke_chain_is_reproducible_and_finite() {
    let m = model(2, 8);
    let sched = NoiseSchedule::linear(50, 1e-4, 2.8e-2).unwrap();
    let rough = RoughnessSchedule::new(50, 0.75, 0.5).unwrap();
    let op = StrokeOperator::new(2).unwrap();
    for conv in [VarianceConvention::FixedLarge, VarianceConvention::FixedSmall] {
        let plan = SamplePlan::subsampled(50, 10, conv, SampleMode::MultiStroke).unwrap();
        let a = sample_multistroke(&m, &sched, &rough, &op, &plan, 1, &mut chacha(4)).unwrap();
        let b = sample_multistroke(&m, &sched, &rough, &op, &plan, 1, &mut chacha(4)).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| v.is_finite()));
    }
}

#[test]
fn odd_image_size_is_rejected_by_stroke_sampling() {
    let m = model(3, 6);
    let sched = NoiseSchedule::linear(20, 1e-4, 2.8e-2).unwrap();
    let rough = RoughnessSchedule::new(20, 0.75, 0.5).unwrap();
    let op = StrokeOperator::new(4).unwrap(); // 6 % 4 != 0
    let plan = SamplePlan::subsampled(20, 5, VarianceConvention::FixedLarge, SampleMode::MultiStroke)
        .unwrap();
    assert!(sample_multistroke(&m, &sched, &rough, &op, &plan, 1, &mut chacha(1)).is_err());
}
