//! Ancestral reverse-chain sampling, plain and stroke-controlled, over
//! contiguous or subsampled (jump) timestep schedules.
//!
//! Both samplers run the same chain loop and consume randomness in the
//! same order, so a stroke run with all-zero weights is bit-identical to
//! the plain run under a shared seed.

use alloc::vec::Vec;

use rand::Rng;

use crate::denoiser::DenoiserModel;
use crate::diffusion::{jump_mean_variance, NoiseSchedule, VarianceConvention};
use crate::error::{Error, Result};
use crate::stroke::{RoughnessSchedule, StrokeOperator};
use crate::tensor::ImageTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    Ddpm,
    MultiStroke,
}

/// A validated reverse-chain plan: strictly decreasing timesteps from
/// tau_0 <= T down to 0, plus the variance convention and mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePlan {
    timesteps: Vec<usize>,
    pub variance: VarianceConvention,
    pub mode: SampleMode,
}

impl SamplePlan {
    pub fn new(
        timesteps: Vec<usize>,
        variance: VarianceConvention,
        mode: SampleMode,
        t_total: usize,
    ) -> Result<Self> {
        if timesteps.len() < 2 {
            return Err(Error::InvalidArgument(
                "a sample plan needs at least a start and the terminal 0".into(),
            ));
        }
        if *timesteps.last().unwrap() != 0 {
            return Err(Error::InvalidArgument("sample plan must end at 0".into()));
        }
        if timesteps[0] > t_total {
            return Err(Error::TimestepOutOfRange {
                t: timesteps[0],
                lo: 1,
                hi: t_total,
            });
        }
        if timesteps.windows(2).any(|pair| pair[1] >= pair[0]) {
            return Err(Error::InvalidArgument(
                "sample plan timesteps must be strictly decreasing".into(),
            ));
        }
        Ok(Self {
            timesteps,
            variance,
            mode,
        })
    }

    /// Uniform subsampling of 1..=T into N reverse steps (N+1 indices),
    /// with endpoints forced to T and 0.
    pub fn subsampled(
        t_total: usize,
        steps: usize,
        variance: VarianceConvention,
        mode: SampleMode,
    ) -> Result<Self> {
        Self::new(subsample_schedule(t_total, steps)?, variance, mode, t_total)
    }

    pub fn timesteps(&self) -> &[usize] {
        &self.timesteps
    }

    pub fn steps(&self) -> usize {
        self.timesteps.len() - 1
    }
}

/// tau_i = round(T (N - i) / N) for i in 0..=N, deduplicated while
/// preserving strict decrease; first index is T, last is 0.
pub fn subsample_schedule(t_total: usize, steps: usize) -> Result<Vec<usize>> {
    if steps == 0 || steps > t_total {
        return Err(Error::InvalidArgument(alloc::format!(
            "step count {steps} must be in 1..={t_total}"
        )));
    }
    let mut timesteps = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let tau = libm::round(t_total as f64 * (steps - i) as f64 / steps as f64) as usize;
        if timesteps.last().map_or(true, |&prev| tau < prev) {
            timesteps.push(tau);
        }
    }
    debug_assert_eq!(timesteps[0], t_total);
    debug_assert_eq!(*timesteps.last().unwrap(), 0);
    Ok(timesteps)
}

/// Plain ancestral sampling along the plan.
pub fn sample_ddpm<R: Rng + ?Sized>(
    model: &DenoiserModel,
    sched: &NoiseSchedule,
    plan: &SamplePlan,
    label: usize,
    rng: &mut R,
) -> Result<ImageTensor> {
    if plan.mode != SampleMode::Ddpm {
        return Err(Error::InvalidArgument(
            "plan mode must be ddpm for sample_ddpm".into(),
        ));
    }
    run_chain(model, sched, plan, None, label, rng)
}

/// Stroke-controlled sampling: the initial draw, the state presented to
/// the model, and the injected noise are all stroke-mixed; noise mixing
/// is indexed by the destination timestep (w_0 = 0).
pub fn sample_multistroke<R: Rng + ?Sized>(
    model: &DenoiserModel,
    sched: &NoiseSchedule,
    rough: &RoughnessSchedule,
    op: &StrokeOperator,
    plan: &SamplePlan,
    label: usize,
    rng: &mut R,
) -> Result<ImageTensor> {
    if plan.mode != SampleMode::MultiStroke {
        return Err(Error::InvalidArgument(
            "plan mode must be multistroke for sample_multistroke".into(),
        ));
    }
    if rough.t_total() != sched.t_total() {
        return Err(Error::InvalidArgument(alloc::format!(
            "roughness schedule covers {} steps but noise schedule covers {}",
            rough.t_total(),
            sched.t_total()
        )));
    }
    run_chain(model, sched, plan, Some((rough, op)), label, rng)
}

fn run_chain<R: Rng + ?Sized>(
    model: &DenoiserModel,
    sched: &NoiseSchedule,
    plan: &SamplePlan,
    stroke: Option<(&RoughnessSchedule, &StrokeOperator)>,
    label: usize,
    rng: &mut R,
) -> Result<ImageTensor> {
    let cfg = model.config();
    let (c, h, w) = (cfg.channels, cfg.height, cfg.width);
    let mut state = ImageTensor::randn(c, h, w, rng);
    if let Some((rough, op)) = stroke {
        state = op.mix(&state, rough.weight(plan.timesteps[0])?)?;
    }
    for pair in plan.timesteps.windows(2) {
        let (t, s) = (pair[0], pair[1]);
        let model_input = match stroke {
            Some((rough, op)) => op.mix(&state, rough.weight(t)?)?,
            None => state.clone(),
        };
        let eps_hat = model.forward(&model_input, t, label)?;
        let (mean, variance) =
            jump_mean_variance(&model_input, &eps_hat, t, s, sched, plan.variance)?;
        if s == 0 {
            // final update into state 0 adds no stochastic term
            state = mean;
        } else {
            let mut eta = ImageTensor::randn(c, h, w, rng);
            if let Some((rough, op)) = stroke {
                eta = op.mix(&eta, rough.weight(s)?)?;
            }
            state = mean.axpy(libm::sqrt(variance), &eta)?;
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::ModelConfig;
    use crate::rng::chacha;
    use alloc::vec;

    fn model_8(seed: u64) -> DenoiserModel {
        let cfg = ModelConfig {
            channels: 1,
            height: 8,
            width: 8,
            hidden_width: 16,
            time_embed_dim: 8,
            class_embed_dim: 4,
            num_classes: 4,
        };
        let mut rng = chacha(seed);
        let mut model = DenoiserModel::init(cfg, &mut rng).unwrap();
        // randomize the head so predictions are nontrivial
        for v in model.params_mut() {
            *v += 0.02 * rng.random_range(-1.0..1.0);
        }
        model
    }

    #[test]
    fn subsample_schedule_shapes() {
        let full = subsample_schedule(20, 20).unwrap();
        assert_eq!(full, (0..=20).rev().collect::<Vec<_>>());
        let single = subsample_schedule(500, 1).unwrap();
        assert_eq!(single, vec![500, 0]);
        let ten = subsample_schedule(500, 10).unwrap();
        assert_eq!(ten.len(), 11);
        assert_eq!(ten[0], 500);
        assert_eq!(*ten.last().unwrap(), 0);
        for pair in ten.windows(2) {
            let gap = pair[0] - pair[1];
            assert!((49..=51).contains(&gap));
        }
        assert!(subsample_schedule(10, 0).is_err());
        assert!(subsample_schedule(10, 11).is_err());
    }

    #[test]
    fn subsample_schedule_strictly_decreasing_for_awkward_sizes() {
        for t_total in 1..=40 {
            for steps in 1..=t_total {
                let plan = subsample_schedule(t_total, steps).unwrap();
                assert_eq!(plan[0], t_total);
                assert_eq!(*plan.last().unwrap(), 0);
                for pair in plan.windows(2) {
                    assert!(pair[1] < pair[0]);
                }
            }
        }
    }

    #[test]
    fn plan_validation() {
        use VarianceConvention::FixedLarge;
        assert!(SamplePlan::new(vec![10, 5, 0], FixedLarge, SampleMode::Ddpm, 10).is_ok());
        assert!(SamplePlan::new(vec![10, 5, 5, 0], FixedLarge, SampleMode::Ddpm, 10).is_err());
        assert!(SamplePlan::new(vec![10, 5, 1], FixedLarge, SampleMode::Ddpm, 10).is_err());
        assert!(SamplePlan::new(vec![11, 0], FixedLarge, SampleMode::Ddpm, 10).is_err());
        assert!(SamplePlan::new(vec![0], FixedLarge, SampleMode::Ddpm, 10).is_err());
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let model = model_8(1);
        let sched = NoiseSchedule::linear(50, 1e-4, 2.8e-2).unwrap();
        let plan =
            SamplePlan::subsampled(50, 10, VarianceConvention::FixedLarge, SampleMode::Ddpm)
                .unwrap();
        let a = sample_ddpm(&model, &sched, &plan, 1, &mut chacha(99)).unwrap();
        let b = sample_ddpm(&model, &sched, &plan, 1, &mut chacha(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_weight_multistroke_equals_ddpm_bitwise() {
        let model = model_8(2);
        let sched = NoiseSchedule::linear(50, 1e-4, 2.8e-2).unwrap();
        let rough = RoughnessSchedule::new(50, 0.75, 0.0).unwrap();
        let op = StrokeOperator::new(2).unwrap();
        for steps in [50usize, 7] {
            let ddpm_plan =
                SamplePlan::subsampled(50, steps, VarianceConvention::FixedLarge, SampleMode::Ddpm)
                    .unwrap();
            let ms_plan = SamplePlan::subsampled(
                50,
                steps,
                VarianceConvention::FixedLarge,
                SampleMode::MultiStroke,
            )
            .unwrap();
            let a = sample_ddpm(&model, &sched, &ddpm_plan, 2, &mut chacha(7)).unwrap();
            let b =
                sample_multistroke(&model, &sched, &rough, &op, &ms_plan, 2, &mut chacha(7))
                    .unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn zero_model_single_jump_has_closed_form() {
        // model predicting exactly 0, one step T -> 0, fixedlarge:
        // the final state is x_T / sqrt(alpha_bar_T)
        let cfg = ModelConfig {
            channels: 1,
            height: 4,
            width: 4,
            hidden_width: 8,
            time_embed_dim: 4,
            class_embed_dim: 2,
            num_classes: 2,
        };
        let model = DenoiserModel::init(cfg, &mut chacha(3)).unwrap();
        let sched = NoiseSchedule::linear(30, 1e-3, 2e-2).unwrap();
        let plan =
            SamplePlan::subsampled(30, 1, VarianceConvention::FixedLarge, SampleMode::Ddpm)
                .unwrap();
        let out = sample_ddpm(&model, &sched, &plan, 1, &mut chacha(11)).unwrap();
        let x_t = ImageTensor::randn(1, 4, 4, &mut chacha(11));
        let expect = x_t.scaled(1.0 / libm::sqrt(sched.alpha_bar(30).unwrap()));
        assert!(out.max_abs_diff(&expect).unwrap() < 1e-12);
    }

    #[test]
    fn plan_mode_mismatch_is_rejected() {
        let model = model_8(4);
        let sched = NoiseSchedule::linear(50, 1e-4, 2.8e-2).unwrap();
        let rough = RoughnessSchedule::new(50, 0.75, 0.5).unwrap();
        let op = StrokeOperator::new(2).unwrap();
        let ddpm_plan =
            SamplePlan::subsampled(50, 5, VarianceConvention::FixedLarge, SampleMode::Ddpm)
                .unwrap();
        assert!(
            sample_multistroke(&model, &sched, &rough, &op, &ddpm_plan, 1, &mut chacha(1))
                .is_err()
        );
        let ms_plan = SamplePlan::subsampled(
            50,
            5,
            VarianceConvention::FixedLarge,
            SampleMode::MultiStroke,
        )
        .unwrap();
        assert!(sample_ddpm(&model, &sched, &ms_plan, 1, &mut chacha(1)).is_err());
    }
}
