//! Adaptive-moment optimizer with decoupled weight decay and global-norm
//! gradient clipping.
//!
//! Update at step n >= 1, after scaling the gradient by
//! min(1, clip_norm / ||g||):
//!   m <- b1 m + (1 - b1) g        m_hat = m / (1 - b1^n)
//!   v <- b2 v + (1 - b2) g^2      v_hat = v / (1 - b2^n)
//!   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
}

impl AdamW {
    pub fn new(learning_rate: f64, weight_decay: f64, clip_norm: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay,
            clip_norm,
        }
    }

    /// One update. Returns the post-clip global gradient norm. Errors on
    /// any non-finite gradient entry (with its index) and on step_index 0.
    pub fn step(
        &self,
        params: &mut [f64],
        grads: &[f64],
        moments: &mut Moments,
        step_index: usize,
    ) -> Result<f64> {
        if step_index == 0 {
            return Err(Error::InvalidArgument(
                "optimizer step index starts at 1".into(),
            ));
        }
        debug_assert_eq!(params.len(), grads.len());
        debug_assert_eq!(params.len(), moments.m.len());
        let mut sq_sum = 0.0;
        for (i, &g) in grads.iter().enumerate() {
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient(i));
            }
            sq_sum += g * g;
        }
        let norm = libm::sqrt(sq_sum);
        let scale = if norm > self.clip_norm && norm > 0.0 {
            self.clip_norm / norm
        } else {
            1.0
        };

        let bc1 = 1.0 - libm::pow(self.beta1, step_index as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, step_index as f64);
        for i in 0..params.len() {
            let g = grads[i] * scale;
            moments.m[i] = self.beta1 * moments.m[i] + (1.0 - self.beta1) * g;
            moments.v[i] = self.beta2 * moments.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = moments.m[i] / bc1;
            let v_hat = moments.v[i] / bc2;
            params[i] -= self.learning_rate * m_hat / (libm::sqrt(v_hat) + self.epsilon)
                + self.learning_rate * self.weight_decay * params[i];
        }
        Ok(norm * scale)
    }
}

/// First/second moment accumulators, one pair per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    pub fn zeros(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_zero_decay_fixed_point() {
        let opt = AdamW::new(0.1, 0.0, 1.0);
        let mut params = vec![1.5, -2.0];
        let mut moments = Moments::zeros(2);
        let norm = opt.step(&mut params, &[0.0, 0.0], &mut moments, 1).unwrap();
        assert_eq!(norm, 0.0);
        assert_eq!(params, vec![1.5, -2.0]);
    }

    #[test]
    fn global_norm_clip_scales_gradient() {
        let opt = AdamW::new(0.1, 0.0, 1.0);
        let mut params = vec![0.0, 0.0];
        let mut moments = Moments::zeros(2);
        // gradient norm 10 -> scaled by 0.1
        let norm = opt.step(&mut params, &[6.0, 8.0], &mut moments, 1).unwrap();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let opt = AdamW::new(0.1, 0.0, 1.0);
        let mut params = vec![0.0, 0.0];
        let mut moments = Moments::zeros(2);
        let err = opt
            .step(&mut params, &[0.0, f64::NAN], &mut moments, 1)
            .unwrap_err();
        assert_eq!(err, Error::NonFiniteGradient(1));
        assert!(opt.step(&mut params, &[0.0, 0.0], &mut moments, 0).is_err());
    }

    #[test]
    fn scalar_three_step_rollout_matches_hand_formula() {
        // single parameter, constant unit gradient, no decay, no clipping
        let lr = 0.1;
        let opt = AdamW::new(lr, 0.0, 10.0);
        let mut params = vec![1.0];
        let mut moments = Moments::zeros(1);

        // independent rollout of the update equations
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let mut theta = 1.0;
        let (mut m, mut v) = (0.0, 0.0);
        for n in 1..=3 {
            m = b1 * m + (1.0 - b1) * 1.0;
            v = b2 * v + (1.0 - b2) * 1.0;
            let m_hat = m / (1.0 - libm::pow(b1, n as f64));
            let v_hat = v / (1.0 - libm::pow(b2, n as f64));
            theta -= lr * m_hat / (libm::sqrt(v_hat) + eps);
            opt.step(&mut params, &[1.0], &mut moments, n).unwrap();
            assert!((params[0] - theta).abs() < 1e-15, "step {n}");
        }
        // every bias-corrected step with a constant gradient moves by ~lr
        assert!((params[0] - (1.0 - 3.0 * lr)).abs() < 1e-6);
    }

    #[test]
    fn decoupled_decay_shrinks_params_independently_of_gradient() {
        let opt = AdamW::new(0.1, 0.5, 1.0);
        let mut params = vec![2.0];
        let mut moments = Moments::zeros(1);
        opt.step(&mut params, &[0.0], &mut moments, 1).unwrap();
        // pure decay: theta - lr * wd * theta = 2.0 * (1 - 0.05)
        assert!((params[0] - 1.9).abs() < 1e-12);
    }
}
