//! The stroke operator and its induced algebra.
//!
//! `StrokeOperator` is k-by-k block average pooling followed by
//! nearest-neighbor upsampling back to the input resolution, applied per
//! channel. It is an orthogonal projector onto block-constant signals, so
//! the coarse/detail split `Q_c = S_k`, `Q_d = I - S_k` is exact and the
//! mixing map `(1-w)I + w S_k` has the closed projector form
//! `Q_c + (1-w) Q_d`. The closed-form spectral and complexity functionals
//! that go with the operator live here too.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::ImageTensor;

/// Block-average pooling + nearest-neighbor upsampling with block size `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StrokeOperator {
    k: usize,
    upsample_row_shift: usize,
}

impl StrokeOperator {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::ZeroBlockSize);
        }
        Ok(Self {
            k,
            upsample_row_shift: 0,
        })
    }

    /// Test hook: upsample with the block value written one row off.
    /// Breaks self-adjointness; exists so the verify suite can prove it
    /// notices a broken operator.
    #[doc(hidden)]
    pub fn with_injected_upsample_fault(k: usize) -> Result<Self> {
        let mut op = Self::new(k)?;
        op.upsample_row_shift = 1;
        Ok(op)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    fn check_divisible(&self, x: &ImageTensor) -> Result<()> {
        if x.height() % self.k != 0 {
            return Err(Error::NotDivisible {
                axis: "height",
                extent: x.height(),
                k: self.k,
            });
        }
        if x.width() % self.k != 0 {
            return Err(Error::NotDivisible {
                axis: "width",
                extent: x.width(),
                k: self.k,
            });
        }
        Ok(())
    }

    /// S_k x: every k-by-k block of every channel replaced by its mean.
    pub fn apply(&self, x: &ImageTensor) -> Result<ImageTensor> {
        self.check_divisible(x)?;
        if self.k == 1 && self.upsample_row_shift == 0 {
            return Ok(x.clone());
        }
        let (channels, height, width) = x.shape();
        let k = self.k;
        let inv = 1.0 / (k * k) as f64;
        let mut out = ImageTensor::zeros(channels, height, width);
        for c in 0..channels {
            for bp in 0..height / k {
                for bq in 0..width / k {
                    let mut sum = 0.0;
                    for r in 0..k {
                        for s in 0..k {
                            sum += x.get(c, bp * k + r, bq * k + s);
                        }
                    }
                    let mean = sum * inv;
                    for r in 0..k {
                        let row = (bp * k + r + self.upsample_row_shift) % height;
                        for s in 0..k {
                            out.set(c, row, bq * k + s, mean);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Q_c x, identical to `apply`.
    pub fn coarse_project(&self, x: &ImageTensor) -> Result<ImageTensor> {
        self.apply(x)
    }

    /// Q_d x = x - S_k x.
    pub fn detail_project(&self, x: &ImageTensor) -> Result<ImageTensor> {
        let coarse = self.apply(x)?;
        x.sub(&coarse)
    }

    /// (1-w) x + w S_k x. `w = 0` returns `x` unchanged (bitwise).
    pub fn mix(&self, x: &ImageTensor, w: f64) -> Result<ImageTensor> {
        check_weight(w)?;
        if w == 0.0 {
            self.check_divisible(x)?;
            return Ok(x.clone());
        }
        let coarse = self.apply(x)?;
        x.scaled(1.0 - w).axpy(w, &coarse)
    }

    /// Q_c x + 1/(1-w) Q_d x, the exact inverse of `mix` for w in [0, 1).
    pub fn mix_inverse(&self, x: &ImageTensor, w: f64) -> Result<ImageTensor> {
        check_weight(w)?;
        if w == 0.0 {
            self.check_divisible(x)?;
            return Ok(x.clone());
        }
        let coarse = self.apply(x)?;
        let detail = x.sub(&coarse)?;
        coarse.axpy(1.0 / (1.0 - w), &detail)
    }
}

fn check_weight(w: f64) -> Result<()> {
    if !(0.0..1.0).contains(&w) {
        return Err(Error::WeightOutOfRange { w });
    }
    Ok(())
}

/// Per-timestep stroke weights: zero up to the cut index t0, then a linear
/// ramp to `w_max` at t = T.
#[derive(Debug, Clone, PartialEq)]
pub struct RoughnessSchedule {
    t_total: usize,
    f_rough: f64,
    w_max: f64,
    t0: usize,
    weights: Vec<f64>,
}

impl RoughnessSchedule {
    pub fn new(t_total: usize, f_rough: f64, w_max: f64) -> Result<Self> {
        if t_total == 0 {
            return Err(Error::InvalidArgument(alloc::format!(
                "total timesteps must be positive, got {t_total}"
            )));
        }
        if !(0.0..=1.0).contains(&f_rough) {
            return Err(Error::InvalidArgument(alloc::format!(
                "rough fraction {f_rough} outside [0, 1]"
            )));
        }
        if !(0.0..1.0).contains(&w_max) {
            return Err(Error::WeightOutOfRange { w: w_max });
        }
        let t0 = libm::floor((1.0 - f_rough) * t_total as f64) as usize;
        let mut weights = Vec::with_capacity(t_total + 1);
        for t in 0..=t_total {
            // ratio first: (t - t0) / (T - t0) <= 1 exactly, so the
            // product can never round above w_max
            let w = if t <= t0 {
                0.0
            } else {
                w_max * ((t - t0) as f64 / (t_total - t0) as f64)
            };
            weights.push(w);
        }
        Ok(Self {
            t_total,
            f_rough,
            w_max,
            t0,
            weights,
        })
    }

    pub fn t_total(&self) -> usize {
        self.t_total
    }

    pub fn f_rough(&self) -> f64 {
        self.f_rough
    }

    pub fn w_max(&self) -> f64 {
        self.w_max
    }

    /// Cut index: weights are zero for t <= t0.
    pub fn t0(&self) -> usize {
        self.t0
    }

    /// w_t for t in 0..=T, with w_0 = 0.
    pub fn weight(&self, t: usize) -> Result<f64> {
        self.weights.get(t).copied().ok_or(Error::TimestepOutOfRange {
            t,
            lo: 0,
            hi: self.t_total,
        })
    }
}

/// Amplitude attenuation of a 1D frequency omega under k-point averaging:
/// |sin(k omega / 2) / (k sin(omega / 2))|, with the limit value 1 taken
/// whenever sin(omega / 2) vanishes (omega = 0 mod 2 pi).
///
/// Total for any finite omega; `k` must be >= 1.
pub fn attenuation_gamma(omega: f64, k: usize) -> f64 {
    assert!(k >= 1, "block size must be at least 1");
    let half = libm::sin(omega / 2.0);
    if half.abs() < 1e-9 {
        return 1.0;
    }
    (libm::sin(k as f64 * omega / 2.0) / (k as f64 * half)).abs()
}

/// Energy retention of a single mode with coarse retention `rho` under the
/// mixing map with weight `w`: rho^2 + (1-w)^2 (1 - rho^2).
pub fn mode_energy_ratio(rho: f64, w: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidArgument(alloc::format!(
            "mode retention {rho} outside [0, 1]"
        )));
    }
    check_weight(w)?;
    let shrink = 1.0 - w;
    Ok(rho * rho + shrink * shrink * (1.0 - rho * rho))
}

/// One-scale multiresolution roughness functional
/// ||Q_c x||^2 + k^(2s) ||Q_d x||^2 with smoothness exponent s >= 0.
pub fn multires_complexity(x: &ImageTensor, op: &StrokeOperator, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "smoothness exponent {s} must be nonnegative"
        )));
    }
    let coarse = op.coarse_project(x)?;
    let detail = x.sub(&coarse)?;
    let scale = libm::pow(op.k() as f64, 2.0 * s);
    Ok(coarse.sq_norm() + scale * detail.sq_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn t2x2(vals: [f64; 4]) -> ImageTensor {
        ImageTensor::new(1, 2, 2, vals.to_vec()).unwrap()
    }

    #[test]
    fn block_average_2x2() {
        let op = StrokeOperator::new(2).unwrap();
        let x = t2x2([1.0, 3.0, 5.0, 7.0]);
        let y = op.apply(&x).unwrap();
        assert_eq!(y.data(), &[4.0, 4.0, 4.0, 4.0]);
    }

    #[test]
    fn k1_is_identity() {
        let op = StrokeOperator::new(1).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let x = ImageTensor::randn(2, 3, 5, &mut rng);
        assert_eq!(op.apply(&x).unwrap(), x);
    }

    #[test]
    fn divisibility_errors_name_axis() {
        let op = StrokeOperator::new(2).unwrap();
        let x = ImageTensor::zeros(1, 3, 4);
        assert_eq!(
            op.apply(&x).unwrap_err(),
            Error::NotDivisible {
                axis: "height",
                extent: 3,
                k: 2
            }
        );
        let x = ImageTensor::zeros(1, 4, 6);
        assert!(op.apply(&x).is_ok());
        let x = ImageTensor::zeros(1, 4, 5);
        assert_eq!(
            op.apply(&x).unwrap_err(),
            Error::NotDivisible {
                axis: "width",
                extent: 5,
                k: 2
            }
        );
    }

    #[test]
    fn zero_block_size_rejected() {
        assert_eq!(StrokeOperator::new(0).unwrap_err(), Error::ZeroBlockSize);
    }

    #[test]
    fn detail_of_block_constant_is_zero() {
        let op = StrokeOperator::new(2).unwrap();
        let x = ImageTensor::new(1, 4, 2, vec![2.0, 2.0, 2.0, 2.0, -1.0, -1.0, -1.0, -1.0]).unwrap();
        let d = op.detail_project(&x).unwrap();
        assert_eq!(d.max_abs_diff(&ImageTensor::zeros(1, 4, 2)).unwrap(), 0.0);
    }

    #[test]
    fn detail_example_2x2() {
        let op = StrokeOperator::new(2).unwrap();
        let x = t2x2([1.0, 3.0, 5.0, 7.0]);
        let d = op.detail_project(&x).unwrap();
        assert_eq!(d.data(), &[-3.0, -1.0, 1.0, 3.0]);
    }

    #[test]
    fn coarse_detail_orthogonal() {
        let op = StrokeOperator::new(4).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let x = ImageTensor::randn(1, 8, 8, &mut rng);
        let c = op.coarse_project(&x).unwrap();
        let d = op.detail_project(&x).unwrap();
        assert!(c.inner(&d).unwrap().abs() < 1e-12);
        assert!(c.add(&d).unwrap().max_abs_diff(&x).unwrap() < 1e-12);
    }

    #[test]
    fn mix_identity_cases() {
        let op = StrokeOperator::new(2).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let x = ImageTensor::randn(1, 4, 4, &mut rng);
        // w = 0 must be a bitwise no-op
        assert_eq!(op.mix(&x, 0.0).unwrap(), x);
        // block-constant inputs are fixed points for any w
        let xc = op.apply(&x).unwrap();
        assert!(op.mix(&xc, 0.7).unwrap().max_abs_diff(&xc).unwrap() < 1e-12);
    }

    #[test]
    fn mix_energy_identity() {
        let op = StrokeOperator::new(2).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let x = ImageTensor::randn(1, 4, 4, &mut rng);
        let mixed = op.mix(&x, 0.5).unwrap();
        let c = op.coarse_project(&x).unwrap().sq_norm();
        let d = op.detail_project(&x).unwrap().sq_norm();
        let expect = c + 0.25 * d;
        assert!((mixed.sq_norm() - expect).abs() <= 1e-12 * expect.max(1.0));
    }

    #[test]
    fn mix_rejects_bad_weight() {
        let op = StrokeOperator::new(2).unwrap();
        let x = ImageTensor::zeros(1, 2, 2);
        assert!(op.mix(&x, 1.0).is_err());
        assert!(op.mix(&x, -0.1).is_err());
    }

    #[test]
    fn mix_inverse_round_trip() {
        let op = StrokeOperator::new(2).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let x = ImageTensor::randn(1, 4, 4, &mut rng);
        for &w in &[0.0, 0.3, 0.5, 0.9] {
            let back = op.mix(&op.mix_inverse(&x, w).unwrap(), w).unwrap();
            assert!(back.max_abs_diff(&x).unwrap() < 1e-12);
        }
    }

    #[test]
    fn roughness_schedule_defaults() {
        // T=500, f_rough=0.75, w_max=0.5: cut at 125, full weight at 500
        let sched = RoughnessSchedule::new(500, 0.75, 0.5).unwrap();
        assert_eq!(sched.t0(), 125);
        assert_eq!(sched.weight(0).unwrap(), 0.0);
        assert_eq!(sched.weight(125).unwrap(), 0.0);
        assert_eq!(sched.weight(500).unwrap(), 0.5);
        let w313 = sched.weight(313).unwrap();
        assert!((w313 - 0.5 * 188.0 / 375.0).abs() < 1e-15);
        assert!(sched.weight(501).is_err());
        // nondecreasing, all within [0, w_max]
        let mut prev = 0.0;
        for t in 0..=500 {
            let w = sched.weight(t).unwrap();
            assert!(w >= prev && w <= 0.5);
            prev = w;
        }
    }

    #[test]
    fn roughness_schedule_rejects_bad_params() {
        assert!(RoughnessSchedule::new(0, 0.5, 0.5).is_err());
        assert!(RoughnessSchedule::new(10, 1.5, 0.5).is_err());
        assert!(RoughnessSchedule::new(10, 0.5, 1.0).is_err());
    }

    #[test]
    fn roughness_edge_fractions() {
        // f_rough = 0: never rough
        let sched = RoughnessSchedule::new(10, 0.0, 0.5).unwrap();
        for t in 0..=10 {
            assert_eq!(sched.weight(t).unwrap(), 0.0);
        }
        // f_rough = 1: ramp over the whole chain
        let sched = RoughnessSchedule::new(10, 1.0, 0.5).unwrap();
        assert_eq!(sched.weight(0).unwrap(), 0.0);
        assert_eq!(sched.weight(10).unwrap(), 0.5);
        assert!((sched.weight(5).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn gamma_values() {
        assert_eq!(attenuation_gamma(0.0, 2), 1.0);
        assert_eq!(attenuation_gamma(2.0 * core::f64::consts::PI, 3), 1.0);
        assert!(attenuation_gamma(core::f64::consts::PI, 2).abs() < 1e-15);
        let g = attenuation_gamma(core::f64::consts::FRAC_PI_2, 2);
        assert!((g - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        // bounded by 1, nonnegative
        for i in 0..100 {
            let om = i as f64 * 0.07;
            let g = attenuation_gamma(om, 4);
            assert!((0.0..=1.0 + 1e-12).contains(&g));
        }
    }

    #[test]
    fn mode_energy_ratio_cases() {
        assert_eq!(mode_energy_ratio(1.0, 0.7).unwrap(), 1.0);
        assert_eq!(mode_energy_ratio(0.0, 0.5).unwrap(), 0.25);
        assert!(mode_energy_ratio(1.2, 0.5).is_err());
        assert!(mode_energy_ratio(0.5, 1.0).is_err());
    }

    #[test]
    fn complexity_cases() {
        let op = StrokeOperator::new(2).unwrap();
        // block-constant: ||x||^2 for any s
        let x = t2x2([3.0, 3.0, 3.0, 3.0]);
        for &s in &[0.0, 0.5, 1.0, 2.0] {
            let c = multires_complexity(&x, &op, s).unwrap();
            assert!((c - x.sq_norm()).abs() < 1e-12);
        }
        // pure detail, s = 1, k = 2: 4 ||x||^2
        let x = t2x2([1.0, -1.0, -1.0, 1.0]);
        let c = multires_complexity(&x, &op, 1.0).unwrap();
        assert!((c - 4.0 * x.sq_norm()).abs() < 1e-12);
        assert!(multires_complexity(&x, &op, -0.5).is_err());
    }

    #[test]
    fn complexity_contracts_under_mix() {
        let op = StrokeOperator::new(2).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let x = ImageTensor::randn(1, 4, 4, &mut rng);
        let s = 1.0;
        let mixed = op.mix(&x, 0.5).unwrap();
        let c_mixed = multires_complexity(&mixed, &op, s).unwrap();
        let c_orig = multires_complexity(&x, &op, s).unwrap();
        let qc = op.coarse_project(&x).unwrap().sq_norm();
        let qd = op.detail_project(&x).unwrap().sq_norm();
        let expect = qc + 4.0 * 0.25 * qd;
        assert!((c_mixed - expect).abs() <= 1e-12 * expect.max(1.0));
        assert!(c_mixed < c_orig);
    }

    #[test]
    fn injected_fault_breaks_self_adjointness() {
        let op = StrokeOperator::with_injected_upsample_fault(2).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let x = ImageTensor::randn(1, 4, 4, &mut rng);
        let y = ImageTensor::randn(1, 4, 4, &mut rng);
        let lhs = op.apply(&x).unwrap().inner(&y).unwrap();
        let rhs = x.inner(&op.apply(&y).unwrap()).unwrap();
        assert!((lhs - rhs).abs() > 1e-6);
    }
}
