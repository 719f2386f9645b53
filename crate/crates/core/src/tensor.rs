//! Dense CHW image tensor used for states, noises, predictions, and
//! projector outputs. All arithmetic is f64; every constructor rejects
//! non-finite entries so downstream operator identities can be checked
//! against tight tolerances.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 || data.len() != channels * height * width {
            return Err(Error::ShapeDataMismatch {
                channels,
                height,
                width,
                len: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn constant(channels: usize, height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(channels, height, width, vec![value; channels * height * width])
    }

    /// Standard normal draw, one f64 per entry, in flat row-major order.
    pub fn randn<R: Rng + ?Sized>(channels: usize, height: usize, width: usize, rng: &mut R) -> Self {
        let data = (0..channels * height * width)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[(channel * self.height + row) * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, channel: usize, row: usize, col: usize, value: f64) {
        self.data[(channel * self.height + row) * self.width + col] = value;
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                left_channels: self.channels,
                left_height: self.height,
                left_width: self.width,
                right_channels: other.channels,
                right_height: other.height,
                right_width: other.width,
            })
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self {
            data,
            ..*self
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self {
            data,
            ..*self
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            data: self.data.iter().map(|a| a * factor).collect(),
            ..*self
        }
    }

    /// self + factor * other
    pub fn axpy(&self, factor: f64, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + factor * b)
            .collect();
        Ok(Self {
            data,
            ..*self
        })
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.sq_norm())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn rejects_wrong_length() {
        let err = ImageTensor::new(1, 2, 2, vec![0.0; 3]).unwrap_err();
        assert!(matches!(err, Error::ShapeDataMismatch { len: 3, .. }));
    }

    #[test]
    fn rejects_non_finite() {
        let err = ImageTensor::new(1, 1, 2, vec![0.0, f64::NAN]).unwrap_err();
        assert_eq!(err, Error::NonFinite { index: 1 });
        let err = ImageTensor::new(1, 1, 2, vec![f64::INFINITY, 0.0]).unwrap_err();
        assert_eq!(err, Error::NonFinite { index: 0 });
    }

    #[test]
    fn shape_mismatch_on_binary_ops() {
        let a = ImageTensor::zeros(1, 2, 2);
        let b = ImageTensor::zeros(1, 2, 4);
        assert!(a.add(&b).is_err());
        assert!(a.inner(&b).is_err());
    }

    #[test]
    fn arithmetic_roundtrip() {
        let a = ImageTensor::new(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = ImageTensor::new(1, 2, 2, vec![0.5, -1.0, 2.0, 0.0]).unwrap();
        let c = a.add(&b).unwrap().sub(&b).unwrap();
        assert_eq!(c, a);
        assert_eq!(a.axpy(2.0, &b).unwrap().get(0, 0, 1), 0.0);
        assert_eq!(a.inner(&b).unwrap(), 0.5 - 2.0 + 6.0);
        assert_eq!(a.sq_norm(), 30.0);
    }

    #[test]
    fn randn_is_seed_deterministic() {
        let mut r1 = ChaCha12Rng::seed_from_u64(7);
        let mut r2 = ChaCha12Rng::seed_from_u64(7);
        let a = ImageTensor::randn(2, 3, 3, &mut r1);
        let b = ImageTensor::randn(2, 3, 3, &mut r2);
        assert_eq!(a, b);
    }
}
