//! Binary portable graymap (P5) export for eyeballing samples and
//! spectra. Multi-channel tensors are averaged to grayscale first.

use std::path::Path;

use mstk_core::diagnostics::grayscale;
use mstk_core::ImageTensor;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmScale {
    /// Clamp values to [-1, 1], then map linearly to 0..=255.
    SignedUnit,
    /// Map [min, max] of the data to 0..=255.
    MinMax,
}

pub fn write_pgm(path: &Path, tensor: &ImageTensor, scale: PgmScale) -> Result<()> {
    let gray = grayscale(tensor);
    let (_, h, w) = gray.shape();
    let to_byte: Box<dyn Fn(f64) -> u8> = match scale {
        PgmScale::SignedUnit => Box::new(|v: f64| {
            let clamped = v.clamp(-1.0, 1.0);
            ((clamped + 1.0) * 0.5 * 255.0).round() as u8
        }),
        PgmScale::MinMax => {
            let min = gray.data().iter().cloned().fold(f64::INFINITY, f64::min);
            let max = gray.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let span = (max - min).max(1e-12);
            Box::new(move |v: f64| (((v - min) / span) * 255.0).round() as u8)
        }
    };
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend(gray.data().iter().map(|&v| to_byte(v)));
    std::fs::write(path, bytes).map_err(CliError::io(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_payload_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let t = ImageTensor::new(1, 2, 3, vec![-1.0, 0.0, 1.0, 2.0, -2.0, 0.5]).unwrap();
        write_pgm(&path, &t, PgmScale::SignedUnit).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len(), header.len() + 6);
        // clamping: -1 -> 0, 1 and 2 -> 255
        assert_eq!(bytes[header.len()], 0);
        assert_eq!(bytes[header.len() + 2], 255);
        assert_eq!(bytes[header.len() + 3], 255);
    }
}
