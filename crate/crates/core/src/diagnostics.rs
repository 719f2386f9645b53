//! Spectral diagnostics and the simplified one-class calibrated score.
//!
//! The DFT is a direct O(N^2)-per-axis transform; desk-scale grids make
//! correctness (Parseval, symmetry) the contract, not speed. Band SNR
//! follows the deviation-from-mean definition: signal power is the
//! reference-mean spectrum, noise power is the per-image deviation
//! spectrum, both summed over a radial band.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::tensor::ImageTensor;

/// Stabilizer added to the deviation power before the log.
pub const SNR_STABILIZER: f64 = 1e-12;
/// Per-image cap on the reported SNR magnitude: +cap when the deviation
/// vanishes, -cap when the reference band carries no power at all.
pub const SNR_CAP_DB: f64 = 120.0;
/// Low band: normalized radius <= 0.3.
pub const LOW_BAND_MAX_RADIUS: f64 = 0.3;
/// High band: normalized radius >= 0.6.
pub const HIGH_BAND_MIN_RADIUS: f64 = 0.6;

/// Unweighted channel mean as a single-channel tensor.
pub fn grayscale(x: &ImageTensor) -> ImageTensor {
    let (c, h, w) = x.shape();
    if c == 1 {
        return x.clone();
    }
    let mut out = ImageTensor::zeros(1, h, w);
    let inv = 1.0 / c as f64;
    for ch in 0..c {
        for r in 0..h {
            for col in 0..w {
                let v = out.get(0, r, col) + x.get(ch, r, col) * inv;
                out.set(0, r, col, v);
            }
        }
    }
    out
}

fn check_single_channel(x: &ImageTensor) -> Result<()> {
    if x.channels() != 1 {
        return Err(Error::InvalidArgument(alloc::format!(
            "expected a grayscale grid, got {} channels",
            x.channels()
        )));
    }
    Ok(())
}

/// Full 2D DFT of a grayscale grid, natural (uncentered) bin order.
fn dft2(x: &ImageTensor) -> Result<Vec<Complex<f64>>> {
    check_single_channel(x)?;
    let (_, h, w) = x.shape();
    let tw_w = twiddles(w);
    let tw_h = twiddles(h);
    // rows first
    let mut rows = vec![Complex::new(0.0, 0.0); h * w];
    for r in 0..h {
        for v in 0..w {
            let mut acc = Complex::new(0.0, 0.0);
            for c in 0..w {
                acc += tw_w[(v * c) % w] * x.get(0, r, c);
            }
            rows[r * w + v] = acc;
        }
    }
    // then columns
    let mut out = vec![Complex::new(0.0, 0.0); h * w];
    for u in 0..h {
        for v in 0..w {
            let mut acc = Complex::new(0.0, 0.0);
            for r in 0..h {
                acc += tw_h[(u * r) % h] * rows[r * w + v];
            }
            out[u * w + v] = acc;
        }
    }
    Ok(out)
}

fn twiddles(n: usize) -> Vec<Complex<f64>> {
    (0..n)
        .map(|m| {
            let angle = -2.0 * core::f64::consts::PI * m as f64 / n as f64;
            Complex::new(libm::cos(angle), libm::sin(angle))
        })
        .collect()
}

/// Centered (zero frequency in the middle) squared-magnitude spectrum.
fn dft2_power_centered(x: &ImageTensor) -> Result<ImageTensor> {
    let (_, h, w) = x.shape();
    let f = dft2(x)?;
    let mut out = ImageTensor::zeros(1, h, w);
    for u in 0..h {
        for v in 0..w {
            let cu = (u + h / 2) % h;
            let cv = (v + w / 2) % w;
            out.set(0, cu, cv, f[u * w + v].norm_sqr());
        }
    }
    Ok(out)
}

/// Centered log(1 + magnitude) of the 2D DFT.
pub fn dft2_logmag(x: &ImageTensor) -> Result<ImageTensor> {
    let power = dft2_power_centered(x)?;
    let (_, h, w) = power.shape();
    let mut out = ImageTensor::zeros(1, h, w);
    for i in 0..out.len() {
        out.data_mut()[i] = libm::log(1.0 + libm::sqrt(power.data()[i]));
    }
    Ok(out)
}

/// Sum of squared DFT magnitudes; equals H * W * sum of squared pixels
/// (Parseval) and is used as the oracle for the transform.
pub fn spectrum_energy(x: &ImageTensor) -> Result<f64> {
    Ok(dft2(x)?.iter().map(|c| c.norm_sqr()).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandKind {
    Low,
    High,
}

/// Boolean mask over centered frequency bins selected by normalized
/// radius (radius divided by the maximum radius on the centered grid).
#[derive(Debug, Clone, PartialEq)]
pub struct BandMask {
    height: usize,
    width: usize,
    pub kind: BandKind,
    mask: Vec<bool>,
}

impl BandMask {
    pub fn new(height: usize, width: usize, kind: BandKind) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument("mask dims must be positive".into()));
        }
        let max_radius = libm::sqrt(((height / 2) * (height / 2) + (width / 2) * (width / 2)) as f64)
            .max(1.0);
        let mut mask = vec![false; height * width];
        for p in 0..height {
            for q in 0..width {
                let fy = p as f64 - (height / 2) as f64;
                let fx = q as f64 - (width / 2) as f64;
                let r_norm = libm::sqrt(fy * fy + fx * fx) / max_radius;
                mask[p * width + q] = match kind {
                    BandKind::Low => r_norm <= LOW_BAND_MAX_RADIUS,
                    BandKind::High => r_norm >= HIGH_BAND_MIN_RADIUS,
                };
            }
        }
        Ok(Self {
            height,
            width,
            kind,
            mask,
        })
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.width + col]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn band_power(&self, power: &ImageTensor) -> f64 {
        let mut sum = 0.0;
        for p in 0..self.height {
            for q in 0..self.width {
                if self.mask[p * self.width + q] {
                    sum += power.get(0, p, q);
                }
            }
        }
        sum
    }
}

/// Mean over images of 10 log10( band power of the reference spectrum /
/// (band power of the deviation spectrum + stabilizer) ), capped per image
/// at `SNR_CAP_DB`.
pub fn band_snr(
    generated: &[ImageTensor],
    reference_mean: &ImageTensor,
    band: &BandMask,
) -> Result<f64> {
    if generated.is_empty() {
        return Err(Error::Empty("generated image set"));
    }
    let reference_gray = grayscale(reference_mean);
    let (_, h, w) = reference_gray.shape();
    if band.shape() != (h, w) {
        return Err(Error::InvalidArgument(
            "band mask does not match image dims".into(),
        ));
    }
    let signal_power = band.band_power(&dft2_power_centered(&reference_gray)?);
    let mut total = 0.0;
    for image in generated {
        let gray = grayscale(image);
        if gray.shape() != reference_gray.shape() {
            return Err(Error::ShapeMismatch {
                left_channels: 1,
                left_height: gray.height(),
                left_width: gray.width(),
                right_channels: 1,
                right_height: h,
                right_width: w,
            });
        }
        let delta = gray.sub(&reference_gray)?;
        let noise_power = band.band_power(&dft2_power_centered(&delta)?);
        let snr = 10.0 * libm::log10(signal_power / (noise_power + SNR_STABILIZER));
        total += snr.clamp(-SNR_CAP_DB, SNR_CAP_DB);
    }
    Ok(total / generated.len() as f64)
}

/// Fixed training-free feature map: k-block average pooling, flattened
/// (dimension C * (H/k) * (W/k)).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockPoolFeatures {
    pub k: usize,
}

impl BlockPoolFeatures {
    pub fn extract(&self, x: &ImageTensor) -> Result<Vec<f64>> {
        if self.k == 0 {
            return Err(Error::ZeroBlockSize);
        }
        let (c, h, w) = x.shape();
        if h % self.k != 0 {
            return Err(Error::NotDivisible {
                axis: "height",
                extent: h,
                k: self.k,
            });
        }
        if w % self.k != 0 {
            return Err(Error::NotDivisible {
                axis: "width",
                extent: w,
                k: self.k,
            });
        }
        let inv = 1.0 / (self.k * self.k) as f64;
        let mut out = Vec::with_capacity(c * (h / self.k) * (w / self.k));
        for ch in 0..c {
            for bp in 0..h / self.k {
                for bq in 0..w / self.k {
                    let mut sum = 0.0;
                    for r in 0..self.k {
                        for s in 0..self.k {
                            sum += x.get(ch, bp * self.k + r, bq * self.k + s);
                        }
                    }
                    out.push(sum * inv);
                }
            }
        }
        Ok(out)
    }
}

/// Per-class feature centers and sorted squared-distance tables defining
/// the empirical CDFs.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCalibration {
    centers: Vec<Vec<f64>>,
    tables: Vec<Vec<f64>>,
}

impl ClassCalibration {
    /// Build centers and distance tables from a calibration split.
    /// Labels are 1..=num_classes; every class needs at least one image.
    pub fn fit(
        images: &[ImageTensor],
        labels: &[usize],
        num_classes: usize,
        features: &BlockPoolFeatures,
    ) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Empty("calibration set"));
        }
        if images.len() != labels.len() {
            return Err(Error::InvalidArgument(
                "calibration images and labels differ in length".into(),
            ));
        }
        if num_classes == 0 {
            return Err(Error::InvalidArgument("need at least one class".into()));
        }
        let dim = features.extract(&images[0])?.len();
        let mut sums = vec![vec![0.0; dim]; num_classes];
        let mut counts = vec![0usize; num_classes];
        let mut feats = Vec::with_capacity(images.len());
        for (image, &label) in images.iter().zip(labels) {
            if label == 0 || label > num_classes {
                return Err(Error::LabelOutOfRange {
                    label,
                    max: num_classes,
                });
            }
            let f = features.extract(image)?;
            for (s, v) in sums[label - 1].iter_mut().zip(&f) {
                *s += v;
            }
            counts[label - 1] += 1;
            feats.push((label, f));
        }
        let mut centers = Vec::with_capacity(num_classes);
        for (class, count) in counts.iter().enumerate() {
            if *count == 0 {
                return Err(Error::InvalidArgument(alloc::format!(
                    "class {} has no calibration images",
                    class + 1
                )));
            }
            centers.push(sums[class].iter().map(|s| s / *count as f64).collect());
        }
        let mut tables = vec![Vec::new(); num_classes];
        for (label, f) in &feats {
            let center: &Vec<f64> = &centers[label - 1];
            let d_sq: f64 = f
                .iter()
                .zip(center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            tables[label - 1].push(d_sq);
        }
        for table in &mut tables {
            table.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        }
        Ok(Self { centers, tables })
    }

    pub fn num_classes(&self) -> usize {
        self.centers.len()
    }

    pub fn center(&self, label: usize) -> Result<&[f64]> {
        self.check_label(label)?;
        Ok(&self.centers[label - 1])
    }

    pub fn table(&self, label: usize) -> Result<&[f64]> {
        self.check_label(label)?;
        Ok(&self.tables[label - 1])
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label == 0 || label > self.centers.len() {
            return Err(Error::LabelOutOfRange {
                label,
                max: self.centers.len(),
            });
        }
        Ok(())
    }

    /// 1 - (rank of d_sq in the class table) / (table size). The rank
    /// counts calibration distances <= d_sq, so a distance below every
    /// table entry scores 1.
    pub fn score_from_distance(&self, d_sq: f64, label: usize) -> Result<f64> {
        self.check_label(label)?;
        let table = &self.tables[label - 1];
        let rank = table.partition_point(|&v| v <= d_sq);
        Ok(1.0 - rank as f64 / table.len() as f64)
    }
}

/// Calibrated typicality score in [0, 1] (multiply by 100 for the
/// percentile scale used in reports).
pub fn one_class_score(
    x: &ImageTensor,
    label: usize,
    calib: &ClassCalibration,
    features: &BlockPoolFeatures,
) -> Result<f64> {
    let f = features.extract(x)?;
    let center = calib.center(label)?;
    if f.len() != center.len() {
        return Err(Error::InvalidArgument(
            "feature dimension does not match calibration".into(),
        ));
    }
    let d_sq: f64 = f
        .iter()
        .zip(center)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    calib.score_from_distance(d_sq, label)
}
