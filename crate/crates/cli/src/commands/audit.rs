//! `mstk audit`: spectral band SNR and one-class calibrated scores for a
//! generated sample set against the synthetic reference distribution.

use std::path::{Path, PathBuf};

use mstk_core::denoiser::synthetic_shapes;
use mstk_core::diagnostics::{
    band_snr, dft2_logmag, grayscale, one_class_score, BandKind, BandMask, BlockPoolFeatures,
    ClassCalibration,
};
use mstk_core::ImageTensor;

use crate::config::{ReferenceMode, RunConfig};
use crate::error::{CliError, Result};
use crate::manifest::{prepare_out_dir, write_manifest};
use crate::pgm::{write_pgm, PgmScale};
use crate::tensor_file::read_tensor;

/// Feature block size of the fixed one-class feature map.
const FEATURE_POOL_K: usize = 2;

pub fn execute(config: &RunConfig, out_dir: &Path) -> Result<()> {
    let samples_dir = config.samples_dir.as_ref().ok_or_else(|| {
        CliError::Config("audit requires a 'samples_dir' entry in the config".into())
    })?;
    let (generated, labels) = load_samples(samples_dir)?;
    prepare_out_dir(out_dir)?;

    // reference data: the synthetic distribution the models were trained on
    let reference = synthetic_shapes(
        config.dataset_size,
        config.image_channels,
        config.image_size,
        config.num_classes,
        config.seed,
    )?;
    let (h, w) = (generated[0].height(), generated[0].width());
    if (h, w) != (config.image_size, config.image_size) {
        return Err(CliError::Config(format!(
            "samples are {h}x{w} but the config says image_size = {}",
            config.image_size
        )));
    }

    let num_classes = config.num_classes;
    let per_class_mean = |class: usize| -> Result<ImageTensor> {
        let mut acc = ImageTensor::zeros(config.image_channels, h, w);
        let mut count = 0usize;
        for i in 0..reference.len() {
            if reference.label(i) == class {
                acc = acc.add(reference.image(i))?;
                count += 1;
            }
        }
        if count == 0 {
            return Err(CliError::Config(format!(
                "reference set has no images of class {class}"
            )));
        }
        Ok(acc.scaled(1.0 / count as f64))
    };
    let global_mean = {
        let mut acc = ImageTensor::zeros(config.image_channels, h, w);
        for i in 0..reference.len() {
            acc = acc.add(reference.image(i))?;
        }
        acc.scaled(1.0 / reference.len() as f64)
    };

    let mut rows: Vec<(String, String, f64)> = Vec::new();
    for kind in [BandKind::Low, BandKind::High] {
        let band = BandMask::new(h, w, kind)?;
        let snr = match config.reference_mode {
            ReferenceMode::Global => band_snr(&generated, &global_mean, &band)?,
            ReferenceMode::PerClass => {
                // weighted mean over per-class SNRs
                let mut total = 0.0;
                let mut counted = 0usize;
                for class in 1..=num_classes {
                    let class_samples: Vec<ImageTensor> = generated
                        .iter()
                        .zip(&labels)
                        .filter(|(_, &l)| l == class)
                        .map(|(s, _)| s.clone())
                        .collect();
                    if class_samples.is_empty() {
                        continue;
                    }
                    let mean = per_class_mean(class)?;
                    total += band_snr(&class_samples, &mean, &band)? * class_samples.len() as f64;
                    counted += class_samples.len();
                }
                if counted == 0 {
                    return Err(CliError::Config("no labeled samples to audit".into()));
                }
                total / counted as f64
            }
        };
        let name = match kind {
            BandKind::Low => "low",
            BandKind::High => "high",
        };
        rows.push(("band_snr".into(), name.into(), snr));
    }

    // one-class calibration on the calibration split of the reference set
    let split = ((reference.len() as f64) * config.calib_split) as usize;
    let split = split.clamp(1, reference.len() - 1);
    let features = BlockPoolFeatures { k: FEATURE_POOL_K };
    let calib_images: Vec<ImageTensor> =
        (0..split).map(|i| reference.image(i).clone()).collect();
    let calib_labels: Vec<usize> = (0..split).map(|i| reference.label(i)).collect();
    let calib = ClassCalibration::fit(&calib_images, &calib_labels, num_classes, &features)?;

    let mut per_class_total = vec![0.0; num_classes];
    let mut per_class_count = vec![0usize; num_classes];
    for (sample, &label) in generated.iter().zip(&labels) {
        let score = one_class_score(sample, label, &calib, &features)?;
        per_class_total[label - 1] += score;
        per_class_count[label - 1] += 1;
    }
    let mut overall_total = 0.0;
    let mut overall_count = 0usize;
    for class in 1..=num_classes {
        if per_class_count[class - 1] > 0 {
            let mean = per_class_total[class - 1] / per_class_count[class - 1] as f64;
            // percentile scale, as reported
            rows.push(("one_class_mean".into(), format!("class_{class}"), 100.0 * mean));
            overall_total += per_class_total[class - 1];
            overall_count += per_class_count[class - 1];
        }
    }
    rows.push((
        "one_class_mean".into(),
        "all".into(),
        100.0 * overall_total / overall_count as f64,
    ));

    // self-consistency: held-out real data should score near the 50th
    // percentile on average
    let mut held_out_total = 0.0;
    let mut held_out_count = 0usize;
    for i in split..reference.len() {
        held_out_total +=
            one_class_score(reference.image(i), reference.label(i), &calib, &features)?;
        held_out_count += 1;
    }
    rows.push((
        "one_class_held_out_mean".into(),
        "all".into(),
        100.0 * held_out_total / held_out_count as f64,
    ));

    let mut csv = String::from("metric,band_or_class,value\n");
    for (metric, tag, value) in &rows {
        csv.push_str(&format!("{metric},{tag},{value:e}\n"));
    }
    let audit_path = out_dir.join("audit.csv");
    std::fs::write(&audit_path, csv).map_err(CliError::io(&audit_path))?;

    // averaged log-magnitude spectra for eyeballing
    let mean_logmag = |set: &[ImageTensor]| -> Result<ImageTensor> {
        let mut acc = ImageTensor::zeros(1, h, w);
        for image in set {
            acc = acc.add(&dft2_logmag(&grayscale(image))?)?;
        }
        Ok(acc.scaled(1.0 / set.len() as f64))
    };
    let reference_images: Vec<ImageTensor> =
        (0..reference.len()).map(|i| reference.image(i).clone()).collect();
    write_pgm(
        &out_dir.join("dft_generated.pgm"),
        &mean_logmag(&generated)?,
        PgmScale::MinMax,
    )?;
    write_pgm(
        &out_dir.join("dft_reference.pgm"),
        &mean_logmag(&reference_images)?,
        PgmScale::MinMax,
    )?;

    write_manifest(
        out_dir,
        config.seed,
        &config.to_lines(),
        &[
            PathBuf::from("audit.csv"),
            PathBuf::from("dft_generated.pgm"),
            PathBuf::from("dft_reference.pgm"),
        ],
    )?;
    for (metric, tag, value) in &rows {
        println!("{metric:<24} {tag:<10} {value:>12.4}");
    }
    Ok(())
}

/// Read a sample run directory: labels.csv plus samples/sample_*.mstk.
fn load_samples(dir: &Path) -> Result<(Vec<ImageTensor>, Vec<usize>)> {
    let labels_path = dir.join("labels.csv");
    let text = std::fs::read_to_string(&labels_path).map_err(CliError::io(&labels_path))?;
    let mut generated = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            if line.trim() != "index,label" {
                return Err(CliError::format(&labels_path, "expected header 'index,label'"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (index, label) = line.split_once(',').ok_or_else(|| {
            CliError::format(&labels_path, format!("line {}: expected 'index,label'", lineno + 1))
        })?;
        let index: usize = index.trim().parse().map_err(|_| {
            CliError::format(&labels_path, format!("line {}: bad index", lineno + 1))
        })?;
        let label: usize = label.trim().parse().map_err(|_| {
            CliError::format(&labels_path, format!("line {}: bad label", lineno + 1))
        })?;
        let tensor_path = dir.join("samples").join(format!("sample_{index:04}.mstk"));
        generated.push(read_tensor(&tensor_path)?);
        labels.push(label);
    }
    if generated.is_empty() {
        return Err(CliError::Config(format!(
            "no samples listed in {}",
            labels_path.display()
        )));
    }
    Ok((generated, labels))
}
