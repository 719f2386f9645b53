//! `mstk train`: build the synthetic dataset, train the denoiser in the
//! configured mode, and write the checkpoint, metrics CSVs, and manifest.

use std::path::{Path, PathBuf};

use mstk_core::denoiser::{synthetic_shapes, train, DenoiserModel, ModelConfig, TrainConfig, TrainLog, TrainMode};
use mstk_core::diffusion::NoiseSchedule;
use mstk_core::rng::chacha_stream;
use mstk_core::sampler::SampleMode;
use mstk_core::stroke::{RoughnessSchedule, StrokeOperator};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::manifest::{prepare_out_dir, write_manifest};

/// Stream ids carved out of the run seed: 0 is the training loop
/// (batches), 1 is model initialization.
const MODEL_INIT_STREAM: u64 = 1;

pub fn execute(config: &RunConfig, out_dir: &Path) -> Result<()> {
    prepare_out_dir(out_dir)?;
    let sched = NoiseSchedule::linear(config.timesteps, config.beta_start, config.beta_end)?;
    let rough = RoughnessSchedule::new(config.timesteps, config.f_rough, config.w_max)?;
    let op = StrokeOperator::new(config.stroke_k)?;
    let data = synthetic_shapes(
        config.dataset_size,
        config.image_channels,
        config.image_size,
        config.num_classes,
        config.seed,
    )?;
    let model_cfg = ModelConfig::desk_default(
        config.image_channels,
        config.image_size,
        config.image_size,
        config.num_classes,
    );
    let mut init_rng = chacha_stream(config.seed, MODEL_INIT_STREAM);
    let mut model = DenoiserModel::init(model_cfg, &mut init_rng)?;
    let train_cfg = TrainConfig {
        learning_rate: config.lr,
        weight_decay: config.weight_decay,
        clip_norm: config.clip_norm,
        batch_size: config.batch_size,
        total_steps: config.train_steps,
        label_drop_prob: config.label_drop_prob,
        seed: config.seed,
        loss_buckets: config.loss_buckets,
        target_align: config.target_align,
    };
    let mode = match config.mode {
        SampleMode::Ddpm => TrainMode::Ddpm,
        SampleMode::MultiStroke => TrainMode::MultiStroke,
    };
    let log = train(&mut model, &data, &sched, &rough, &op, &train_cfg, mode)?;

    checkpoint::save(&out_dir.join("checkpoint.mstk"), &model)?;
    write_metrics(&out_dir.join("metrics.csv"), &log, MetricsKind::Raw)?;
    write_metrics(
        &out_dir.join("metrics_normalized.csv"),
        &log,
        MetricsKind::Normalized,
    )?;

    let files = vec![
        PathBuf::from("checkpoint.mstk"),
        PathBuf::from("metrics.csv"),
        PathBuf::from("metrics_normalized.csv"),
    ];
    write_manifest(out_dir, config.seed, &config.to_lines(), &files)?;
    println!(
        "trained {} steps ({} mode); final loss {:.6}",
        config.train_steps,
        match mode {
            TrainMode::Ddpm => "ddpm",
            TrainMode::MultiStroke => "multistroke",
        },
        log.steps.last().map_or(f64::NAN, |s| s.loss)
    );
    Ok(())
}

#[derive(Clone, Copy)]
enum MetricsKind {
    Raw,
    Normalized,
}

/// Metrics log: step,loss,grad_norm,bucket_0..bucket_{B-1} where the
/// bucket columns carry running means up to that step. The normalized
/// variant divides each sample loss by the stroke shrink factor before
/// averaging.
fn write_metrics(path: &Path, log: &TrainLog, kind: MetricsKind) -> Result<()> {
    let buckets = log.buckets.len();
    let mut text = String::from("step,loss,grad_norm");
    for b in 0..buckets {
        text.push_str(&format!(",bucket_{b}"));
    }
    text.push('\n');
    let mut counts = vec![0u64; buckets];
    let mut sums = vec![0.0; buckets];
    for rec in &log.steps {
        for b in 0..buckets {
            counts[b] += rec.bucket_counts[b];
            sums[b] += match kind {
                MetricsKind::Raw => rec.bucket_raw_sums[b],
                MetricsKind::Normalized => rec.bucket_normalized_sums[b],
            };
        }
        text.push_str(&format!("{},{:e},{:e}", rec.step, rec.loss, rec.grad_norm));
        for b in 0..buckets {
            let mean = if counts[b] > 0 {
                sums[b] / counts[b] as f64
            } else {
                0.0
            };
            text.push_str(&format!(",{mean:e}"));
        }
        text.push('\n');
    }
    std::fs::write(path, text).map_err(CliError::io(path))
}
