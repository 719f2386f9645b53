//! `mstk sample`: load a checkpoint and draw class-conditional samples
//! along a subsampled reverse chain, writing tensors, graymaps, the label
//! table, and the manifest.

use std::path::{Path, PathBuf};

use mstk_core::rng::chacha_stream;
use mstk_core::sampler::{sample_ddpm, sample_multistroke, SampleMode, SamplePlan};
use mstk_core::diffusion::NoiseSchedule;
use mstk_core::stroke::{RoughnessSchedule, StrokeOperator};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::manifest::{prepare_out_dir, write_manifest};
use crate::pgm::{write_pgm, PgmScale};
use crate::tensor_file::write_tensor;

/// Per-sample RNG streams start here so they never collide with the
/// training streams of the same seed.
const SAMPLE_STREAM_BASE: u64 = 1_000;

pub fn execute(config: &RunConfig, out_dir: &Path) -> Result<()> {
    let checkpoint_path = config.checkpoint.as_ref().ok_or_else(|| {
        CliError::Config("sample requires a 'checkpoint' entry in the config".into())
    })?;
    let model = checkpoint::load(checkpoint_path)?;
    let sched = NoiseSchedule::linear(config.timesteps, config.beta_start, config.beta_end)?;
    let rough = RoughnessSchedule::new(config.timesteps, config.f_rough, config.w_max)?;
    let op = StrokeOperator::new(config.stroke_k)?;
    let plan = SamplePlan::subsampled(
        config.timesteps,
        config.sample_steps,
        config.variance,
        config.mode,
    )?;

    prepare_out_dir(out_dir)?;
    let samples_dir = out_dir.join("samples");
    std::fs::create_dir(&samples_dir).map_err(CliError::io(&samples_dir))?;

    let num_classes = model.config().num_classes;
    let mut labels_csv = String::from("index,label\n");
    let mut files = Vec::new();
    for i in 0..config.num_samples {
        let label = 1 + (i % num_classes);
        let mut rng = chacha_stream(config.seed, SAMPLE_STREAM_BASE + i as u64);
        let sample = match config.mode {
            SampleMode::Ddpm => sample_ddpm(&model, &sched, &plan, label, &mut rng)?,
            SampleMode::MultiStroke => {
                sample_multistroke(&model, &sched, &rough, &op, &plan, label, &mut rng)?
            }
        };
        let stem = format!("sample_{i:04}");
        write_tensor(&samples_dir.join(format!("{stem}.mstk")), &sample)?;
        write_pgm(
            &samples_dir.join(format!("{stem}.pgm")),
            &sample,
            PgmScale::SignedUnit,
        )?;
        labels_csv.push_str(&format!("{i},{label}\n"));
        files.push(PathBuf::from("samples").join(format!("{stem}.mstk")));
        files.push(PathBuf::from("samples").join(format!("{stem}.pgm")));
    }
    let labels_path = out_dir.join("labels.csv");
    std::fs::write(&labels_path, labels_csv).map_err(CliError::io(&labels_path))?;
    files.push(PathBuf::from("labels.csv"));
    write_manifest(out_dir, config.seed, &config.to_lines(), &files)?;
    println!(
        "wrote {} samples over {} reverse steps into {}",
        config.num_samples,
        plan.steps(),
        out_dir.display()
    );
    Ok(())
}
