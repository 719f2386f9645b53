//! Flat key = value run configuration. '#' starts a comment, unknown keys
//! are rejected with their line number, and the whole file is parsed
//! before anything is applied. Paths referenced by a config must exist at
//! load time.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mstk_core::diffusion::{TargetAlign, VarianceConvention};
use mstk_core::sampler::SampleMode;
use mstk_core::surrogate::DetailBlockKind;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // schedule
    pub timesteps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    // stroke
    pub stroke_k: usize,
    pub f_rough: f64,
    pub w_max: f64,
    // shared
    pub mode: SampleMode,
    pub variance: VarianceConvention,
    pub seed: u64,
    // training
    pub lr: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub train_steps: usize,
    pub label_drop_prob: f64,
    pub loss_buckets: usize,
    pub target_align: TargetAlign,
    // data
    pub image_size: usize,
    pub image_channels: usize,
    pub num_classes: usize,
    pub dataset_size: usize,
    // sampling
    pub checkpoint: Option<PathBuf>,
    pub num_samples: usize,
    pub sample_steps: usize,
    // surrogate simulation
    pub sim_steps: usize,
    pub sim_samples: usize,
    pub sim_channels: usize,
    pub sim_height: usize,
    pub sim_width: usize,
    pub rho: Vec<f64>,
    pub kappa: Vec<f64>,
    pub sigma: Vec<f64>,
    pub bias_energy: Vec<f64>,
    pub sim_block: DetailBlockKind,
    pub coarse_gain: f64,
    // audit
    pub samples_dir: Option<PathBuf>,
    pub reference_mode: ReferenceMode,
    pub calib_split: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceMode {
    PerClass,
    Global,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            timesteps: 500,
            beta_start: 1e-4,
            beta_end: 2.8e-2,
            stroke_k: 2,
            f_rough: 0.75,
            w_max: 0.5,
            mode: SampleMode::MultiStroke,
            variance: VarianceConvention::FixedLarge,
            seed: 42,
            lr: 1e-4,
            weight_decay: 1e-4,
            clip_norm: 1.0,
            batch_size: 32,
            train_steps: 2000,
            label_drop_prob: 0.1,
            loss_buckets: 5,
            target_align: TargetAlign::Current,
            image_size: 8,
            image_channels: 1,
            num_classes: 4,
            dataset_size: 256,
            checkpoint: None,
            num_samples: 16,
            sample_steps: 10,
            sim_steps: 10,
            sim_samples: 100_000,
            sim_channels: 1,
            sim_height: 8,
            sim_width: 8,
            rho: vec![0.5],
            kappa: vec![0.0],
            sigma: vec![0.1],
            bias_energy: vec![0.0],
            sim_block: DetailBlockKind::RandomOrthogonal,
            coarse_gain: 1.0,
            samples_dir: None,
            reference_mode: ReferenceMode::PerClass,
            calib_split: 0.8,
        }
    }
}

fn bad(line: usize, message: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("config line {line}: {message}"))
}

fn parse_scalar<T: std::str::FromStr>(value: &str, line: usize, kind: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| bad(line, format!("'{value}' is not a valid {kind}")))
}

fn parse_f64_list(value: &str, line: usize) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|item| parse_scalar::<f64>(item.trim(), line, "real number"))
        .collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let mut config = Self::from_text(&text)?;
        config.resolve_paths(path)?;
        Ok(config)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        let mut config = Self::default();
        for (index, raw_line) in text.lines().enumerate() {
            let line = index + 1;
            let content = raw_line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(bad(line, "expected 'key = value'"));
            };
            let key = key.trim();
            let value = value.trim();
            if value.is_empty() {
                return Err(bad(line, format!("key '{key}' has an empty value")));
            }
            if let Some(previous) = seen.insert(key.to_string(), line) {
                return Err(bad(
                    line,
                    format!("key '{key}' already set on line {previous}"),
                ));
            }
            config.apply(key, value, line)?;
        }
        config.validate()?;
        Ok(config)
    }

    fn apply(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        match key {
            "timesteps" => self.timesteps = parse_scalar(value, line, "positive integer")?,
            "beta_start" => self.beta_start = parse_scalar(value, line, "real number")?,
            "beta_end" => self.beta_end = parse_scalar(value, line, "real number")?,
            "stroke_k" => self.stroke_k = parse_scalar(value, line, "positive integer")?,
            "f_rough" => self.f_rough = parse_scalar(value, line, "real number")?,
            "w_max" => self.w_max = parse_scalar(value, line, "real number")?,
            "mode" => {
                self.mode = match value {
                    "ddpm" => SampleMode::Ddpm,
                    "multistroke" => SampleMode::MultiStroke,
                    other => return Err(bad(line, format!("unknown mode '{other}'"))),
                }
            }
            "variance" => {
                self.variance = match value {
                    "fixedlarge" => VarianceConvention::FixedLarge,
                    "fixedsmall" => VarianceConvention::FixedSmall,
                    other => return Err(bad(line, format!("unknown variance '{other}'"))),
                }
            }
            "seed" => self.seed = parse_scalar(value, line, "unsigned integer")?,
            "lr" => self.lr = parse_scalar(value, line, "real number")?,
            "weight_decay" => self.weight_decay = parse_scalar(value, line, "real number")?,
            "clip_norm" => self.clip_norm = parse_scalar(value, line, "real number")?,
            "batch_size" => self.batch_size = parse_scalar(value, line, "positive integer")?,
            "train_steps" => self.train_steps = parse_scalar(value, line, "integer")?,
            "label_drop_prob" => self.label_drop_prob = parse_scalar(value, line, "real number")?,
            "loss_buckets" => self.loss_buckets = parse_scalar(value, line, "positive integer")?,
            "target_align" => {
                self.target_align = match value {
                    "current" => TargetAlign::Current,
                    "next" => TargetAlign::NextState,
                    other => return Err(bad(line, format!("unknown target_align '{other}'"))),
                }
            }
            "image_size" => self.image_size = parse_scalar(value, line, "positive integer")?,
            "image_channels" => {
                self.image_channels = parse_scalar(value, line, "positive integer")?
            }
            "num_classes" => self.num_classes = parse_scalar(value, line, "positive integer")?,
            "dataset_size" => self.dataset_size = parse_scalar(value, line, "positive integer")?,
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "num_samples" => self.num_samples = parse_scalar(value, line, "positive integer")?,
            "sample_steps" => self.sample_steps = parse_scalar(value, line, "positive integer")?,
            "sim_steps" => self.sim_steps = parse_scalar(value, line, "positive integer")?,
            "sim_samples" => self.sim_samples = parse_scalar(value, line, "positive integer")?,
            "sim_channels" => self.sim_channels = parse_scalar(value, line, "positive integer")?,
            "sim_height" => self.sim_height = parse_scalar(value, line, "positive integer")?,
            "sim_width" => self.sim_width = parse_scalar(value, line, "positive integer")?,
            "rho" => self.rho = parse_f64_list(value, line)?,
            "kappa" => self.kappa = parse_f64_list(value, line)?,
            "sigma" => self.sigma = parse_f64_list(value, line)?,
            "bias_energy" => self.bias_energy = parse_f64_list(value, line)?,
            "sim_block" => {
                self.sim_block = match value {
                    "orthogonal" => DetailBlockKind::RandomOrthogonal,
                    "scalar" => DetailBlockKind::Scalar,
                    other => return Err(bad(line, format!("unknown sim_block '{other}'"))),
                }
            }
            "coarse_gain" => self.coarse_gain = parse_scalar(value, line, "real number")?,
            "samples_dir" => self.samples_dir = Some(PathBuf::from(value)),
            "reference_mode" => {
                self.reference_mode = match value {
                    "per_class" => ReferenceMode::PerClass,
                    "global" => ReferenceMode::Global,
                    other => return Err(bad(line, format!("unknown reference_mode '{other}'"))),
                }
            }
            "calib_split" => self.calib_split = parse_scalar(value, line, "real number")?,
            other => {
                return Err(bad(line, format!("unknown key '{other}'")));
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let check = |ok: bool, message: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(CliError::Config(message.to_string()))
            }
        };
        check(self.timesteps >= 1, "timesteps must be at least 1")?;
        check(self.stroke_k >= 1, "stroke_k must be at least 1")?;
        check(
            (0.0..=1.0).contains(&self.f_rough),
            "f_rough must lie in [0, 1]",
        )?;
        check(
            (0.0..1.0).contains(&self.w_max),
            "w_max must lie in [0, 1)",
        )?;
        check(
            (0.0..=1.0).contains(&self.label_drop_prob),
            "label_drop_prob must lie in [0, 1]",
        )?;
        check(
            (0.0..1.0).contains(&self.calib_split) && self.calib_split > 0.0,
            "calib_split must lie in (0, 1)",
        )?;
        check(
            self.image_size % self.stroke_k == 0,
            "image_size must be divisible by stroke_k",
        )?;
        check(
            self.sample_steps <= self.timesteps,
            "sample_steps cannot exceed timesteps",
        )?;
        Ok(())
    }

    /// Make config-relative paths absolute against the config location and
    /// require them to exist.
    fn resolve_paths(&mut self, config_path: &Path) -> Result<()> {
        let base = config_path.parent().unwrap_or_else(|| Path::new("."));
        for entry in [&mut self.checkpoint, &mut self.samples_dir] {
            if let Some(path) = entry {
                if path.is_relative() {
                    *path = base.join(&path);
                }
                if !path.exists() {
                    return Err(CliError::Config(format!(
                        "referenced path does not exist: {}",
                        path.display()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Broadcast a per-step table to `sim_steps` entries.
    pub fn sim_table(&self, name: &str, table: &[f64]) -> Result<Vec<f64>> {
        if table.len() == 1 {
            return Ok(vec![table[0]; self.sim_steps]);
        }
        if table.len() != self.sim_steps {
            return Err(CliError::Config(format!(
                "{name} has {} entries but sim_steps = {}",
                table.len(),
                self.sim_steps
            )));
        }
        Ok(table.to_vec())
    }

    /// Resolved key/value view, written into manifests so a run is
    /// reproducible from the manifest alone.
    pub fn to_lines(&self) -> Vec<(String, String)> {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut lines = vec![
            ("timesteps".into(), self.timesteps.to_string()),
            ("beta_start".into(), format!("{}", self.beta_start)),
            ("beta_end".into(), format!("{}", self.beta_end)),
            ("stroke_k".into(), self.stroke_k.to_string()),
            ("f_rough".into(), format!("{}", self.f_rough)),
            ("w_max".into(), format!("{}", self.w_max)),
            (
                "mode".into(),
                match self.mode {
                    SampleMode::Ddpm => "ddpm".into(),
                    SampleMode::MultiStroke => "multistroke".into(),
                },
            ),
            (
                "variance".into(),
                match self.variance {
                    VarianceConvention::FixedLarge => "fixedlarge".into(),
                    VarianceConvention::FixedSmall => "fixedsmall".into(),
                },
            ),
            ("seed".into(), self.seed.to_string()),
            ("lr".into(), format!("{}", self.lr)),
            ("weight_decay".into(), format!("{}", self.weight_decay)),
            ("clip_norm".into(), format!("{}", self.clip_norm)),
            ("batch_size".into(), self.batch_size.to_string()),
            ("train_steps".into(), self.train_steps.to_string()),
            ("label_drop_prob".into(), format!("{}", self.label_drop_prob)),
            ("loss_buckets".into(), self.loss_buckets.to_string()),
            (
                "target_align".into(),
                match self.target_align {
                    TargetAlign::Current => "current".into(),
                    TargetAlign::NextState => "next".into(),
                },
            ),
            ("image_size".into(), self.image_size.to_string()),
            ("image_channels".into(), self.image_channels.to_string()),
            ("num_classes".into(), self.num_classes.to_string()),
            ("dataset_size".into(), self.dataset_size.to_string()),
            ("num_samples".into(), self.num_samples.to_string()),
            ("sample_steps".into(), self.sample_steps.to_string()),
            ("sim_steps".into(), self.sim_steps.to_string()),
            ("sim_samples".into(), self.sim_samples.to_string()),
            ("sim_channels".into(), self.sim_channels.to_string()),
            ("sim_height".into(), self.sim_height.to_string()),
            ("sim_width".into(), self.sim_width.to_string()),
            ("rho".into(), join(&self.rho)),
            ("kappa".into(), join(&self.kappa)),
            ("sigma".into(), join(&self.sigma)),
            ("bias_energy".into(), join(&self.bias_energy)),
            (
                "sim_block".into(),
                match self.sim_block {
                    DetailBlockKind::RandomOrthogonal => "orthogonal".into(),
                    DetailBlockKind::Scalar => "scalar".into(),
                },
            ),
            ("coarse_gain".into(), format!("{}", self.coarse_gain)),
            (
                "reference_mode".into(),
                match self.reference_mode {
                    ReferenceMode::PerClass => "per_class".into(),
                    ReferenceMode::Global => "global".into(),
                },
            ),
            ("calib_split".into(), format!("{}", self.calib_split)),
        ];
        if let Some(p) = &self.checkpoint {
            lines.push(("checkpoint".into(), p.display().to_string()));
        }
        if let Some(p) = &self.samples_dir {
            lines.push(("samples_dir".into(), p.display().to_string()));
        }
        lines
    }
}
