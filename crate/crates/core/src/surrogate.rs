//! Affine surrogate reverse dynamics and the detail-energy bound checks.
//!
//! The surrogate update is x_{t-1} = M_t A_t(x_t) + b_t + sigma_t eta~_t
//! with declared operator norms for the detail-to-detail block (rho_t) and
//! the coarse-to-detail block (kappa_t). States are evolved in an exact
//! orthonormal coefficient basis of the coarse/detail split (a per-block
//! Helmert basis), so detail energies are plain squared norms of the
//! detail coefficients and the noise dimension N_t is analytic.
//!
//! Blocks are realized as random orthogonal-like maps and rescaled so a
//! power-iteration estimate of the spectral norm equals the declared
//! value; `verify_norms` re-certifies the stored blocks.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, Mat};
use crate::rng::chacha_stream;
use crate::stroke::RoughnessSchedule;
use crate::tensor::ImageTensor;

const POWER_ITER_TOL: f64 = 1e-8;
const POWER_ITER_CAP: usize = 10_000;

/// Image geometry plus block size; fixes the coarse/detail dimension split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SurrogateDims {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub k: usize,
}

impl SurrogateDims {
    pub fn new(channels: usize, height: usize, width: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::ZeroBlockSize);
        }
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidArgument("dims must be positive".into()));
        }
        if height % k != 0 {
            return Err(Error::NotDivisible {
                axis: "height",
                extent: height,
                k,
            });
        }
        if width % k != 0 {
            return Err(Error::NotDivisible {
                axis: "width",
                extent: width,
                k,
            });
        }
        Ok(Self {
            channels,
            height,
            width,
            k,
        })
    }

    pub fn total(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn coarse(&self) -> usize {
        self.channels * (self.height / self.k) * (self.width / self.k)
    }

    pub fn detail(&self) -> usize {
        self.total() - self.coarse()
    }
}

/// Orthonormal per-block basis splitting image space into block averages
/// (coarse) and within-block variations (detail). Row 0 of the block
/// matrix is the normalized constant vector; rows 1..k^2 are the Helmert
/// vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockBasis {
    dims: SurrogateDims,
    block: Mat,
}

impl BlockBasis {
    pub fn new(dims: SurrogateDims) -> Self {
        let n = dims.k * dims.k;
        let mut block = Mat::zeros(n, n);
        let inv = 1.0 / libm::sqrt(n as f64);
        for j in 0..n {
            block.set(0, j, inv);
        }
        for row in 1..n {
            let scale = 1.0 / libm::sqrt((row * (row + 1)) as f64);
            for j in 0..row {
                block.set(row, j, scale);
            }
            block.set(row, row, -(row as f64) * scale);
        }
        Self { dims, block }
    }

    pub fn dims(&self) -> SurrogateDims {
        self.dims
    }

    fn check_shape(&self, x: &ImageTensor) -> Result<()> {
        let d = self.dims;
        if x.shape() != (d.channels, d.height, d.width) {
            return Err(Error::ShapeMismatch {
                left_channels: x.channels(),
                left_height: x.height(),
                left_width: x.width(),
                right_channels: d.channels,
                right_height: d.height,
                right_width: d.width,
            });
        }
        Ok(())
    }

    /// Split a tensor into (coarse, detail) coefficient vectors.
    pub fn to_coeffs(&self, x: &ImageTensor) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_shape(x)?;
        let d = self.dims;
        let k = d.k;
        let n = k * k;
        let mut coarse = Vec::with_capacity(d.coarse());
        let mut detail = Vec::with_capacity(d.detail());
        let mut block_vals = vec![0.0; n];
        for c in 0..d.channels {
            for bp in 0..d.height / k {
                for bq in 0..d.width / k {
                    for r in 0..k {
                        for s in 0..k {
                            block_vals[r * k + s] = x.get(c, bp * k + r, bq * k + s);
                        }
                    }
                    let coeffs = self.block.matvec(&block_vals);
                    coarse.push(coeffs[0]);
                    detail.extend_from_slice(&coeffs[1..]);
                }
            }
        }
        Ok((coarse, detail))
    }

    /// Rebuild the tensor from coefficient vectors.
    pub fn from_coeffs(&self, coarse: &[f64], detail: &[f64]) -> Result<ImageTensor> {
        let d = self.dims;
        if coarse.len() != d.coarse() || detail.len() != d.detail() {
            return Err(Error::InvalidArgument(alloc::format!(
                "coefficient lengths {}/{} do not match dims {}/{}",
                coarse.len(),
                detail.len(),
                d.coarse(),
                d.detail()
            )));
        }
        let k = d.k;
        let n = k * k;
        let mut out = ImageTensor::zeros(d.channels, d.height, d.width);
        let mut coeffs = vec![0.0; n];
        let mut block_index = 0;
        for c in 0..d.channels {
            for bp in 0..d.height / k {
                for bq in 0..d.width / k {
                    coeffs[0] = coarse[block_index];
                    coeffs[1..].copy_from_slice(
                        &detail[block_index * (n - 1)..(block_index + 1) * (n - 1)],
                    );
                    let vals = self.block.matvec_t(&coeffs);
                    for r in 0..k {
                        for s in 0..k {
                            out.set(c, bp * k + r, bq * k + s, vals[r * k + s]);
                        }
                    }
                    block_index += 1;
                }
            }
        }
        Ok(out)
    }
}

/// How the detail-to-detail block is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetailBlockKind {
    /// rho_t times the identity on the detail subspace.
    Scalar,
    /// rho_t times a random orthogonal map of the detail subspace.
    RandomOrthogonal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateConfig {
    pub dims: SurrogateDims,
    /// Chain length n; steps run t = n..1.
    pub steps: usize,
    /// Declared detail-to-detail norms, index t-1, length n.
    pub rho: Vec<f64>,
    /// Declared coarse-to-detail norms, index t-1, length n.
    pub kappa: Vec<f64>,
    /// Injected noise scales, index t-1, length n.
    pub sigma: Vec<f64>,
    /// Detail bias energies B_t, index t-1, length n.
    pub bias_energy: Vec<f64>,
    /// Stroke weights w_0..w_n, length n+1.
    pub weights: Vec<f64>,
    /// Scalar coarse-to-coarse gain applied at every step.
    pub coarse_gain: f64,
    pub detail_kind: DetailBlockKind,
    /// Monte Carlo trajectories.
    pub samples: usize,
    pub seed: u64,
}

/// Constant-weight table (w_0 = 0 per the chain convention).
pub fn constant_weights(w: f64, steps: usize) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&w) {
        return Err(Error::WeightOutOfRange { w });
    }
    let mut table = vec![w; steps + 1];
    table[0] = 0.0;
    Ok(table)
}

/// Weight table of a roughness schedule (length T+1).
pub fn weights_from_schedule(rough: &RoughnessSchedule) -> Vec<f64> {
    (0..=rough.t_total())
        .map(|t| rough.weight(t).expect("t in range"))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
enum DetailBlock {
    Scalar(f64),
    Dense(Mat),
}

/// A realized chain: certified blocks plus the tables they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateChainSpec {
    config: SurrogateConfig,
    basis: BlockBasis,
    detail_blocks: Vec<DetailBlock>,
    cross_blocks: Vec<Option<Mat>>,
    bias_detail: Vec<Vec<f64>>,
}

impl SurrogateChainSpec {
    pub fn config(&self) -> &SurrogateConfig {
        &self.config
    }

    pub fn basis(&self) -> &BlockBasis {
        &self.basis
    }

    /// Re-certify stored block norms against the declared tables; returns
    /// the maximum absolute deviation.
    pub fn verify_norms(&self) -> Result<f64> {
        let mut rng = chacha_stream(self.config.seed, 0);
        let mut worst = 0.0_f64;
        for (i, block) in self.detail_blocks.iter().enumerate() {
            let est = match block {
                DetailBlock::Scalar(f) => f.abs(),
                DetailBlock::Dense(m) => spectral_norm(m, POWER_ITER_TOL, POWER_ITER_CAP, &mut rng)?,
            };
            worst = worst.max((est - self.config.rho[i]).abs());
        }
        for (i, block) in self.cross_blocks.iter().enumerate() {
            let est = match block {
                None => 0.0,
                Some(m) => spectral_norm(m, POWER_ITER_TOL, POWER_ITER_CAP, &mut rng)?,
            };
            worst = worst.max((est - self.config.kappa[i]).abs());
        }
        Ok(worst)
    }
}

/// Realize the chain blocks and certify their norms.
pub fn build_surrogate(config: SurrogateConfig) -> Result<SurrogateChainSpec> {
    let n = config.steps;
    if n == 0 {
        return Err(Error::InvalidArgument("chain needs at least one step".into()));
    }
    for (name, table) in [
        ("rho", &config.rho),
        ("kappa", &config.kappa),
        ("sigma", &config.sigma),
        ("bias_energy", &config.bias_energy),
    ] {
        if table.len() != n {
            return Err(Error::InvalidArgument(alloc::format!(
                "{name} table has length {}, expected {n}",
                table.len()
            )));
        }
        if table.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(alloc::format!(
                "{name} table must be finite and nonnegative"
            )));
        }
    }
    if config.weights.len() != n + 1 {
        return Err(Error::InvalidArgument(alloc::format!(
            "weights table has length {}, expected {}",
            config.weights.len(),
            n + 1
        )));
    }
    if config.weights.iter().any(|w| !(0.0..1.0).contains(w)) {
        return Err(Error::InvalidArgument("weights must lie in [0, 1)".into()));
    }
    if config.samples == 0 {
        return Err(Error::Empty("trajectory budget"));
    }
    if config.dims.detail() == 0 {
        return Err(Error::InvalidArgument(
            "block size 1 leaves an empty detail subspace".into(),
        ));
    }

    let d_d = config.dims.detail();
    let d_c = config.dims.coarse();
    let basis = BlockBasis::new(config.dims);
    let mut rng = chacha_stream(config.seed, 0);

    let mut detail_blocks = Vec::with_capacity(n);
    let mut cross_blocks = Vec::with_capacity(n);
    let mut bias_detail = Vec::with_capacity(n);
    for i in 0..n {
        let rho = config.rho[i];
        detail_blocks.push(match config.detail_kind {
            DetailBlockKind::Scalar => DetailBlock::Scalar(rho),
            DetailBlockKind::RandomOrthogonal => {
                if rho == 0.0 {
                    DetailBlock::Scalar(0.0)
                } else {
                    let mut q = Mat::randn(d_d, d_d, &mut rng);
                    q.orthonormalize_columns()?;
                    let est = spectral_norm(&q, POWER_ITER_TOL, POWER_ITER_CAP, &mut rng)?;
                    q.scale_in_place(rho / est);
                    DetailBlock::Dense(q)
                }
            }
        });
        let kappa = config.kappa[i];
        cross_blocks.push(if kappa == 0.0 {
            None
        } else {
            // column-orthonormal (d_c <= d_d for k >= 2), so the spectral
            // norm is exactly 1 before scaling
            let mut m = Mat::randn(d_d, d_c, &mut rng);
            m.orthonormalize_columns()?;
            let est = spectral_norm(&m, POWER_ITER_TOL, POWER_ITER_CAP, &mut rng)?;
            m.scale_in_place(kappa / est);
            Some(m)
        });
        let energy = config.bias_energy[i];
        bias_detail.push(if energy == 0.0 {
            vec![0.0; d_d]
        } else {
            let mut dir: Vec<f64> = (0..d_d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = libm::sqrt(dir.iter().map(|v| v * v).sum::<f64>());
            let scale = libm::sqrt(energy) / norm;
            for v in &mut dir {
                *v *= scale;
            }
            dir
        });
    }
    Ok(SurrogateChainSpec {
        config,
        basis,
        detail_blocks,
        cross_blocks,
        bias_detail,
    })
}

/// Per-chain-index energy estimates (t = n..0).
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTraceRow {
    pub t: usize,
    /// Mean detail energy E_t and its standard error.
    pub detail_energy: f64,
    pub detail_energy_se: f64,
    /// Mean coarse energy C_t^(2) and its standard error.
    pub coarse_energy: f64,
    pub coarse_energy_se: f64,
    /// Analytic detail noise dimension N_t.
    pub noise_detail_dim: f64,
    /// Analytic detail bias energy B_t (0 at t = 0, which has no step).
    pub bias_detail_energy: f64,
}

/// Per-step bound statistics for the step t -> t-1.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMargin {
    pub t: usize,
    /// Bound value from mean energies.
    pub bound: f64,
    /// Mean per-trajectory margin (bound terms minus realized E_{t-1}).
    pub margin: f64,
    pub margin_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTrace {
    pub rows: Vec<EnergyTraceRow>,
    pub margins: Vec<StepMargin>,
    pub samples: usize,
}

struct MeanAccumulator {
    sum: f64,
    sum_sq: f64,
}

impl MeanAccumulator {
    fn new() -> Self {
        Self {
            sum: 0.0,
            sum_sq: 0.0,
        }
    }

    fn push(&mut self, v: f64) {
        self.sum += v;
        self.sum_sq += v * v;
    }

    fn mean(&self, n: usize) -> f64 {
        self.sum / n as f64
    }

    fn se(&self, n: usize) -> f64 {
        if n < 2 {
            return 0.0;
        }
        let mean = self.mean(n);
        let var = (self.sum_sq - self.sum * mean) / (n - 1) as f64;
        libm::sqrt(var.max(0.0) / n as f64)
    }
}

/// Run the Monte Carlo trajectories and collect the energy trace.
/// Trajectory j draws from stream j+1 of the chain seed; the reduction
/// order over trajectories is fixed.
pub fn simulate(spec: &SurrogateChainSpec) -> Result<EnergyTrace> {
    let cfg = &spec.config;
    let n = cfg.steps;
    let d_c = cfg.dims.coarse();
    let d_d = cfg.dims.detail();
    let samples = cfg.samples;

    let mut detail_acc: Vec<MeanAccumulator> = (0..=n).map(|_| MeanAccumulator::new()).collect();
    let mut coarse_acc: Vec<MeanAccumulator> = (0..=n).map(|_| MeanAccumulator::new()).collect();
    let mut margin_acc: Vec<MeanAccumulator> = (0..n).map(|_| MeanAccumulator::new()).collect();

    for traj in 0..samples {
        let mut rng = chacha_stream(cfg.seed, 1 + traj as u64);
        let mut coarse: Vec<f64> = (0..d_c).map(|_| rng.sample(StandardNormal)).collect();
        let mut detail: Vec<f64> = (0..d_d).map(|_| rng.sample(StandardNormal)).collect();
        // initialize as A_n applied to the Gaussian draw
        let shrink_init = 1.0 - cfg.weights[n];
        for v in &mut detail {
            *v *= shrink_init;
        }

        for t in (1..=n).rev() {
            let e_t: f64 = detail.iter().map(|v| v * v).sum();
            let c_t: f64 = coarse.iter().map(|v| v * v).sum();
            detail_acc[t].push(e_t);
            coarse_acc[t].push(c_t);

            let i = t - 1;
            let w_t = cfg.weights[t];
            let w_dest = cfg.weights[t - 1];
            let sigma = cfg.sigma[i];

            // M_dd A_t restricted to detail: block applied to (1-w_t) b
            let mixed_detail: Vec<f64> = detail.iter().map(|v| v * (1.0 - w_t)).collect();
            let mut new_detail = match &spec.detail_blocks[i] {
                DetailBlock::Scalar(f) => mixed_detail.iter().map(|v| f * v).collect::<Vec<f64>>(),
                DetailBlock::Dense(m) => m.matvec(&mixed_detail),
            };
            if let Some(m) = &spec.cross_blocks[i] {
                for (nd, v) in new_detail.iter_mut().zip(m.matvec(&coarse)) {
                    *nd += v;
                }
            }
            for (nd, b) in new_detail.iter_mut().zip(&spec.bias_detail[i]) {
                *nd += b;
            }
            if sigma > 0.0 {
                let noise_shrink = sigma * (1.0 - w_dest);
                for nd in new_detail.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *nd += noise_shrink * z;
                }
            }
            let mut new_coarse: Vec<f64> = coarse.iter().map(|v| cfg.coarse_gain * v).collect();
            if sigma > 0.0 {
                for nc in new_coarse.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *nc += sigma * z;
                }
            }

            let e_next: f64 = new_detail.iter().map(|v| v * v).sum();
            let shrink_t = 1.0 - w_t;
            let shrink_dest = 1.0 - w_dest;
            let bound_terms = 3.0 * cfg.kappa[i] * cfg.kappa[i] * c_t
                + 3.0 * cfg.rho[i] * cfg.rho[i] * shrink_t * shrink_t * e_t
                + 3.0 * cfg.bias_energy[i]
                + sigma * sigma * shrink_dest * shrink_dest * d_d as f64;
            margin_acc[i].push(bound_terms - e_next);

            detail = new_detail;
            coarse = new_coarse;
        }
        detail_acc[0].push(detail.iter().map(|v| v * v).sum());
        coarse_acc[0].push(coarse.iter().map(|v| v * v).sum());
    }

    let mut rows = Vec::with_capacity(n + 1);
    for t in (0..=n).rev() {
        rows.push(EnergyTraceRow {
            t,
            detail_energy: detail_acc[t].mean(samples),
            detail_energy_se: detail_acc[t].se(samples),
            coarse_energy: coarse_acc[t].mean(samples),
            coarse_energy_se: coarse_acc[t].se(samples),
            noise_detail_dim: d_d as f64,
            bias_detail_energy: if t >= 1 { cfg.bias_energy[t - 1] } else { 0.0 },
        });
    }
    let mut margins = Vec::with_capacity(n);
    for t in (1..=n).rev() {
        let i = t - 1;
        let shrink_t = 1.0 - cfg.weights[t];
        let shrink_dest = 1.0 - cfg.weights[t - 1];
        let bound = 3.0 * cfg.kappa[i] * cfg.kappa[i] * coarse_acc[t].mean(samples)
            + 3.0 * cfg.rho[i] * cfg.rho[i] * shrink_t * shrink_t * detail_acc[t].mean(samples)
            + 3.0 * cfg.bias_energy[i]
            + cfg.sigma[i] * cfg.sigma[i] * shrink_dest * shrink_dest * d_d as f64;
        margins.push(StepMargin {
            t,
            bound,
            margin: margin_acc[i].mean(samples),
            margin_se: margin_acc[i].se(samples),
        });
    }
    Ok(EnergyTrace {
        rows,
        margins,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub t: usize,
    pub bound: f64,
    pub margin: f64,
    pub slack: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub steps: Vec<BoundCheck>,
    pub all_passed: bool,
}

/// Assert the per-step three-term bound with a 3-standard-error cushion.
pub fn check_bound(trace: &EnergyTrace, spec: &SurrogateChainSpec) -> Result<BoundReport> {
    if trace.margins.len() != spec.config.steps {
        return Err(Error::InvalidArgument(
            "trace does not match the chain spec".into(),
        ));
    }
    let mut steps = Vec::with_capacity(trace.margins.len());
    let mut all_passed = true;
    for m in &trace.margins {
        let slack = 3.0 * m.margin_se + 1e-12 * (1.0 + m.bound.abs());
        let passed = m.margin >= -slack;
        all_passed &= passed;
        steps.push(BoundCheck {
            t: m.t,
            bound: m.bound,
            margin: m.margin,
            slack,
            passed,
        });
    }
    Ok(BoundReport { steps, all_passed })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IteratedReport {
    /// Uniform contraction factor rho_max^2 (1 - w_min)^2.
    pub q: f64,
    pub block_len: usize,
    pub entry_energy: f64,
    pub exit_energy: f64,
    pub bound: f64,
    pub slack: f64,
    pub passed: bool,
}

/// Geometric-decay bound over a block of steps t_hi..=t_lo (each step
/// moves t -> t-1; the exit state has index t_lo - 1). Requires the clean
/// regime on the whole block: kappa = 0, bias = 0, rho < 1, w >= w_min > 0.
pub fn iterated_bound(
    trace: &EnergyTrace,
    spec: &SurrogateChainSpec,
    t_hi: usize,
    t_lo: usize,
) -> Result<IteratedReport> {
    let cfg = &spec.config;
    let n = cfg.steps;
    if !(1 <= t_lo && t_lo <= t_hi && t_hi <= n) {
        return Err(Error::InvalidArgument(alloc::format!(
            "block {t_hi}..{t_lo} outside chain 1..={n}"
        )));
    }
    if trace.rows.len() != n + 1 {
        return Err(Error::InvalidArgument(
            "trace does not match the chain spec".into(),
        ));
    }
    let mut rho_max = 0.0_f64;
    let mut w_min = f64::INFINITY;
    let mut noise_floor = 0.0_f64;
    for t in t_lo..=t_hi {
        let i = t - 1;
        if cfg.kappa[i] != 0.0 {
            return Err(Error::Precondition(alloc::format!(
                "iterated bound needs kappa = 0 on the block, got {} at step {t}",
                cfg.kappa[i]
            )));
        }
        if cfg.bias_energy[i] != 0.0 {
            return Err(Error::Precondition(alloc::format!(
                "iterated bound needs zero detail bias on the block, got {} at step {t}",
                cfg.bias_energy[i]
            )));
        }
        rho_max = rho_max.max(cfg.rho[i]);
        w_min = w_min.min(cfg.weights[t]);
        let shrink_dest = 1.0 - cfg.weights[t - 1];
        noise_floor = noise_floor.max(
            cfg.sigma[i] * cfg.sigma[i] * shrink_dest * shrink_dest * cfg.dims.detail() as f64,
        );
    }
    if rho_max >= 1.0 {
        return Err(Error::Precondition(alloc::format!(
            "iterated bound needs rho < 1 on the block, got {rho_max}"
        )));
    }
    if w_min <= 0.0 {
        return Err(Error::Precondition(
            "iterated bound needs w >= w_min > 0 on the block".into(),
        ));
    }
    let q = rho_max * rho_max * (1.0 - w_min) * (1.0 - w_min);
    let block_len = t_hi - t_lo + 1;
    let q_pow = libm::pow(q, block_len as f64);
    let geometric = if q == 0.0 {
        1.0
    } else {
        (1.0 - q_pow) / (1.0 - q)
    };

    let row_at = |t: usize| trace.rows.iter().find(|r| r.t == t).expect("trace covers 0..=n");
    let entry = row_at(t_hi);
    let exit = row_at(t_lo - 1);
    let bound = q_pow * entry.detail_energy + geometric * noise_floor;
    let slack = 3.0 * (exit.detail_energy_se + q_pow * entry.detail_energy_se)
        + 1e-12 * (1.0 + bound.abs());
    Ok(IteratedReport {
        q,
        block_len,
        entry_energy: entry.detail_energy,
        exit_energy: exit.detail_energy,
        bound,
        slack,
        passed: exit.detail_energy <= bound + slack,
    })
}
