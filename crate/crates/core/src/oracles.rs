//! Independent analytic and brute-force oracles for the population-level
//! claims: the stroke-space objective shares its minimizer with the plain
//! objective, the conditional mean is the L2 projection, and the target
//! complexity decomposes exactly under the mixing map.
//!
//! Everything here is deliberately redundant with the main implementation
//! path: closed forms are re-derived from first principles (linear-Gaussian
//! posterior, exhaustive enumeration) and cross-checked by Monte Carlo
//! regression before any test relies on them.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::linalg::{solve, Mat};
use crate::rng::chacha_stream;
use crate::stroke::{multires_complexity, StrokeOperator};
use crate::tensor::ImageTensor;

/// Diagonal Gaussian prior over x0: per-pixel mean and variance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianToy {
    mean: ImageTensor,
    variance: ImageTensor,
}

impl GaussianToy {
    pub fn new(mean: ImageTensor, variance: ImageTensor) -> Result<Self> {
        if !mean.same_shape(&variance) {
            return Err(Error::ShapeMismatch {
                left_channels: mean.channels(),
                left_height: mean.height(),
                left_width: mean.width(),
                right_channels: variance.channels(),
                right_height: variance.height(),
                right_width: variance.width(),
            });
        }
        if variance.data().iter().any(|&v| v <= 0.0) {
            return Err(Error::InvalidArgument(
                "prior variance must be positive".into(),
            ));
        }
        Ok(Self { mean, variance })
    }

    pub fn mean(&self) -> &ImageTensor {
        &self.mean
    }

    pub fn variance(&self) -> &ImageTensor {
        &self.variance
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.mean.shape()
    }
}

/// Posterior-mean coefficient for one pixel:
/// sqrt(1 - ab) / (ab sigma0^2 + (1 - ab)). Derived from the joint
/// Gaussian of (eps, x_t); `check_posterior_regression` validates it.
fn posterior_coefficient(alpha_bar: f64, sigma0_sq: f64) -> f64 {
    let noise_var = 1.0 - alpha_bar;
    libm::sqrt(noise_var) / (alpha_bar * sigma0_sq + noise_var)
}

/// E[eps | x_t] for the diagonal Gaussian toy:
/// per pixel, coef * (x_t - sqrt(ab) mu0).
pub fn eps_posterior_mean(
    x_t: &ImageTensor,
    t: usize,
    toy: &GaussianToy,
    sched: &NoiseSchedule,
) -> Result<ImageTensor> {
    if !x_t.same_shape(toy.mean()) {
        return Err(Error::ShapeMismatch {
            left_channels: x_t.channels(),
            left_height: x_t.height(),
            left_width: x_t.width(),
            right_channels: toy.mean().channels(),
            right_height: toy.mean().height(),
            right_width: toy.mean().width(),
        });
    }
    if t < 1 || t > sched.t_total() {
        return Err(Error::TimestepOutOfRange {
            t,
            lo: 1,
            hi: sched.t_total(),
        });
    }
    let ab = sched.alpha_bar(t)?;
    let sqrt_ab = libm::sqrt(ab);
    let (c, h, w) = x_t.shape();
    let mut out = ImageTensor::zeros(c, h, w);
    for i in 0..x_t.len() {
        let coef = posterior_coefficient(ab, toy.variance().data()[i]);
        out.data_mut()[i] = coef * (x_t.data()[i] - sqrt_ab * toy.mean().data()[i]);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionCheck {
    /// Worst per-pixel relative gap between the MC slope and the analytic
    /// coefficient.
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Validate the posterior coefficient by per-pixel linear regression of
/// eps on x_t over `samples` Monte Carlo draws.
pub fn check_posterior_regression(
    toy: &GaussianToy,
    t: usize,
    sched: &NoiseSchedule,
    samples: usize,
    seed: u64,
) -> Result<RegressionCheck> {
    if samples < 2 {
        return Err(Error::Empty("regression sample budget"));
    }
    let ab = sched.alpha_bar(t)?;
    if t < 1 {
        return Err(Error::TimestepOutOfRange {
            t,
            lo: 1,
            hi: sched.t_total(),
        });
    }
    let sqrt_ab = libm::sqrt(ab);
    let sqrt_nv = libm::sqrt(1.0 - ab);
    let d = toy.mean().len();
    let mut sum_x = vec![0.0; d];
    let mut sum_xx = vec![0.0; d];
    let mut sum_y = vec![0.0; d];
    let mut sum_xy = vec![0.0; d];
    let mut rng = chacha_stream(seed, 0);
    for _ in 0..samples {
        for i in 0..d {
            let z0: f64 = rng.sample(StandardNormal);
            let eps: f64 = rng.sample(StandardNormal);
            let x0 = toy.mean().data()[i] + libm::sqrt(toy.variance().data()[i]) * z0;
            let x_t = sqrt_ab * x0 + sqrt_nv * eps;
            sum_x[i] += x_t;
            sum_xx[i] += x_t * x_t;
            sum_y[i] += eps;
            sum_xy[i] += x_t * eps;
        }
    }
    let n = samples as f64;
    let mut worst = 0.0_f64;
    for i in 0..d {
        let var = sum_xx[i] / n - (sum_x[i] / n) * (sum_x[i] / n);
        let cov = sum_xy[i] / n - (sum_x[i] / n) * (sum_y[i] / n);
        let slope = cov / var;
        let analytic = posterior_coefficient(ab, toy.variance().data()[i]);
        worst = worst.max((slope - analytic).abs() / analytic.abs());
    }
    let tolerance = 0.005;
    Ok(RegressionCheck {
        max_relative_error: worst,
        tolerance,
        passed: worst <= tolerance,
    })
}

/// Dense matrix of the mixing map x -> (1-w) x + w S_k x on a given shape.
fn operator_matrix(op: &StrokeOperator, w: f64, shape: (usize, usize, usize)) -> Result<Mat> {
    let (c, h, wd) = shape;
    let d = c * h * wd;
    let mut m = Mat::zeros(d, d);
    for j in 0..d {
        let mut e = ImageTensor::zeros(c, h, wd);
        e.data_mut()[j] = 1.0;
        let col = op.mix(&e, w)?;
        for i in 0..d {
            m.set(i, j, col.data()[i]);
        }
    }
    Ok(m)
}

fn inverse_operator_matrix(
    op: &StrokeOperator,
    w: f64,
    shape: (usize, usize, usize),
) -> Result<Mat> {
    let (c, h, wd) = shape;
    let d = c * h * wd;
    let mut m = Mat::zeros(d, d);
    for j in 0..d {
        let mut e = ImageTensor::zeros(c, h, wd);
        e.data_mut()[j] = 1.0;
        let col = op.mix_inverse(&e, w)?;
        for i in 0..d {
            m.set(i, j, col.data()[i]);
        }
    }
    Ok(m)
}

/// One affine multivariate least-squares fit: coefficients, intercept,
/// and the pieces needed for standard errors.
struct AffineFit {
    /// coeffs[i][j]: output pixel i against input pixel j.
    coeffs: Mat,
    intercept: Vec<f64>,
    /// Residual covariance (d x d).
    resid_cov: Mat,
    /// Diagonal of (X^T X)^{-1}, intercept first.
    gram_inv_diag: Vec<f64>,
}

/// Regress `target` (a linear map of eps) on z = A x_t over fresh draws.
fn fit_affine<R: Rng + ?Sized>(
    toy: &GaussianToy,
    t: usize,
    sched: &NoiseSchedule,
    a_mat: &Mat,
    target: &Mat,
    samples: usize,
    rng: &mut R,
) -> Result<AffineFit> {
    let d = toy.mean().len();
    let p = d + 1;
    let ab = sched.alpha_bar(t)?;
    let sqrt_ab = libm::sqrt(ab);
    let sqrt_nv = libm::sqrt(1.0 - ab);
    if samples <= p + 1 {
        return Err(Error::Empty("fit sample budget"));
    }

    let mut xtx = Mat::zeros(p, p);
    let mut xty = Mat::zeros(p, d);
    let mut yty = Mat::zeros(d, d);
    let mut u = vec![0.0; p];
    let mut x_t_buf = vec![0.0; d];
    let mut eps_buf = vec![0.0; d];
    for _ in 0..samples {
        for i in 0..d {
            let z0: f64 = rng.sample(StandardNormal);
            let eps: f64 = rng.sample(StandardNormal);
            let x0 = toy.mean().data()[i] + libm::sqrt(toy.variance().data()[i]) * z0;
            x_t_buf[i] = sqrt_ab * x0 + sqrt_nv * eps;
            eps_buf[i] = eps;
        }
        let z = a_mat.matvec(&x_t_buf);
        let y = target.matvec(&eps_buf);
        u[0] = 1.0;
        u[1..].copy_from_slice(&z);
        for r in 0..p {
            for cidx in r..p {
                let v = xtx.get(r, cidx) + u[r] * u[cidx];
                xtx.set(r, cidx, v);
            }
            for cidx in 0..d {
                let v = xty.get(r, cidx) + u[r] * y[cidx];
                xty.set(r, cidx, v);
            }
        }
        for r in 0..d {
            for cidx in r..d {
                let v = yty.get(r, cidx) + y[r] * y[cidx];
                yty.set(r, cidx, v);
            }
        }
    }
    // mirror the upper triangles
    for r in 0..p {
        for cidx in 0..r {
            xtx.set(r, cidx, xtx.get(cidx, r));
        }
    }
    for r in 0..d {
        for cidx in 0..r {
            yty.set(r, cidx, yty.get(cidx, r));
        }
    }

    // beta: p x d, one solve per output pixel
    let mut beta = Mat::zeros(p, d);
    for j in 0..d {
        let rhs: Vec<f64> = (0..p).map(|r| xty.get(r, j)).collect();
        let col = solve(&xtx, &rhs)?;
        for r in 0..p {
            beta.set(r, j, col[r]);
        }
    }
    // residual cross-products: (Y^T Y - beta^T X^T Y) / dof
    let mut resid_cov = Mat::zeros(d, d);
    let dof = (samples - p) as f64;
    for i in 0..d {
        for j in 0..d {
            let mut v = yty.get(i, j);
            for r in 0..p {
                v -= beta.get(r, i) * xty.get(r, j);
            }
            resid_cov.set(i, j, v / dof);
        }
    }
    let mut gram_inv_diag = vec![0.0; p];
    for j in 0..p {
        let mut e = vec![0.0; p];
        e[j] = 1.0;
        gram_inv_diag[j] = solve(&xtx, &e)?[j];
    }
    let mut coeffs = Mat::zeros(d, d);
    let mut intercept = vec![0.0; d];
    for i in 0..d {
        intercept[i] = beta.get(0, i);
        for j in 0..d {
            coeffs.set(i, j, beta.get(1 + j, i));
        }
    }
    Ok(AffineFit {
        coeffs,
        intercept,
        resid_cov,
        gram_inv_diag,
    })
}

/// Map a fit of transformed targets y = M eps back to eps space:
/// coefficients and intercept through M^{-1}, residual covariance
/// conjugated by it.
fn map_fit(fit: &AffineFit, m_inv: &Mat) -> AffineFit {
    let d = fit.intercept.len();
    let coeffs = m_inv.matmul(&fit.coeffs);
    let intercept = m_inv.matvec(&fit.intercept);
    let tmp = m_inv.matmul(&fit.resid_cov);
    let mut resid_cov = Mat::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let mut v = 0.0;
            for k in 0..d {
                v += tmp.get(i, k) * m_inv.get(j, k);
            }
            resid_cov.set(i, j, v);
        }
    }
    AffineFit {
        coeffs,
        intercept,
        resid_cov,
        gram_inv_diag: fit.gram_inv_diag.clone(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizerCheck {
    /// Largest z-score between the two fitted minimizers.
    pub max_fit_difference_z: f64,
    /// Largest z-score of either fit against the analytic minimizer.
    pub max_analytic_difference_z: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Fit the best affine predictor of eps from z = A_t x_t under (a) the
/// plain squared loss and (b) the stroke-space loss, each on its own
/// Monte Carlo stream, and compare the two minimizers (and the analytic
/// posterior mean, transported through A_t^{-1}) in standard-error units.
pub fn check_population_minimizer(
    toy: &GaussianToy,
    t: usize,
    w: f64,
    op: &StrokeOperator,
    sched: &NoiseSchedule,
    samples: usize,
    seed: u64,
) -> Result<MinimizerCheck> {
    let shape = toy.shape();
    let d = toy.mean().len();
    let a_mat = operator_matrix(op, w, shape)?;
    let a_inv = inverse_operator_matrix(op, w, shape)?;
    let identity = Mat::identity(d);

    // plain loss: regress eps on z
    let mut rng1 = chacha_stream(seed, 1);
    let fit_plain = fit_affine(toy, t, sched, &a_mat, &identity, samples, &mut rng1)?;
    // stroke-space loss: regress A eps on z, then pull back through A^{-1}.
    // The pullback is exactly the minimizer of ||A(f - eps)||^2 over
    // affine f because A is invertible.
    let mut rng2 = chacha_stream(seed, 2);
    let fit_stroke_raw = fit_affine(toy, t, sched, &a_mat, &a_mat, samples, &mut rng2)?;
    let fit_stroke = map_fit(&fit_stroke_raw, &a_inv);

    // analytic minimizer: diag(coef) (A^{-1} z - sqrt(ab) mu0)
    let ab = sched.alpha_bar(t)?;
    let sqrt_ab = libm::sqrt(ab);
    let mut analytic_coeffs = Mat::zeros(d, d);
    let mut analytic_intercept = vec![0.0; d];
    for i in 0..d {
        let coef = posterior_coefficient(ab, toy.variance().data()[i]);
        for j in 0..d {
            analytic_coeffs.set(i, j, coef * a_inv.get(i, j));
        }
        analytic_intercept[i] = -coef * sqrt_ab * toy.mean().data()[i];
    }

    let se = |fit: &AffineFit, i: usize, j: usize| -> f64 {
        // j = 0 is the intercept, j >= 1 the input pixels
        libm::sqrt(fit.resid_cov.get(i, i).max(0.0) * fit.gram_inv_diag[j].max(0.0))
    };
    let mut max_fit_z = 0.0_f64;
    let mut max_analytic_z = 0.0_f64;
    for i in 0..d {
        for j in 0..=d {
            let (v1, v2, va) = if j == 0 {
                (
                    fit_plain.intercept[i],
                    fit_stroke.intercept[i],
                    analytic_intercept[i],
                )
            } else {
                (
                    fit_plain.coeffs.get(i, j - 1),
                    fit_stroke.coeffs.get(i, j - 1),
                    analytic_coeffs.get(i, j - 1),
                )
            };
            let se1 = se(&fit_plain, i, j);
            let se2 = se(&fit_stroke, i, j);
            let denom = libm::sqrt(se1 * se1 + se2 * se2).max(1e-300);
            max_fit_z = max_fit_z.max((v1 - v2).abs() / denom);
            max_analytic_z = max_analytic_z.max((v1 - va).abs() / se1.max(1e-300));
            max_analytic_z = max_analytic_z.max((v2 - va).abs() / se2.max(1e-300));
        }
    }
    let threshold = 3.0;
    Ok(MinimizerCheck {
        max_fit_difference_z: max_fit_z,
        max_analytic_difference_z: max_analytic_z,
        threshold,
        passed: max_fit_z <= threshold && max_analytic_z <= threshold,
    })
}

/// Finite toy: a discrete x0 support and a per-pixel discretized noise
/// grid, small enough for exhaustive enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteToy {
    support: Vec<(ImageTensor, f64)>,
    eps_values: Vec<f64>,
    eps_probs: Vec<f64>,
}

impl DiscreteToy {
    pub fn new(
        support: Vec<(ImageTensor, f64)>,
        eps_values: Vec<f64>,
        eps_probs: Vec<f64>,
    ) -> Result<Self> {
        if support.is_empty() || eps_values.is_empty() {
            return Err(Error::Empty("discrete toy support"));
        }
        if eps_values.len() != eps_probs.len() {
            return Err(Error::InvalidArgument(
                "noise grid and probabilities differ in length".into(),
            ));
        }
        let shape = support[0].0.shape();
        if support.iter().any(|(x, _)| x.shape() != shape) {
            return Err(Error::InvalidArgument(
                "support tensors must share one shape".into(),
            ));
        }
        let sum_support: f64 = support.iter().map(|(_, p)| p).sum();
        let sum_eps: f64 = eps_probs.iter().sum();
        if (sum_support - 1.0).abs() > 1e-12 || (sum_eps - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(
                "probabilities must sum to 1 within 1e-12".into(),
            ));
        }
        Ok(Self {
            support,
            eps_values,
            eps_probs,
        })
    }

    /// Default 1x2x2 toy engineered so distinct (x0, eps) outcomes collide
    /// on the same x_t lattice point: x0 entries live on {0, c} with
    /// c = 2 delta sqrt(1-ab)/sqrt(ab) and the noise grid has spacing delta.
    pub fn collision_default(t: usize, sched: &NoiseSchedule) -> Result<Self> {
        let ab = sched.alpha_bar(t)?;
        let delta = 0.8;
        let c = 2.0 * delta * libm::sqrt(1.0 - ab) / libm::sqrt(ab);
        let patterns: [([f64; 4], f64); 4] = [
            ([0.0, 0.0, 0.0, 0.0], 0.4),
            ([c, 0.0, 0.0, c], 0.3),
            ([0.0, c, c, 0.0], 0.2),
            ([c, c, c, c], 0.1),
        ];
        let mut support = Vec::new();
        for (vals, p) in patterns {
            support.push((ImageTensor::new(1, 2, 2, vals.to_vec())?, p));
        }
        let mut eps_values = Vec::with_capacity(8);
        let mut eps_probs = Vec::with_capacity(8);
        let mut total = 0.0;
        for j in 0..8 {
            let e = (j as f64 - 3.5) * delta;
            let p = libm::exp(-0.5 * e * e);
            eps_values.push(e);
            eps_probs.push(p);
            total += p;
        }
        for p in &mut eps_probs {
            *p /= total;
        }
        Self::new(support, eps_values, eps_probs)
    }

    fn pixel_count(&self) -> usize {
        self.support[0].0.len()
    }
}

/// Enumerate all outcomes of the discrete toy, visiting each with its
/// probability, noise vector, and the integer lattice key identifying the
/// observation cell.
fn enumerate_outcomes<F: FnMut([i64; 4], f64, &[f64; 4])>(
    toy: &DiscreteToy,
    t: usize,
    sched: &NoiseSchedule,
    mut visit: F,
) -> Result<()> {
    if toy.pixel_count() != 4 {
        return Err(Error::InvalidArgument(
            "discrete enumeration is built for 1x2x2 toys".into(),
        ));
    }
    let ab = sched.alpha_bar(t)?;
    let sqrt_ab = libm::sqrt(ab);
    let sqrt_nv = libm::sqrt(1.0 - ab);
    let grid = toy.eps_values.len();
    // lattice unit of the collision-engineered observation values
    let unit = if grid > 1 {
        sqrt_nv * (toy.eps_values[1] - toy.eps_values[0]).abs()
    } else {
        1.0
    };
    let mut eps = [0.0; 4];
    let mut key = [0i64; 4];
    for (x0, p0) in &toy.support {
        let mut idx = [0usize; 4];
        loop {
            let mut prob = *p0;
            for i in 0..4 {
                let e = toy.eps_values[idx[i]];
                prob *= toy.eps_probs[idx[i]];
                eps[i] = e;
                let x_t = sqrt_ab * x0.data()[i] + sqrt_nv * e;
                key[i] = libm::round(2.0 * x_t / unit) as i64;
            }
            visit(key, prob, &eps);
            // odometer over the per-pixel noise grid
            let mut carry = 0;
            loop {
                idx[carry] += 1;
                if idx[carry] < grid {
                    break;
                }
                idx[carry] = 0;
                carry += 1;
                if carry == 4 {
                    break;
                }
            }
            if carry == 4 {
                break;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMinimizerCheck {
    /// Worst pixel gap between the brute-force minimizer and the
    /// conditional mean, over all cells.
    pub max_deviation: f64,
    pub tolerance: f64,
    pub cells: usize,
    /// Largest number of distinct outcomes falling into one cell; > 1
    /// means the collision engineering worked and means are nontrivial.
    pub max_cell_outcomes: usize,
    pub passed: bool,
}

/// For every observation cell, minimize the enumerated stroke-weighted
/// risk over predictor values by solving its normal equations, and check
/// the minimizer equals the per-cell conditional mean (A is invertible).
pub fn check_discrete_minimizer(
    toy: &DiscreteToy,
    t: usize,
    w: f64,
    op: &StrokeOperator,
    sched: &NoiseSchedule,
) -> Result<DiscreteMinimizerCheck> {
    let shape = toy.support[0].0.shape();
    let a_mat = operator_matrix(op, w, shape)?;
    // Q = A^T A
    let mut q_mat = Mat::zeros(4, 4);
    for i in 0..4 {
        for j in 0..4 {
            let mut v = 0.0;
            for k in 0..4 {
                v += a_mat.get(k, i) * a_mat.get(k, j);
            }
            q_mat.set(i, j, v);
        }
    }

    struct Cell {
        prob: f64,
        eps_weighted: [f64; 4],
        outcomes: usize,
    }
    let mut cells: BTreeMap<[i64; 4], Cell> = BTreeMap::new();
    enumerate_outcomes(toy, t, sched, |key, prob, eps| {
        let cell = cells.entry(key).or_insert(Cell {
            prob: 0.0,
            eps_weighted: [0.0; 4],
            outcomes: 0,
        });
        cell.prob += prob;
        for i in 0..4 {
            cell.eps_weighted[i] += prob * eps[i];
        }
        cell.outcomes += 1;
    })?;

    let mut max_dev = 0.0_f64;
    let mut max_cell_outcomes = 0;
    for cell in cells.values() {
        max_cell_outcomes = max_cell_outcomes.max(cell.outcomes);
        let mean: Vec<f64> = cell.eps_weighted.iter().map(|v| v / cell.prob).collect();
        // minimizer of sum_o p_o ||A(f - eps_o)||^2 solves Q f = Q mean
        let rhs = q_mat.matvec(&mean);
        let f = solve(&q_mat, &rhs)?;
        for i in 0..4 {
            max_dev = max_dev.max((f[i] - mean[i]).abs());
        }
    }
    let tolerance = 1e-12;
    Ok(DiscreteMinimizerCheck {
        max_deviation: max_dev,
        tolerance,
        cells: cells.len(),
        max_cell_outcomes,
        passed: max_dev <= tolerance,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionCheck {
    /// Worst relative gap in risk(g) = risk(f*) + excess(g) over the
    /// random predictors tried.
    pub max_relative_gap: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Pythagorean identity of the L2 projection on the discrete toy: for any
/// cell-measurable predictor g, the stroke-weighted risk of g equals the
/// risk of the conditional mean plus the weighted excess term, exactly.
pub fn check_projection_property(
    toy: &DiscreteToy,
    t: usize,
    w: f64,
    op: &StrokeOperator,
    sched: &NoiseSchedule,
    trials: usize,
    seed: u64,
) -> Result<ProjectionCheck> {
    let shape = toy.support[0].0.shape();
    let a_mat = operator_matrix(op, w, shape)?;

    struct Cell {
        prob: f64,
        eps_weighted: [f64; 4],
    }
    let mut cells: BTreeMap<[i64; 4], Cell> = BTreeMap::new();
    enumerate_outcomes(toy, t, sched, |key, prob, eps| {
        let cell = cells.entry(key).or_insert(Cell {
            prob: 0.0,
            eps_weighted: [0.0; 4],
        });
        cell.prob += prob;
        for i in 0..4 {
            cell.eps_weighted[i] += prob * eps[i];
        }
    })?;
    let cond_mean: BTreeMap<[i64; 4], [f64; 4]> = cells
        .iter()
        .map(|(k, c)| {
            let mut m = [0.0; 4];
            for i in 0..4 {
                m[i] = c.eps_weighted[i] / c.prob;
            }
            (*k, m)
        })
        .collect();

    let weighted_sq = |v: &[f64]| -> f64 {
        let av = a_mat.matvec(v);
        av.iter().map(|x| x * x).sum()
    };

    let mut risk_star = 0.0;
    enumerate_outcomes(toy, t, sched, |key, prob, eps| {
        let m = &cond_mean[&key];
        let diff: Vec<f64> = (0..4).map(|i| m[i] - eps[i]).collect();
        risk_star += prob * weighted_sq(&diff);
    })?;

    let mut rng = chacha_stream(seed, 0);
    let mut worst = 0.0_f64;
    for _ in 0..trials.max(1) {
        // arbitrary cell-measurable predictor
        let g: BTreeMap<[i64; 4], [f64; 4]> = cells
            .keys()
            .map(|k| {
                let mut v = [0.0; 4];
                for item in &mut v {
                    *item = rng.sample::<f64, _>(StandardNormal);
                }
                (*k, v)
            })
            .collect();
        let mut risk_g = 0.0;
        enumerate_outcomes(toy, t, sched, |key, prob, eps| {
            let gv = &g[&key];
            let diff: Vec<f64> = (0..4).map(|i| gv[i] - eps[i]).collect();
            risk_g += prob * weighted_sq(&diff);
        })?;
        let mut excess = 0.0;
        for (key, cell) in &cells {
            let gv = &g[key];
            let m = &cond_mean[key];
            let diff: Vec<f64> = (0..4).map(|i| gv[i] - m[i]).collect();
            excess += cell.prob * weighted_sq(&diff);
        }
        let gap = (risk_g - risk_star - excess).abs() / risk_g.max(1.0);
        worst = worst.max(gap);
    }
    let tolerance = 1e-12;
    Ok(ProjectionCheck {
        max_relative_gap: worst,
        tolerance,
        passed: worst <= tolerance,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionCheck {
    /// Worst pointwise gap between mix(f, w) and Q_c f + (1-w) Q_d f.
    pub max_pointwise: f64,
    /// Relative gap of the complexity identity.
    pub complexity_gap: f64,
    /// Whether complexity strictly dropped (expected iff w > 0 and the
    /// detail part is nonzero).
    pub strictly_reduced: bool,
    pub tolerance: f64,
    pub passed: bool,
}

/// Exact projector decomposition of the mixed target and the induced
/// complexity contraction.
pub fn check_target_decomposition(
    f: &ImageTensor,
    w: f64,
    op: &StrokeOperator,
    s: f64,
) -> Result<DecompositionCheck> {
    let mixed = op.mix(f, w)?;
    let coarse = op.coarse_project(f)?;
    let detail = op.detail_project(f)?;
    let projector_form = coarse.axpy(1.0 - w, &detail)?;
    let max_pointwise = mixed.max_abs_diff(&projector_form)?;

    let complexity_mixed = multires_complexity(&mixed, op, s)?;
    let scale = libm::pow(op.k() as f64, 2.0 * s);
    let shrink = (1.0 - w) * (1.0 - w);
    let expect = coarse.sq_norm() + scale * shrink * detail.sq_norm();
    let complexity_gap = (complexity_mixed - expect).abs() / expect.max(1.0);

    let complexity_orig = multires_complexity(f, op, s)?;
    let strictly_reduced = complexity_mixed < complexity_orig;

    let tolerance = 1e-12;
    let reduction_consistent = if w > 0.0 && detail.sq_norm() > 1e-20 {
        strictly_reduced
    } else {
        (complexity_mixed - complexity_orig).abs() <= tolerance * complexity_orig.max(1.0)
    };
    Ok(DecompositionCheck {
        max_pointwise,
        complexity_gap,
        strictly_reduced,
        tolerance,
        passed: max_pointwise <= tolerance && complexity_gap <= tolerance && reduction_consistent,
    })
}
