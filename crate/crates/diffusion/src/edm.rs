//! EDM preconditioning, denoising score matching, the ε-prediction
//! objective over a variance-preserving forward process, and an Euler
//! probability-flow ODE sampler.

use rand::Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EdmError {
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("network returned {got} values for a {expected}-dimensional input")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite sample at step {step}")]
    NonFinite { step: usize },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("batch is empty")]
    EmptyBatch,
}

/// Scalars wrapping a raw network `F` into `D(y; σ) = c_skip·y + c_out·F(c_in·y; c_noise)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coeffs {
    pub c_skip: f64,
    pub c_out: f64,
    pub c_in: f64,
    pub c_noise: f64,
}

/// Preconditioning family. `noise_scale` is the `c_noise` multiplier of
/// `ln σ`; it is a field so a wrong value can be injected and caught.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preconditioning {
    pub noise_scale: f64,
}

impl Default for Preconditioning {
    fn default() -> Self {
        Self { noise_scale: 0.25 }
    }
}

impl Preconditioning {
    pub fn coeffs(&self, sigma: f64) -> Result<Coeffs, EdmError> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(EdmError::InvalidSigma(sigma));
        }
        let s2 = sigma * sigma;
        let root = (s2 + 1.0).sqrt();
        Ok(Coeffs { c_skip: 1.0 / (s2 + 1.0), c_out: -sigma / root, c_in: 1.0 / root, c_noise: self.noise_scale * sigma.ln() })
    }
}

/// Coefficients under the default preconditioning.
pub fn coeffs(sigma: f64) -> Result<Coeffs, EdmError> {
    Preconditioning::default().coeffs(sigma)
}

/// DSM weighting `λ(σ) = (1 + σ²)/σ²`.
pub fn lambda(sigma: f64) -> f64 {
    (1.0 + sigma * sigma) / (sigma * sigma)
}

/// A denoiser `D(y; σ)`.
pub trait Denoiser {
    fn denoise(&self, y: &[f64], sigma: f64) -> Vec<f64>;
}

impl<F: Fn(&[f64], f64) -> Vec<f64>> Denoiser for F {
    fn denoise(&self, y: &[f64], sigma: f64) -> Vec<f64> {
        self(y, sigma)
    }
}

/// Applies the preconditioning around a raw network `f(x, c_noise)`.
pub fn denoise<F>(f: F, y: &[f64], sigma: f64, pre: &Preconditioning) -> Result<Vec<f64>, EdmError>
where
    F: Fn(&[f64], f64) -> Vec<f64>,
{
    let c = pre.coeffs(sigma)?;
    let x: Vec<f64> = y.iter().map(|v| c.c_in * v).collect();
    let out = f(&x, c.c_noise);
    if out.len() != y.len() {
        return Err(EdmError::ShapeMismatch { expected: y.len(), got: out.len() });
    }
    Ok(y.iter().zip(&out).map(|(yi, fi)| c.c_skip * yi + c.c_out * fi).collect())
}

/// Training-time noise level distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SigmaSampler {
    /// `ln σ ~ N(p_mean, p_std²)`.
    LogNormal { p_mean: f64, p_std: f64 },
    Fixed { sigma: f64 },
}

impl Default for SigmaSampler {
    fn default() -> Self {
        SigmaSampler::LogNormal { p_mean: -1.2, p_std: 1.2 }
    }
}

impl SigmaSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            SigmaSampler::LogNormal { p_mean, p_std } => LogNormal::new(p_mean, p_std).expect("finite log-normal parameters").sample(rng),
            SigmaSampler::Fixed { sigma } => sigma,
        }
    }
}

pub fn normal_vec<R: Rng + ?Sized>(dim: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| { let z: f64 = StandardNormal.sample(rng); scale * z }).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsmLoss {
    pub mean: f64,
    pub per_sample: Vec<f64>,
    pub sigmas: Vec<f64>,
}

/// Monte-Carlo DSM loss `λ(σ)·‖D(y + n; σ) − y‖²` with one `(σ, n)` draw
/// per sample. Draw order per sample: σ, then the noise vector.
pub fn dsm_loss<D, R>(d: &D, batch: &[Vec<f64>], sampler: &SigmaSampler, rng: &mut R) -> Result<DsmLoss, EdmError>
where
    D: Denoiser + ?Sized,
    R: Rng + ?Sized,
{
    if batch.is_empty() {
        return Err(EdmError::EmptyBatch);
    }
    let mut per_sample = Vec::with_capacity(batch.len());
    let mut sigmas = Vec::with_capacity(batch.len());
    for y in batch {
        let sigma = sampler.sample(rng);
        let n = normal_vec(y.len(), sigma, rng);
        let noisy: Vec<f64> = y.iter().zip(&n).map(|(a, b)| a + b).collect();
        let out = d.denoise(&noisy, sigma);
        if out.len() != y.len() {
            return Err(EdmError::ShapeMismatch { expected: y.len(), got: out.len() });
        }
        per_sample.push(lambda(sigma) * sq_dist(&out, y));
        sigmas.push(sigma);
    }
    let mean = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    Ok(DsmLoss { mean, per_sample, sigmas })
}

/// Variance-preserving forward process `Z_t = √ᾱ_t·Z_0 + √(1 − ᾱ_t)·ε`
/// with a linear β schedule, `t ∈ [1, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VpSchedule {
    pub betas: Vec<f64>,
    pub alpha_bar: Vec<f64>,
}

impl VpSchedule {
    pub fn linear(beta_start: f64, beta_end: f64, steps: usize) -> Result<Self, EdmError> {
        if steps == 0 || !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(EdmError::InvalidSchedule(format!("linear β needs 0 < {beta_start} ≤ {beta_end} < 1 over {steps} ≥ 1 steps")));
        }
        let betas: Vec<f64> = (0..steps)
            .map(|i| if steps == 1 { beta_start } else { beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64 })
            .collect();
        let alpha_bar = betas
            .iter()
            .scan(1.0, |acc, b| {
                *acc *= 1.0 - b;
                Some(*acc)
            })
            .collect();
        Ok(Self { betas, alpha_bar })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `ᾱ_t` for `t ∈ [1, T]`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t - 1]
    }
}

impl Default for VpSchedule {
    fn default() -> Self {
        Self::linear(1e-4, 0.02, 1000).expect("valid default schedule")
    }
}

/// Monte-Carlo `E‖ε − ε_θ(Z_t, t, c)‖²` with `t` uniform on `[1, T]`.
/// `cond[i]` conditions sample `i`. Draw order per sample: t, then ε.
pub fn eps_loss<P, C, R>(predict: P, z0: &[Vec<f64>], cond: &[C], schedule: &VpSchedule, rng: &mut R) -> Result<f64, EdmError>
where
    P: Fn(&[f64], usize, &C) -> Vec<f64>,
    R: Rng + ?Sized,
{
    if z0.is_empty() {
        return Err(EdmError::EmptyBatch);
    }
    assert_eq!(z0.len(), cond.len(), "one conditioning entry per sample");
    let mut total = 0.0;
    for (z, c) in z0.iter().zip(cond) {
        let t = rng.random_range(1..=schedule.steps());
        let eps = normal_vec(z.len(), 1.0, rng);
        let ab = schedule.alpha_bar(t);
        let zt: Vec<f64> = z.iter().zip(&eps).map(|(a, e)| ab.sqrt() * a + (1.0 - ab).sqrt() * e).collect();
        let pred = predict(&zt, t, c);
        if pred.len() != z.len() {
            return Err(EdmError::ShapeMismatch { expected: z.len(), got: pred.len() });
        }
        total += sq_dist(&eps, &pred);
    }
    Ok(total / z0.len() as f64)
}

/// Decreasing noise levels ending in an exact zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaSchedule {
    pub sigmas: Vec<f64>,
}

impl SigmaSchedule {
    /// `M` levels with ρ-spacing between `σ_max` and `σ_min`, then 0.
    pub fn karras(sigma_min: f64, sigma_max: f64, steps: usize, rho: f64) -> Result<Self, EdmError> {
        if steps == 0 || !(0.0 < sigma_min && sigma_min < sigma_max && sigma_max.is_finite()) || !(rho > 0.0) {
            return Err(EdmError::InvalidSchedule(format!("need 0 < σ_min < σ_max, ρ > 0 and steps ≥ 1 (got {sigma_min}, {sigma_max}, {rho}, {steps})")));
        }
        let (lo, hi) = (sigma_min.powf(1.0 / rho), sigma_max.powf(1.0 / rho));
        let mut sigmas: Vec<f64> = (0..steps)
            .map(|i| if steps == 1 { sigma_max } else { (hi + i as f64 / (steps - 1) as f64 * (lo - hi)).powf(rho) })
            .collect();
        sigmas.push(0.0);
        let s = Self { sigmas };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), EdmError> {
        if self.sigmas.len() < 2 || *self.sigmas.last().unwrap() != 0.0 {
            return Err(EdmError::InvalidSchedule("schedule must have at least one step and end at 0".into()));
        }
        if !self.sigmas.windows(2).all(|w| w[0] > w[1]) || !self.sigmas[0].is_finite() {
            return Err(EdmError::InvalidSchedule("schedule must be strictly decreasing and finite".into()));
        }
        Ok(())
    }
}

impl Default for SigmaSchedule {
    fn default() -> Self {
        Self::karras(0.002, 80.0, 40, 7.0).expect("valid default schedule")
    }
}

/// Euler integration of the probability-flow ODE from `y ~ N(0, σ_0²·I)`.
pub fn sample<D, R>(d: &D, schedule: &SigmaSchedule, dim: usize, rng: &mut R) -> Result<Vec<f64>, EdmError>
where
    D: Denoiser + ?Sized,
    R: Rng + ?Sized,
{
    schedule.validate()?;
    let y = normal_vec(dim, schedule.sigmas[0], rng);
    integrate(d, schedule, y)
}

/// The deterministic part of [`sample`]: Euler steps from a given start.
pub fn integrate<D: Denoiser + ?Sized>(d: &D, schedule: &SigmaSchedule, mut y: Vec<f64>) -> Result<Vec<f64>, EdmError> {
    for (step, w) in schedule.sigmas.windows(2).enumerate() {
        let (s, next) = (w[0], w[1]);
        let den = d.denoise(&y, s);
        if den.len() != y.len() {
            return Err(EdmError::ShapeMismatch { expected: y.len(), got: den.len() });
        }
        for (yi, di) in y.iter_mut().zip(&den) {
            *yi += (next - s) * (*yi - di) / s;
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(EdmError::NonFinite { step });
        }
    }
    Ok(y)
}
