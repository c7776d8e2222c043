//! Self-checks of the diffusion numerics, shared by the command line and
//! the acceptance suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::edm::{integrate, lambda, normal_vec, Preconditioning, SigmaSchedule};
use crate::toy::{optimal_gaussian_denoiser, ToyDenoiser};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    /// Worst observed value of the checked quantity.
    pub metric: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, metric: f64, tolerance: f64, detail: String) -> Self {
        Self { name: name.into(), pass: metric <= tolerance, metric, tolerance, detail }
    }
}

/// Log-uniform σ in `[1e-3, 1e3]`.
fn random_sigma<R: Rng>(rng: &mut R) -> f64 {
    10f64.powf(rng.random_range(-3.0..=3.0))
}

/// `c_in² = c_skip`, `c_out² = σ²·c_skip` and `c_noise = ln σ / 4` over 10³
/// random σ, plus the exact values at σ = 1.
pub fn coefficient_identities(pre: &Preconditioning, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let s = random_sigma(&mut rng);
        let c = pre.coeffs(s).expect("positive sigma");
        worst = worst.max((c.c_in * c.c_in - c.c_skip).abs());
        worst = worst.max((c.c_out * c.c_out - s * s * c.c_skip).abs());
        worst = worst.max((c.c_noise - 0.25 * s.ln()).abs());
    }
    let one = pre.coeffs(1.0).expect("positive sigma");
    let exact = one.c_skip == 0.5 && one.c_noise == 0.0 && lambda(1.0) == 2.0;
    let metric = if exact { worst } else { f64::INFINITY };
    CheckResult::new("coefficient identities", metric, 1e-12, format!("max identity residual {worst:.3e}; exact values at σ=1: {exact}"))
}

/// Analytic gradient of the toy DSM loss against central differences
/// (h = 1e-5). Relative error per parameter is `|a − f| / max(|a|, |f|, 1e-6)`.
pub fn gradient_check(seed: u64, configs: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..configs {
        let dim = rng.random_range(1..=3);
        let hidden = rng.random_range(2..=32);
        let mut model = ToyDenoiser::init(dim, hidden, false, &mut rng);
        for b in model.theta.iter_mut() {
            *b += 0.1 * rng.random_range(-1.0..1.0);
        }
        let sigma = 10f64.powf(rng.random_range(-1.0..=1.0));
        let y = normal_vec(dim, 1.0, &mut rng);
        let n = normal_vec(dim, sigma, &mut rng);
        let analytic = model.forward_backward(&y, &n, sigma).expect("valid sigma").grad;
        for i in 0..model.theta.len() {
            let t0 = model.theta[i];
            model.theta[i] = t0 + h;
            let up = model.forward_backward(&y, &n, sigma).unwrap().loss;
            model.theta[i] = t0 - h;
            let down = model.forward_backward(&y, &n, sigma).unwrap().loss;
            model.theta[i] = t0;
            let fd = (up - down) / (2.0 * h);
            let a = analytic[i];
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6));
        }
    }
    CheckResult::new("gradient check", worst, 1e-4, format!("{configs} random configurations, max relative error {worst:.3e}"))
}

/// Moments of Euler PF-ODE samples drawn with the analytic denoiser for
/// `N(μ, s²·I)` data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingMoments {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    /// Per-axis variance the Euler recursion itself predicts (see [`euler_variance`]).
    pub euler_variance: f64,
}

impl SamplingMoments {
    /// Worst of `|mean − μ| / max(|μ|, s)` and `|cov − s²·I| / s²`.
    pub fn deviation_from_data(&self, mu: &[f64], s: f64) -> f64 {
        self.deviation(mu, s, s * s)
    }

    /// As [`Self::deviation_from_data`] but against the Euler-predicted variance.
    pub fn deviation_from_euler(&self, mu: &[f64], s: f64) -> f64 {
        self.deviation(mu, s, self.euler_variance)
    }

    fn deviation(&self, mu: &[f64], s: f64, var: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..mu.len() {
            worst = worst.max((self.mean[i] - mu[i]).abs() / mu[i].abs().max(s));
            for j in 0..mu.len() {
                let want = if i == j { var } else { 0.0 };
                worst = worst.max((self.cov[i][j] - want).abs() / var);
            }
        }
        worst
    }
}

/// Exact per-axis output variance of the Euler recursion for Gaussian data.
/// With the optimal denoiser each step scales `y − μ` by
/// `1 + (σ_{i+1} − σ_i)·σ_i/(s² + σ_i²)`; the start has variance `σ_0²`.
pub fn euler_variance(s: f64, schedule: &SigmaSchedule) -> f64 {
    let gain: f64 = schedule.sigmas.windows(2).map(|w| 1.0 + (w[1] - w[0]) * w[0] / (s * s + w[0] * w[0])).product();
    (schedule.sigmas[0] * gain).powi(2)
}

pub fn sample_gaussian(mu: &[f64], s: f64, steps: usize, draws: usize, seed: u64) -> SamplingMoments {
    let schedule = SigmaSchedule::karras(0.002, 80.0, steps, 7.0).expect("valid schedule");
    let den = |y: &[f64], sigma: f64| optimal_gaussian_denoiser(mu, s, y, sigma);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Vec<f64>> = (0..draws)
        .map(|_| integrate(&den, &schedule, normal_vec(mu.len(), schedule.sigmas[0], &mut rng)).expect("finite analytic flow"))
        .collect();
    let (mean, cov) = moments(&samples);
    SamplingMoments { mean, cov, euler_variance: euler_variance(s, &schedule) }
}

/// Sampler check: moments must match what first-order Euler predicts
/// within 5%. The gap to the data covariance is reported, not judged; it
/// is a property of the step count, not of the implementation.
pub fn gaussian_sampling(mu: &[f64], s: f64, steps: usize, draws: usize, seed: u64) -> CheckResult {
    let m = sample_gaussian(mu, s, steps, draws, seed);
    let vs_euler = m.deviation_from_euler(mu, s);
    let vs_data = m.deviation_from_data(mu, s);
    CheckResult::new(
        "gaussian sampling",
        vs_euler,
        0.05,
        format!(
            "{draws} draws, {steps} Euler steps: mean {:.4?}, cov {:.4?}; Euler-predicted variance {:.4}, data variance {:.4}; deviation vs prediction {vs_euler:.4}, vs data {vs_data:.4}",
            m.mean,
            m.cov,
            m.euler_variance,
            s * s
        ),
    )
}

/// Sample mean and (biased) covariance.
pub fn moments(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = samples[0].len();
    let n = samples.len() as f64;
    let mean: Vec<f64> = (0..d).map(|i| samples.iter().map(|x| x[i]).sum::<f64>() / n).collect();
    let cov = (0..d)
        .map(|i| (0..d).map(|j| samples.iter().map(|x| (x[i] - mean[i]) * (x[j] - mean[j])).sum::<f64>() / n).collect())
        .collect();
    (mean, cov)
}

/// The full suite run by the `edm-check` command.
pub fn run_all(pre: &Preconditioning) -> Vec<CheckResult> {
    vec![coefficient_identities(pre, 1), gradient_check(2, 20), gaussian_sampling(&[3.0, -1.0], 0.5, 40, 10_000, 3)]
}
