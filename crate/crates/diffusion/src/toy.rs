//! Desk-scale diffusion: Gaussian toy data with a closed-form optimal
//! denoiser, and a one-hidden-layer tanh network trained by denoising
//! score matching with hand-derived gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edm::{lambda, normal_vec, Denoiser, EdmError, Preconditioning, SigmaSampler};

#[derive(Debug, Error, PartialEq)]
pub enum ToyError {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid training setup: {0}")]
    InvalidSetup(String),
    #[error("loss became non-finite at step {step}")]
    Diverged { step: usize },
    #[error(transparent)]
    Edm(#[from] EdmError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mu: Vec<f64>,
    pub s: f64,
}

/// Isotropic Gaussian or a mixture of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ToyDataset {
    Gaussian { mu: Vec<f64>, s: f64 },
    Mixture { components: Vec<Component> },
}

impl Default for ToyDataset {
    /// `N((3, −1), 0.5²·I)`.
    fn default() -> Self {
        ToyDataset::Gaussian { mu: vec![3.0, -1.0], s: 0.5 }
    }
}

impl ToyDataset {
    pub fn validate(&self) -> Result<(), ToyError> {
        let bad = |m: &str| Err(ToyError::InvalidDataset(m.into()));
        match self {
            ToyDataset::Gaussian { mu, s } => {
                if mu.is_empty() || !(*s > 0.0 && s.is_finite()) {
                    return bad("need a non-empty mean and s > 0");
                }
            }
            ToyDataset::Mixture { components } => {
                let Some(first) = components.first() else { return bad("mixture has no components") };
                if components.iter().any(|c| c.mu.len() != first.mu.len() || c.mu.is_empty() || !(c.s > 0.0) || !(c.weight >= 0.0)) {
                    return bad("components need equal non-empty dimensions, s > 0 and weight ≥ 0");
                }
                if (components.iter().map(|c| c.weight).sum::<f64>() - 1.0).abs() > 1e-9 {
                    return bad("mixture weights must sum to 1");
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            ToyDataset::Gaussian { mu, .. } => mu.len(),
            ToyDataset::Mixture { components } => components[0].mu.len(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let (mu, s) = match self {
                    ToyDataset::Gaussian { mu, s } => (mu, *s),
                    ToyDataset::Mixture { components } => {
                        let u: f64 = rng.random();
                        let mut acc = 0.0;
                        let c = components.iter().find(|c| {
                            acc += c.weight;
                            u < acc
                        });
                        let c = c.unwrap_or_else(|| components.last().unwrap());
                        (&c.mu, c.s)
                    }
                };
                normal_vec(mu.len(), s, rng).iter().zip(mu).map(|(e, m)| m + e).collect()
            })
            .collect()
    }
}

/// Posterior mean of `N(μ, s²·I)` data observed through `N(0, σ²·I)` noise:
/// `(s²·y + σ²·μ)/(s² + σ²)`.
pub fn optimal_gaussian_denoiser(mu: &[f64], s: f64, y: &[f64], sigma: f64) -> Vec<f64> {
    if sigma.is_infinite() {
        return mu.to_vec();
    }
    let (s2, v) = (s * s, sigma * sigma);
    y.iter().zip(mu).map(|(yi, mi)| (s2 * yi + v * mi) / (s2 + v)).collect()
}

/// `F_θ(x, c_noise) = W2·tanh(W1·[x; c_noise] + b1) + b2` with
/// `θ = [W1 (row-major), b1, W2 (row-major), b2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyDenoiser {
    pub dim: usize,
    pub hidden: usize,
    pub theta: Vec<f64>,
    pub precond: Preconditioning,
}

/// Result of one forward/backward pass on a single `(y, n, σ)` triple.
#[derive(Debug, Clone, PartialEq)]
pub struct Pass {
    /// `D_θ(y + n; σ)`.
    pub output: Vec<f64>,
    /// `λ(σ)·‖D_θ(y + n; σ) − y‖²`.
    pub loss: f64,
    pub grad: Vec<f64>,
}

impl ToyDenoiser {
    pub const DEFAULT_HIDDEN: usize = 32;

    pub fn param_count(dim: usize, hidden: usize) -> usize {
        hidden * (dim + 1) + hidden + dim * hidden + dim
    }

    /// Gaussian init scaled by fan-in. `zero_output` zeroes the second map.
    pub fn init<R: Rng + ?Sized>(dim: usize, hidden: usize, zero_output: bool, rng: &mut R) -> Self {
        let mut theta = Vec::with_capacity(Self::param_count(dim, hidden));
        theta.extend(normal_vec(hidden * (dim + 1), 1.0 / ((dim + 1) as f64).sqrt(), rng));
        theta.extend(std::iter::repeat_n(0.0, hidden));
        let w2 = normal_vec(dim * hidden, 1.0 / (hidden as f64).sqrt(), rng);
        theta.extend(w2.into_iter().map(|w| if zero_output { 0.0 } else { w }));
        theta.extend(std::iter::repeat_n(0.0, dim));
        Self { dim, hidden, theta, precond: Preconditioning::default() }
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let (d, h) = (self.dim, self.hidden);
        let (w1, rest) = self.theta.split_at(h * (d + 1));
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(d * h);
        (w1, b1, w2, b2)
    }

    /// Raw network output and hidden activations.
    fn raw(&self, x: &[f64], c_noise: f64) -> (Vec<f64>, Vec<f64>) {
        let (d, h) = (self.dim, self.hidden);
        let (w1, b1, w2, b2) = self.split();
        let act: Vec<f64> = (0..h)
            .map(|j| {
                let row = &w1[j * (d + 1)..(j + 1) * (d + 1)];
                (row[..d].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + row[d] * c_noise + b1[j]).tanh()
            })
            .collect();
        let out = (0..d).map(|i| w2[i * h..(i + 1) * h].iter().zip(&act).map(|(w, a)| w * a).sum::<f64>() + b2[i]).collect();
        (out, act)
    }

    /// `F_θ(x, c_noise)`.
    pub fn network(&self, x: &[f64], c_noise: f64) -> Vec<f64> {
        self.raw(x, c_noise).0
    }

    /// DSM loss of one triple and its exact gradient with respect to θ.
    pub fn forward_backward(&self, y: &[f64], noise: &[f64], sigma: f64) -> Result<Pass, ToyError> {
        let (d, h) = (self.dim, self.hidden);
        let c = self.precond.coeffs(sigma)?;
        let noisy: Vec<f64> = y.iter().zip(noise).map(|(a, b)| a + b).collect();
        let x: Vec<f64> = noisy.iter().map(|v| c.c_in * v).collect();
        let (f, act) = self.raw(&x, c.c_noise);
        let output: Vec<f64> = noisy.iter().zip(&f).map(|(v, fi)| c.c_skip * v + c.c_out * fi).collect();
        let lam = lambda(sigma);
        let resid: Vec<f64> = output.iter().zip(y).map(|(o, t)| o - t).collect();
        let loss = lam * resid.iter().map(|r| r * r).sum::<f64>();

        // dℓ/dF = 2λ·c_out·(D − y)
        let g_out: Vec<f64> = resid.iter().map(|r| 2.0 * lam * c.c_out * r).collect();
        let (_, _, w2, _) = self.split();
        let mut grad = vec![0.0; self.theta.len()];
        let (g_w1, rest) = grad.split_at_mut(h * (d + 1));
        let (g_b1, rest) = rest.split_at_mut(h);
        let (g_w2, g_b2) = rest.split_at_mut(d * h);
        for i in 0..d {
            g_b2[i] = g_out[i];
            for j in 0..h {
                g_w2[i * h + j] = g_out[i] * act[j];
            }
        }
        for j in 0..h {
            let g_h: f64 = (0..d).map(|i| w2[i * h + j] * g_out[i]).sum();
            let g_a = g_h * (1.0 - act[j] * act[j]);
            g_b1[j] = g_a;
            for k in 0..d {
                g_w1[j * (d + 1) + k] = g_a * x[k];
            }
            g_w1[j * (d + 1) + d] = g_a * c.c_noise;
        }
        Ok(Pass { output, loss, grad })
    }
}

impl Denoiser for ToyDenoiser {
    fn denoise(&self, y: &[f64], sigma: f64) -> Vec<f64> {
        crate::edm::denoise(|x: &[f64], c: f64| self.network(x, c), y, sigma, &self.precond).expect("positive sigma and matching shapes")
    }
}

/// Fixed training objective: `(y, n, σ)` triples drawn once.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub triples: Vec<(Vec<f64>, Vec<f64>, f64)>,
}

impl TrainingSet {
    /// Draw order: the data batch, then per triple σ followed by its noise.
    pub fn draw<R: Rng + ?Sized>(dataset: &ToyDataset, batch: usize, sampler: &SigmaSampler, rng: &mut R) -> Self {
        let ys = dataset.sample(batch, rng);
        let triples = ys
            .into_iter()
            .map(|y| {
                let sigma = sampler.sample(rng);
                let n = normal_vec(y.len(), sigma, rng);
                (y, n, sigma)
            })
            .collect();
        Self { triples }
    }

    /// Mean loss and mean gradient over all triples.
    pub fn loss_and_grad(&self, model: &ToyDenoiser) -> Result<(f64, Vec<f64>), ToyError> {
        let mut loss = 0.0;
        let mut grad = vec![0.0; model.theta.len()];
        for (y, n, sigma) in &self.triples {
            let pass = model.forward_backward(y, n, *sigma)?;
            loss += pass.loss;
            for (g, p) in grad.iter_mut().zip(&pass.grad) {
                *g += p;
            }
        }
        let k = self.triples.len() as f64;
        grad.iter_mut().for_each(|g| *g /= k);
        Ok((loss / k, grad))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub batch: usize,
    pub hidden: usize,
    pub sigma: SigmaSampler,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { steps: 2000, learning_rate: 0.02, batch: 1024, hidden: ToyDenoiser::DEFAULT_HIDDEN, sigma: SigmaSampler::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub model: ToyDenoiser,
    /// Loss before each step, then the final loss: `steps + 1` entries.
    pub losses: Vec<f64>,
}

/// Plain full-batch gradient descent on a fixed training set. Draw order:
/// parameter init, then the training set.
pub fn train<R: Rng + ?Sized>(dataset: &ToyDataset, config: &TrainConfig, rng: &mut R) -> Result<Trained, ToyError> {
    dataset.validate()?;
    if config.steps == 0 || config.batch == 0 || config.hidden == 0 {
        return Err(ToyError::InvalidSetup("steps, batch and hidden must be at least 1".into()));
    }
    if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite()) {
        return Err(ToyError::InvalidSetup(format!("learning rate {} must be finite and ≥ 0", config.learning_rate)));
    }
    let mut model = ToyDenoiser::init(dataset.dim(), config.hidden, false, rng);
    let set = TrainingSet::draw(dataset, config.batch, &config.sigma, rng);
    let mut losses = Vec::with_capacity(config.steps + 1);
    for step in 0..=config.steps {
        let (loss, grad) = set.loss_and_grad(&model)?;
        if !loss.is_finite() {
            return Err(ToyError::Diverged { step });
        }
        losses.push(loss);
        if step == config.steps {
            break;
        }
        for (t, g) in model.theta.iter_mut().zip(&grad) {
            *t -= config.learning_rate * g;
        }
    }
    Ok(Trained { model, losses })
}
