use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scenforge_diffusion::check::{coefficient_identities, gradient_check, moments, run_all};
use scenforge_diffusion::edm::{sample, Denoiser, Preconditioning, SigmaSampler, SigmaSchedule};
use scenforge_diffusion::toy::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn parameter_layout() {
    assert_eq!(ToyDenoiser::param_count(2, 32), 32 * 3 + 32 + 2 * 32 + 2);
    let m = ToyDenoiser::init(3, 5, false, &mut rng(0));
    assert_eq!(m.theta.len(), ToyDenoiser::param_count(3, 5));
}

#[test]
fn zero_output_init_reduces_to_skip_connection() {
    let m = ToyDenoiser::init(2, 8, true, &mut rng(1));
    assert!(m.network(&[0.3, -2.0], 0.7).iter().all(|&v| v == 0.0));
    for sigma in [0.01, 1.0, 30.0] {
        let out = m.denoise(&[2.0, -1.0], sigma);
        let c_skip = 1.0 / (1.0 + sigma * sigma);
        assert!((out[0] - 2.0 * c_skip).abs() < 1e-15 && (out[1] + c_skip).abs() < 1e-15);
    }
}

#[test]
fn forward_pass_matches_hand_computation() {
    // dim 1, hidden 1: θ = [w_x, w_c, b1, w2, b2].
    let mut m = ToyDenoiser::init(1, 1, false, &mut rng(2));
    m.theta = vec![0.5, -1.0, 0.1, 2.0, 0.3];
    let (y, n, sigma) = (1.2, 0.4, 2.0f64);
    let c_in = 1.0 / (sigma * sigma + 1.0).sqrt();
    let c_noise = 0.25 * sigma.ln();
    let f = 2.0 * (0.5 * c_in * (y + n) - c_noise + 0.1).tanh() + 0.3;
    let d = (y + n) / (sigma * sigma + 1.0) - sigma * c_in * f;
    let pass = m.forward_backward(&[y], &[n], sigma).unwrap();
    assert!((pass.output[0] - d).abs() < 1e-14);
    assert!((pass.loss - (1.0 + sigma * sigma) / (sigma * sigma) * (d - y).powi(2)).abs() < 1e-13);
}

#[test]
fn gradients_match_finite_differences() {
    let r = gradient_check(17, 20);
    assert!(r.pass, "{}", r.detail);
    assert!(r.metric < 1e-4);
}

#[test]
fn self_checks_pass_with_default_preconditioning() {
    for r in run_all(&Preconditioning::default()) {
        assert!(r.pass, "{}: {}", r.name, r.detail);
    }
}

#[test]
fn wrong_noise_scale_is_caught() {
    let r = coefficient_identities(&Preconditioning { noise_scale: 0.5 }, 1);
    assert!(!r.pass);
}

#[test]
fn zero_learning_rate_keeps_loss_constant() {
    let cfg = TrainConfig { steps: 5, learning_rate: 0.0, batch: 64, ..TrainConfig::default() };
    let t = train(&ToyDataset::default(), &cfg, &mut rng(3)).unwrap();
    assert_eq!(t.losses.len(), 6);
    assert!(t.losses.iter().all(|&l| l == t.losses[0]));
}

#[test]
fn training_is_deterministic_per_seed() {
    let cfg = TrainConfig { steps: 20, batch: 128, ..TrainConfig::default() };
    let a = train(&ToyDataset::default(), &cfg, &mut rng(4)).unwrap();
    let b = train(&ToyDataset::default(), &cfg, &mut rng(4)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn training_rejects_bad_setup() {
    let d = ToyDataset::default();
    let mut r = rng(5);
    for cfg in [
        TrainConfig { steps: 0, ..TrainConfig::default() },
        TrainConfig { batch: 0, ..TrainConfig::default() },
        TrainConfig { learning_rate: f64::NAN, ..TrainConfig::default() },
        TrainConfig { learning_rate: -0.1, ..TrainConfig::default() },
    ] {
        assert!(matches!(train(&d, &cfg, &mut r), Err(ToyError::InvalidSetup(_))));
    }
    let bad = ToyDataset::Gaussian { mu: vec![], s: 1.0 };
    assert!(matches!(train(&bad, &TrainConfig::default(), &mut r), Err(ToyError::InvalidDataset(_))));
}

#[test]
fn divergence_is_reported() {
    let cfg = TrainConfig { steps: 400, learning_rate: 50.0, batch: 64, ..TrainConfig::default() };
    let r = train(&ToyDataset::default(), &cfg, &mut rng(6));
    assert!(matches!(r, Err(ToyError::Diverged { .. })), "{r:?}");
}

#[test]
fn mixture_validation_and_sampling() {
    let comp = |w, m: f64| Component { weight: w, mu: vec![m], s: 0.1 };
    assert!(ToyDataset::Mixture { components: vec![] }.validate().is_err());
    assert!(ToyDataset::Mixture { components: vec![comp(0.5, 0.0), comp(0.4, 5.0)] }.validate().is_err());
    let mix = ToyDataset::Mixture { components: vec![comp(0.25, -5.0), comp(0.75, 5.0)] };
    mix.validate().unwrap();
    let xs = mix.sample(8000, &mut rng(7));
    let right = xs.iter().filter(|x| x[0] > 0.0).count() as f64 / xs.len() as f64;
    assert!((right - 0.75).abs() < 0.03, "{right}");
}

#[test]
fn default_training_fits_the_gaussian() {
    let data = ToyDataset::default();
    let t = train(&data, &TrainConfig::default(), &mut rng(42)).unwrap();
    let (first, last) = (t.losses[0], *t.losses.last().unwrap());
    assert!(last <= 0.5 * first, "{first} -> {last}");
    let mut r = rng(43);
    let samples: Vec<Vec<f64>> = (0..2000).map(|_| sample(&t.model, &SigmaSchedule::default(), 2, &mut r).unwrap()).collect();
    let (mean, cov) = moments(&samples);
    for (m, want) in mean.iter().zip([3.0, -1.0]) {
        assert!((m - want).abs() <= 0.1 * f64::abs(want), "{mean:?}");
    }
    for i in 0..2 {
        assert!((cov[i][i].sqrt() - 0.5).abs() <= 0.15 * 0.5, "{cov:?}");
    }
}

#[test]
fn training_set_draws_fixed_sigma() {
    let set = TrainingSet::draw(&ToyDataset::default(), 10, &SigmaSampler::Fixed { sigma: 0.3 }, &mut rng(8));
    assert_eq!(set.triples.len(), 10);
    assert!(set.triples.iter().all(|(y, n, s)| y.len() == 2 && n.len() == 2 && *s == 0.3));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn batch_gradient_is_mean_of_per_sample(seed in 0u64..1000, batch in 1usize..16) {
        let mut r = rng(seed);
        let m = ToyDenoiser::init(2, 4, false, &mut r);
        let set = TrainingSet::draw(&ToyDataset::default(), batch, &SigmaSampler::default(), &mut r);
        let (loss, grad) = set.loss_and_grad(&m).unwrap();
        let passes: Vec<_> = set.triples.iter().map(|(y, n, s)| m.forward_backward(y, n, *s).unwrap()).collect();
        let want_loss = passes.iter().map(|p| p.loss).sum::<f64>() / batch as f64;
        prop_assert!((loss - want_loss).abs() <= 1e-12 * (1.0 + want_loss));
        for i in 0..grad.len() {
            let g = passes.iter().map(|p| p.grad[i]).sum::<f64>() / batch as f64;
            prop_assert!((grad[i] - g).abs() <= 1e-12 * (1.0 + g.abs()));
        }
    }

    #[test]
    fn loss_is_non_negative(seed in 0u64..1000, log_sigma in -5.0f64..5.0) {
        let mut r = rng(seed);
        let m = ToyDenoiser::init(3, 6, false, &mut r);
        let p = m.forward_backward(&[0.1, 2.0, -1.0], &[0.3, 0.0, 0.5], log_sigma.exp()).unwrap();
        prop_assert!(p.loss >= 0.0 && p.loss.is_finite());
    }
}
