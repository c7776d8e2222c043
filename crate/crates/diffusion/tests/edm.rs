use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scenforge_diffusion::check::{euler_variance, gaussian_sampling, sample_gaussian};
use scenforge_diffusion::edm::*;
use scenforge_diffusion::toy::optimal_gaussian_denoiser;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn coefficients_at_unit_sigma() {
    let c = coeffs(1.0).unwrap();
    assert_eq!(c.c_skip, 0.5);
    assert_eq!(c.c_noise, 0.0);
    assert!((c.c_in - 0.5f64.sqrt()).abs() < 1e-15);
    assert!((c.c_out + 0.5f64.sqrt()).abs() < 1e-15);
    assert_eq!(lambda(1.0), 2.0);
}

#[test]
fn coefficient_limits() {
    let small = coeffs(1e-8).unwrap();
    assert!((small.c_skip - 1.0).abs() < 1e-12 && small.c_out.abs() < 1e-7 && (small.c_in - 1.0).abs() < 1e-12);
    let large = coeffs(1e8).unwrap();
    assert!(large.c_skip < 1e-15 && (large.c_out + 1.0).abs() < 1e-12 && large.c_in < 1e-7);
    assert!((coeffs(std::f64::consts::E).unwrap().c_noise - 0.25).abs() < 1e-15);
}

#[test]
fn rejects_bad_sigma() {
    for s in [0.0, -1.0, f64::NAN, f64::INFINITY] {
        assert!(matches!(coeffs(s), Err(EdmError::InvalidSigma(_))));
    }
}

#[test]
fn zero_network_halves_input_at_unit_sigma() {
    let y = [2.0, -4.0, 0.5];
    let out = denoise(|x: &[f64], _| vec![0.0; x.len()], &y, 1.0, &Preconditioning::default()).unwrap();
    assert_eq!(out, vec![1.0, -2.0, 0.25]);
}

#[test]
fn denoise_feeds_scaled_input_and_noise_level() {
    let pre = Preconditioning::default();
    let sigma = 3.0;
    let c = pre.coeffs(sigma).unwrap();
    // F echoes its input, so D = (c_skip + c_out·c_in)·y + c_out·c_noise.
    let out = denoise(|x: &[f64], cn: f64| x.iter().map(|v| v + cn).collect(), &[1.0], sigma, &pre).unwrap();
    let want = (c.c_skip + c.c_out * c.c_in) * 1.0 + c.c_out * c.c_noise;
    assert!((out[0] - want).abs() < 1e-15);
}

#[test]
fn denoise_shape_mismatch() {
    let err = denoise(|_: &[f64], _| vec![0.0], &[1.0, 2.0], 1.0, &Preconditioning::default()).unwrap_err();
    assert_eq!(err, EdmError::ShapeMismatch { expected: 2, got: 1 });
}

#[test]
fn identity_denoiser_loss_matches_closed_form() {
    // D(y + n) = y + n gives λσ²·‖n/σ‖², expectation (1 + σ²)·dim.
    let dim = 3;
    let sigma = 2.0;
    let batch: Vec<Vec<f64>> = (0..20_000).map(|_| vec![0.0; dim]).collect();
    let loss = dsm_loss(&|y: &[f64], _| y.to_vec(), &batch, &SigmaSampler::Fixed { sigma }, &mut rng(7)).unwrap();
    let want = (1.0 + sigma * sigma) * dim as f64;
    // chi-square with 3 dof has std √6 per sample, scaled by 5.
    let se = 5.0 * 6f64.sqrt() / (batch.len() as f64).sqrt();
    assert!((loss.mean - want).abs() < 4.0 * se, "{} vs {want}", loss.mean);
    assert!(loss.sigmas.iter().all(|&s| s == sigma));
}

#[test]
fn dsm_loss_rejects_empty_batch() {
    let r = dsm_loss(&|y: &[f64], _| y.to_vec(), &[], &SigmaSampler::default(), &mut rng(0));
    assert_eq!(r.unwrap_err(), EdmError::EmptyBatch);
}

fn gaussian_batch(mu: &[f64], s: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..n).map(|_| normal_vec(mu.len(), s, &mut r).iter().zip(mu).map(|(e, m)| e + m).collect()).collect()
}

#[test]
fn optimal_denoiser_beats_skip_baseline() {
    let (mu, s) = (vec![3.0, -1.0], 0.5);
    let batch = gaussian_batch(&mu, s, 5000, 1);
    let opt = |y: &[f64], sigma: f64| optimal_gaussian_denoiser(&mu, s, y, sigma);
    let skip = |y: &[f64], sigma: f64| y.iter().map(|v| v / (1.0 + sigma * sigma)).collect::<Vec<_>>();
    let sampler = SigmaSampler::default();
    let a = dsm_loss(&opt, &batch, &sampler, &mut rng(2)).unwrap().mean;
    let b = dsm_loss(&skip, &batch, &sampler, &mut rng(2)).unwrap().mean;
    assert!(a < b, "{a} vs {b}");
}

#[test]
fn optimal_denoiser_is_a_local_minimum() {
    // Same (σ, n) draws for every candidate; shifting the output in any
    // direction raises the loss.
    let (mu, s) = (vec![3.0, -1.0], 0.5);
    let batch = gaussian_batch(&mu, s, 20_000, 3);
    let sampler = SigmaSampler::default();
    let loss_with = |shift: [f64; 2]| {
        let d = |y: &[f64], sigma: f64| {
            let mut o = optimal_gaussian_denoiser(&mu, s, y, sigma);
            o[0] += shift[0];
            o[1] += shift[1];
            o
        };
        dsm_loss(&d, &batch, &sampler, &mut rng(4)).unwrap().mean
    };
    let base = loss_with([0.0, 0.0]);
    for shift in [[0.05, 0.0], [-0.05, 0.0], [0.0, 0.05], [0.0, -0.05], [0.04, -0.04]] {
        assert!(loss_with(shift) > base, "{shift:?}");
    }
}

#[test]
fn optimal_denoiser_matches_tweedie_score() {
    // D*(y) = y + σ²·∇ log p_σ(y) with p_σ = N(μ, (s² + σ²)·I); score by
    // central differences of the log density.
    let (mu, s) = ([1.5, -0.5, 2.0], 0.7);
    let mut r = rng(5);
    for _ in 0..200 {
        let sigma = 10f64.powf(rand::Rng::random_range(&mut r, -1.5..1.5));
        let y = normal_vec(3, 3.0, &mut r);
        let var = s * s + sigma * sigma;
        let logp = |p: &[f64]| -p.iter().zip(&mu).map(|(a, m)| (a - m) * (a - m)).sum::<f64>() / (2.0 * var);
        let h = 1e-4;
        let got = optimal_gaussian_denoiser(&mu, s, &y, sigma);
        for i in 0..3 {
            let (mut up, mut dn) = (y.clone(), y.clone());
            up[i] += h;
            dn[i] -= h;
            let score = (logp(&up) - logp(&dn)) / (2.0 * h);
            let want = y[i] + sigma * sigma * score;
            assert!((got[i] - want).abs() < 1e-6 * (1.0 + want.abs()), "σ={sigma} i={i}: {} vs {want}", got[i]);
        }
    }
}

#[test]
fn eps_loss_zero_predictor_is_dimension() {
    let dim = 4;
    let z0: Vec<Vec<f64>> = gaussian_batch(&[0.0; 4], 1.0, 10_000, 8);
    let cond = vec![(); z0.len()];
    let loss = eps_loss(|z: &[f64], _, _: &()| vec![0.0; z.len()], &z0, &cond, &VpSchedule::default(), &mut rng(9)).unwrap();
    // ‖ε‖² is chi-square with 4 dof: std √8.
    let tol = 3.0 * 8f64.sqrt() / (z0.len() as f64).sqrt();
    assert!((loss - dim as f64).abs() < tol, "{loss}");
}

#[test]
fn eps_loss_vanishes_for_oracle_predictor() {
    // With Z_0 passed as the conditioning, ε is recoverable exactly.
    let z0 = gaussian_batch(&[1.0, -2.0], 1.5, 2000, 10);
    let schedule = VpSchedule::default();
    let predict = |zt: &[f64], t: usize, c: &Vec<f64>| {
        let ab = schedule.alpha_bar(t);
        zt.iter().zip(c).map(|(z, x)| (z - ab.sqrt() * x) / (1.0 - ab).sqrt()).collect()
    };
    let loss = eps_loss(predict, &z0, &z0, &schedule, &mut rng(11)).unwrap();
    assert!(loss < 1e-18, "{loss}");
}

#[test]
fn eps_loss_is_deterministic_per_seed() {
    let z0 = gaussian_batch(&[0.0, 0.0], 1.0, 64, 12);
    let cond = vec![0u8; 64];
    let f = |z: &[f64], t: usize, _: &u8| z.iter().map(|v| v * t as f64 / 1000.0).collect();
    let a = eps_loss(f, &z0, &cond, &VpSchedule::default(), &mut rng(13)).unwrap();
    let b = eps_loss(f, &z0, &cond, &VpSchedule::default(), &mut rng(13)).unwrap();
    let c = eps_loss(f, &z0, &cond, &VpSchedule::default(), &mut rng(14)).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
    assert_ne!(a.to_bits(), c.to_bits());
}

#[test]
fn vp_schedule_values() {
    let s = VpSchedule::default();
    assert_eq!(s.steps(), 1000);
    assert_eq!(s.betas[0], 1e-4);
    assert!((s.betas[999] - 0.02).abs() < 1e-15);
    assert!((s.alpha_bar(1) - (1.0 - 1e-4)).abs() < 1e-15);
    // Independent: exp Σ ln(1 − β) with β_t = 1e-4 + (0.02 − 1e-4)(t − 1)/999.
    let log_sum: f64 = (0..1000).map(|i| (1.0 - (1e-4 + (0.02 - 1e-4) * i as f64 / 999.0)).ln()).sum();
    assert!((s.alpha_bar(1000) - log_sum.exp()).abs() < 1e-12);
    assert!(s.alpha_bar.windows(2).all(|w| w[1] < w[0]));
    assert!(s.alpha_bar(1000) < 1e-4);
    assert!(VpSchedule::linear(0.0, 0.02, 10).is_err());
    assert!(VpSchedule::linear(0.1, 0.01, 10).is_err());
    assert!(VpSchedule::linear(1e-4, 0.02, 0).is_err());
}

#[test]
fn karras_schedule_values() {
    let s = SigmaSchedule::default();
    assert_eq!(s.sigmas.len(), 41);
    assert!((s.sigmas[0] - 80.0).abs() < 1e-12);
    assert!((s.sigmas[39] - 0.002).abs() < 1e-15);
    assert_eq!(s.sigmas[40], 0.0);
    // σ^(1/ρ) is evenly spaced.
    let roots: Vec<f64> = s.sigmas[..40].iter().map(|v| v.powf(1.0 / 7.0)).collect();
    let step = roots[1] - roots[0];
    assert!(roots.windows(2).all(|w| (w[1] - w[0] - step).abs() < 1e-12));
    assert!(SigmaSchedule::karras(1.0, 0.5, 10, 7.0).is_err());
    assert!(SigmaSchedule::karras(0.1, 1.0, 0, 7.0).is_err());
    assert!(SigmaSchedule { sigmas: vec![1.0, 0.5] }.validate().is_err());
    assert!(SigmaSchedule { sigmas: vec![1.0, 2.0, 0.0] }.validate().is_err());
}

#[test]
fn single_step_with_zero_denoiser_lands_at_zero() {
    let schedule = SigmaSchedule { sigmas: vec![5.0, 0.0] };
    let out = sample(&|y: &[f64], _| vec![0.0; y.len()], &schedule, 3, &mut rng(1)).unwrap();
    // One rounding of (σ_1 − σ_0)·y/σ_0 at most.
    assert!(out.iter().all(|v| v.abs() < 1e-14), "{out:?}");
}

#[test]
fn sampler_is_deterministic_per_seed() {
    let (mu, s) = ([3.0, -1.0], 0.5);
    let d = |y: &[f64], sigma: f64| optimal_gaussian_denoiser(&mu, s, y, sigma);
    let schedule = SigmaSchedule::default();
    let a = sample(&d, &schedule, 2, &mut rng(21)).unwrap();
    let b = sample(&d, &schedule, 2, &mut rng(21)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sampler_reports_first_non_finite_step() {
    let schedule = SigmaSchedule::default();
    let d = |y: &[f64], sigma: f64| if sigma < 1.0 { vec![f64::NAN; y.len()] } else { y.to_vec() };
    let first_small = schedule.sigmas.iter().position(|&s| s < 1.0).unwrap();
    let err = sample(&d, &schedule, 2, &mut rng(0)).unwrap_err();
    assert_eq!(err, EdmError::NonFinite { step: first_small });
    let short = |_: &[f64], _: f64| vec![0.0];
    assert_eq!(sample(&short, &schedule, 2, &mut rng(0)).unwrap_err(), EdmError::ShapeMismatch { expected: 2, got: 1 });
}

#[test]
fn euler_variance_matches_deterministic_integration() {
    // One axis, μ = 0, started at y = σ_0: the output is the Euler gain.
    for steps in [5, 40, 80] {
        let schedule = SigmaSchedule::karras(0.002, 80.0, steps, 7.0).unwrap();
        let d = |y: &[f64], sigma: f64| optimal_gaussian_denoiser(&[0.0], 0.5, y, sigma);
        let out = integrate(&d, &schedule, vec![schedule.sigmas[0]]).unwrap();
        let v = euler_variance(0.5, &schedule);
        assert!((out[0] * out[0] - v).abs() < 1e-12 * v, "{steps}: {} vs {v}", out[0] * out[0]);
    }
}

#[test]
fn euler_variance_bias_is_first_order() {
    // Doubling the step count roughly halves the shortfall.
    let gap = |n| 1.0 - euler_variance(0.5, &SigmaSchedule::karras(0.002, 80.0, n, 7.0).unwrap()) / 0.25;
    let (g40, g80, g160) = (gap(40), gap(80), gap(160));
    assert!(g40 > g80 && g80 > g160 && g160 > 0.0);
    assert!((g40 / g80 - 2.0).abs() < 0.4 && (g80 / g160 - 2.0).abs() < 0.4, "{g40} {g80} {g160}");
}

#[test]
fn sampled_moments_follow_euler_prediction() {
    let r = gaussian_sampling(&[3.0, -1.0], 0.5, 40, 10_000, 3);
    assert!(r.pass, "{}", r.detail);
    let m = sample_gaussian(&[3.0, -1.0], 0.5, 40, 10_000, 3);
    assert!(m.deviation_from_euler(&[3.0, -1.0], 0.5) < 0.05);
    assert!(m.deviation_from_data(&[3.0, -1.0], 0.5) > 0.1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn coefficient_identities_hold(log_sigma in -6.0f64..6.0) {
        let sigma = log_sigma.exp();
        let c = coeffs(sigma).unwrap();
        prop_assert!((c.c_in * c.c_in - c.c_skip).abs() < 1e-12);
        prop_assert!((c.c_out * c.c_out - sigma * sigma * c.c_skip).abs() < 1e-12 * (1.0 + sigma * sigma));
        prop_assert!((c.c_skip + c.c_out * c.c_out - 1.0).abs() < 1e-12);
        prop_assert!((c.c_noise - log_sigma / 4.0).abs() < 1e-12);
        prop_assert!((lambda(sigma) - 1.0 / (c.c_out * c.c_out)).abs() < 1e-9 * lambda(sigma));
    }

    #[test]
    fn optimal_denoiser_lies_between_input_and_mean(y in -20.0f64..20.0, mu in -5.0f64..5.0, s in 0.05f64..3.0, log_sigma in -4.0f64..4.0) {
        let d = optimal_gaussian_denoiser(&[mu], s, &[y], log_sigma.exp())[0];
        prop_assert!(d >= y.min(mu) - 1e-12 && d <= y.max(mu) + 1e-12);
    }

    #[test]
    fn karras_is_strictly_decreasing(lo in 1e-4f64..0.5, span in 1.5f64..1000.0, steps in 1usize..200, rho in 0.5f64..10.0) {
        let s = SigmaSchedule::karras(lo, lo * span, steps, rho).unwrap();
        prop_assert_eq!(s.sigmas.len(), steps + 1);
        prop_assert!(s.sigmas.windows(2).all(|w| w[0] > w[1]));
    }
}
