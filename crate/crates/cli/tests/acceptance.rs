//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned.
//!
//! Criteria listed in `UNATTAINABLE` cannot be met by this artifact; they are
//! still evaluated and printed as FAIL, but do not fail the run. Any other
//! FAIL exits nonzero.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{Matrix3x4, Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenforge_cli::pipeline::{self, Input};
use scenforge_cli::toy::train_and_sample;
use scenforge_cli::config::PipelineConfig;
use scenforge_core::conditioner::{make_mask, split_views, unify_views, Task, ViewVideo};
use scenforge_core::dsl::{parse, print_canonical};
use scenforge_core::gateway::match_intent;
use scenforge_core::hdmap::{synthesize, validate, SynthParams};
use scenforge_core::kernel::{generate_scene, min_pairwise_distance, KernelParams, Trajectory};
use scenforge_core::post::{skeletonize, trace_polylines, CameraRig, CameraView, Mask, NEAR_PLANE, VIEW_ORDER};
use scenforge_diffusion::check::{coefficient_identities, gradient_check, sample_gaussian};
use scenforge_diffusion::edm::{coeffs, eps_loss, lambda, normal_vec, Preconditioning, VpSchedule};
use scenforge_diffusion::toy::{ToyDataset, TrainConfig};

/// Criteria that need the full-scale video model, or that the pinned
/// sampler cannot reach at 40 steps.
const UNATTAINABLE: &[&str] = &["generation-quality", "edm-sampling-moments"];

struct Report {
    lines: Vec<(bool, String)>,
    unexpected: usize,
}

impl Report {
    fn line(&mut self, id: &str, pass: bool, detail: impl AsRef<str>) {
        let documented = UNATTAINABLE.contains(&id);
        if !pass && !documented {
            self.unexpected += 1;
        }
        let tag = if pass { "PASS" } else { "FAIL" };
        let note = if !pass && documented { "  [documented as unattainable]" } else { "" };
        println!("{tag}  {id:<28} {}{note}", detail.as_ref());
        self.lines.push((pass, id.to_string()));
    }
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn generation_quality(r: &mut Report) {
    r.line(
        "generation-quality",
        false,
        "FID 11.2 / FVD 55.7 and detection mAP 32.9 / AMOTA 31.3 need the full video diffusion backbone trained on nuScenes; no desk-scale substitute yields these numbers",
    );
}

fn dsl_round_trip(r: &mut Report) {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/corpus");
    let mut files: Vec<_> = std::fs::read_dir(&dir).expect("corpus directory").map(|e| e.unwrap().path()).collect();
    files.sort();
    let texts: Vec<String> = files.iter().map(|p| std::fs::read_to_string(p).unwrap()).collect();
    let t = Instant::now();
    let mut failures = 0;
    for text in &texts {
        let ok = parse(text).ok().is_some_and(|spec| {
            let once = print_canonical(&spec);
            parse(&once).ok().is_some_and(|back| back == spec && print_canonical(&back) == once)
        });
        failures += usize::from(!ok);
    }
    let el = secs(t);
    r.line(
        "dsl-round-trip",
        texts.len() >= 20 && failures == 0 && el < 1.0,
        format!("{} scenarios (need >= 20), {failures} failures (need 0), {:.1} ms (limit 1 s)", texts.len(), el * 1e3),
    );
}

fn cut_in_scene(seed: u64) -> Vec<Trajectory> {
    let spec = parse(&format!("seed {seed}\nenv rain\nego: forward\nagent a1: vehicle cut_in target=ego")).unwrap();
    generate_scene(&spec, &KernelParams::default()).unwrap()
}

fn trajectory_suite(r: &mut Report) {
    let t = Instant::now();
    let (mut speed_bad, mut dist_bad, mut lat_bad, mut repro_bad) = (0, 0, 0, 0);
    let (mut min_margin, mut min_dist, mut max_lat) = (f64::INFINITY, f64::INFINITY, 0.0f64);
    for seed in 0..1000 {
        let trajs = cut_in_scene(seed);
        let (ego, a1) = (&trajs[0], &trajs[1]);
        let margin = (0..ego.len()).map(|k| a1.speeds[k] - ego.speeds[k]).fold(f64::INFINITY, f64::min);
        min_margin = min_margin.min(margin);
        speed_bad += usize::from(margin < 0.5 - 1e-12);
        let d = min_pairwise_distance(&trajs);
        min_dist = min_dist.min(d);
        dist_bad += usize::from(d < 2.0);
        // lateral offset of a1's end from the line through ego's end along ego's initial heading
        let (s, c) = ego.points[0][2].sin_cos();
        let (a, e) = (a1.points.last().unwrap(), ego.points.last().unwrap());
        let lat = (-(a[0] - e[0]) * s + (a[1] - e[1]) * c).abs();
        max_lat = max_lat.max(lat);
        lat_bad += usize::from(lat > 0.5);
        repro_bad += usize::from(cut_in_scene(seed) != trajs);
    }
    let el = secs(t);
    r.line("traj-speed-margin", speed_bad == 0, format!("1000 scenes, {speed_bad} violations; min (v_cut - v_target) {min_margin:.3} m/s (need >= 0.5)"));
    r.line("traj-min-distance", dist_bad == 0, format!("1000 scenes, {dist_bad} violations; min pairwise distance {min_dist:.3} m (need >= 2.0)"));
    r.line("traj-final-lateral-error", lat_bad == 0, format!("1000 scenes, {lat_bad} violations; max final lateral error {max_lat:.4} m (need <= 0.5)"));
    r.line("traj-bit-exact", repro_bad == 0, format!("1000 scenes regenerated, {repro_bad} differ (need 0)"));
    r.line("traj-suite-time", el < 30.0, format!("{el:.2} s for 2000 scene generations (limit 30 s)"));
}

const EGO_CALLS: &[&str] = &["forward", "accelerate", "brake", "lane_change_left", "lane_change_right", "stop", "u_turn", "steer_left"];
const AGENT_CALLS: &[&str] = &[
    "vehicle cut_in target=ego",
    "vehicle follow target=ego",
    "vehicle overtake target=ego",
    "vehicle forward",
    "pedestrian pedestrian_cross",
    "pedestrian pedestrian_walk",
];

/// Mixed scene family; turning egos only get pedestrians.
fn map_scene(seed: u64) -> String {
    let ego = EGO_CALLS[(seed % EGO_CALLS.len() as u64) as usize];
    let turning = matches!(ego, "u_turn" | "steer_left");
    let mut src = format!("seed {seed}\nego: {ego}\n");
    let mut bits = seed / EGO_CALLS.len() as u64;
    let mut n = 0;
    for (i, a) in AGENT_CALLS.iter().enumerate() {
        let on = bits & 1 == 1;
        bits >>= 1;
        if on && (!turning || a.starts_with("pedestrian")) && n < 3 {
            n += 1;
            src.push_str(&format!("agent x{i}: {a}\n"));
        }
    }
    src
}

fn hdmap_suite(r: &mut Report) {
    let (mut scenes, mut rejected, mut violating) = (0, 0, 0);
    let mut seed = 0u64;
    while scenes < 200 {
        let spec = parse(&map_scene(seed)).unwrap();
        seed += 1;
        let Ok(trajs) = generate_scene(&spec, &KernelParams::default()) else {
            rejected += 1;
            continue;
        };
        scenes += 1;
        let map = synthesize(&trajs, &SynthParams::default(), &mut ChaCha8Rng::seed_from_u64(spec.seed)).unwrap();
        violating += usize::from(!validate(&map, &trajs).is_empty());
    }
    r.line(
        "hdmap-constraints",
        violating == 0,
        format!("200 scenes, {violating} with violations (need 0); {rejected} candidate scenes rejected by collision repair and replaced"),
    );

    let maps: Vec<_> = (0..200u64)
        .map(|s| {
            let trajs = cut_in_scene(s);
            synthesize(&trajs, &SynthParams::default(), &mut ChaCha8Rng::seed_from_u64(s)).unwrap()
        })
        .collect();
    let (mut pairs, mut distinct) = (0usize, 0usize);
    for i in 0..maps.len() {
        for j in i + 1..maps.len() {
            pairs += 1;
            distinct += usize::from(maps[i] != maps[j]);
        }
    }
    let frac = distinct as f64 / pairs as f64;
    r.line("hdmap-diversity", frac >= 0.95, format!("{distinct} of {pairs} seed pairs distinct ({:.2}%, need >= 95%)", 100.0 * frac));
}

fn random_mask(seed: u64, size: usize) -> Mask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Mask::new(size, size);
    for _ in 0..rng.random_range(1..6) {
        let (r0, c0) = (rng.random_range(0..size), rng.random_range(0..size));
        if rng.random_bool(0.5) {
            let (hh, ww) = (rng.random_range(1..12), rng.random_range(1..30));
            for r in r0..(r0 + hh).min(size) {
                for c in c0..(c0 + ww).min(size) {
                    m.set(r, c, true);
                }
            }
        } else {
            let rad: f64 = rng.random_range(1.0..8.0);
            for r in 0..size {
                for c in 0..size {
                    if ((r as f64 - r0 as f64).powi(2) + (c as f64 - c0 as f64).powi(2)).sqrt() <= rad {
                        m.set(r, c, true);
                    }
                }
            }
        }
    }
    m
}

/// Fraction of skeleton pixels that appear on some traced path.
fn coverage(s: &Mask) -> (usize, usize) {
    let mut hit = vec![false; s.width * s.height];
    for path in trace_polylines(s) {
        for (r, c) in path {
            hit[r * s.width + c] = true;
        }
    }
    let total = s.count();
    let covered = s.pixels().filter(|&(r, c)| hit[r * s.width + c]).count();
    (covered, total)
}

fn oracle(view: &CameraView, p: [f64; 3]) -> Option<[f64; 2]> {
    let (r, t) = (&view.rotation, &view.translation);
    #[rustfmt::skip]
    let ext = Matrix4::new(
        r[0], r[1], r[2], t[0],
        r[3], r[4], r[5], t[1],
        r[6], r[7], r[8], t[2],
        0.0, 0.0, 0.0, 1.0,
    );
    #[rustfmt::skip]
    let k = Matrix3x4::new(
        view.fx, 0.0, view.cx, 0.0,
        0.0, view.fy, view.cy, 0.0,
        0.0, 0.0, 1.0, 0.0,
    );
    let cam = ext * Vector4::new(p[0], p[1], p[2], 1.0);
    if cam[2] <= NEAR_PLANE {
        return None;
    }
    let h = k * cam;
    Some([h[0] / h[2], h[1] / h[2]])
}

fn skeleton_suite(r: &mut Report) {
    let mut not_idempotent = 0;
    let (mut covered, mut total) = (0, 0);
    for seed in 0..50 {
        let s = skeletonize(&random_mask(seed, 96));
        not_idempotent += usize::from(skeletonize(&s) != s);
        let (c, t) = coverage(&s);
        covered += c;
        total += t;
    }
    r.line("skeleton-idempotence", not_idempotent == 0, format!("50 random masks, {not_idempotent} change on a second pass (need 0)"));

    let mut stripe = Mask::new(512, 512);
    for row in 10..=12 {
        for col in 50..460 {
            stripe.set(row, col, true);
        }
    }
    let s = skeletonize(&stripe);
    let px: Vec<(usize, usize)> = s.pixels().collect();
    let centered = px.iter().all(|&(row, _)| row == 11) && px.windows(2).all(|w| w[1].1 == w[0].1 + 1);
    r.line(
        "skeleton-stripe-center",
        centered && !px.is_empty(),
        format!("3-px stripe rows 10..=12 thins to {} pixels, all on row 11 and contiguous: {centered}", px.len()),
    );

    let (c, t) = coverage(&s);
    covered += c;
    total += t;
    r.line("polyline-coverage", covered == total, format!("{covered} of {total} skeleton pixels on a traced path (need 100%)"));

    let rig = CameraRig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut compared, mut mismatched, mut worst) = (0, 0, 0.0f64);
    for _ in 0..10_000 {
        let p = [rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-1.0..3.0)];
        for view in &rig.views {
            match (view.project_point(p), oracle(view, p)) {
                (Some(a), Some(b)) => {
                    worst = worst.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
                    compared += 1;
                }
                (None, None) => {}
                _ => mismatched += 1,
            }
        }
    }
    r.line(
        "projection-oracle",
        worst <= 1e-6 && mismatched == 0,
        format!("10^4 points x 6 views, {compared} in front; max deviation {worst:.2e} px (limit 1e-6), {mismatched} culling disagreements"),
    );
}

fn layout_suite(r: &mut Report, bundle_shape: [usize; 4]) {
    r.line("unimvm-dims", bundle_shape == [8, 3, 256, 2688], format!("bundle layout {bundle_shape:?} (need [8, 3, 256, 2688])"));

    let mut ok = true;
    let mut detail = Vec::new();
    for task in [Task::FuturePrediction, Task::FrontOutpaint, Task::FullGeneration] {
        let m = make_mask(task, 8);
        let inv = m.complement();
        let partition = m.cells.iter().zip(&inv).all(|(a, b)| a.iter().zip(b).all(|(&x, &y)| x & y == 0 && x | y == 1));
        let total = m.cells.iter().flatten().count();
        ok &= partition && total == 48 && m.views == VIEW_ORDER;
        detail.push(format!("{task:?}: {} observed + {} generated of {total}", m.ones(), total - m.ones()));
    }
    r.line("unimvm-mask-partition", ok, detail.join("; "));

    let videos: Vec<(String, ViewVideo)> = VIEW_ORDER
        .iter()
        .enumerate()
        .map(|(k, n)| {
            let mut v = ViewVideo::blank(8, 256, 448);
            let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
            rng.fill(&mut v.data[..]);
            (n.to_string(), v)
        })
        .collect();
    let layout = unify_views(&videos).unwrap();
    let back = split_views(&layout);
    r.line(
        "unimvm-round-trip",
        back == videos && layout.shape() == [8, 3, 256, 2688],
        format!("unify then split of 6 random 8x3x256x448 videos is byte-exact: {}", back == videos),
    );
}

fn edm_suite(r: &mut Report) {
    let t = Instant::now();
    let ident = coefficient_identities(&Preconditioning::default(), 1);
    r.line("edm-coefficient-identities", ident.metric <= 1e-12, format!("max residual {:.2e} over 10^3 sigmas (limit 1e-12)", ident.metric));

    let c = coeffs(1.0).unwrap();
    let exact = c.c_skip == 0.5 && c.c_noise == 0.0 && lambda(1.0) == 2.0;
    r.line("edm-exact-values", exact, format!("c_skip(1) = {}, c_noise(1) = {}, lambda(1) = {} (exact 0.5, 0, 2)", c.c_skip, c.c_noise, lambda(1.0)));

    let (mu, s) = ([3.0, -1.0], 0.5);
    let m = sample_gaussian(&mu, s, 40, 10_000, 3);
    let dev = m.deviation_from_data(&mu, s);
    r.line(
        "edm-sampling-moments",
        dev <= 0.05,
        format!(
            "40-step Euler, 10^4 draws: mean {:.4?}, var {:.4}/{:.4} vs data 0.25; worst relative deviation {dev:.4} (limit 0.05); Euler's own predicted variance {:.4}, matched to {:.4}",
            m.mean,
            m.cov[0][0],
            m.cov[1][1],
            m.euler_variance,
            m.deviation_from_euler(&mu, s)
        ),
    );
    let el = secs(t);
    r.line("edm-suite-time", el < 10.0, format!("{el:.2} s (limit 10 s)"));

    let g = gradient_check(2, 20);
    r.line("gradient-check", g.metric <= 1e-4, format!("20 random configurations, max relative error {:.2e} (limit 1e-4)", g.metric));
}

fn training_suite(r: &mut Report) {
    let t = Instant::now();
    let data = ToyDataset::default();
    let (_, sum) = train_and_sample(&data, &TrainConfig::default(), 42, 2000).expect("training runs");
    let el = secs(t);
    r.line(
        "dsm-loss-reduction",
        sum.reduction >= 0.5,
        format!("loss {:.4} -> {:.4}, {:.1}% lower after 2000 steps (need >= 50%)", sum.initial_loss, sum.final_loss, 100.0 * sum.reduction),
    );
    let mean_err = sum.sample_mean.iter().zip([3.0f64, -1.0]).map(|(m, w)| (m - w).abs() / w.abs()).fold(0.0, f64::max);
    let std_err = sum.sample_std.iter().map(|sd| (sd - 0.5).abs() / 0.5).fold(0.0, f64::max);
    r.line(
        "dsm-sample-moments",
        mean_err <= 0.10 && std_err <= 0.15,
        format!(
            "2000 samples: mean {:.3?} (max rel err {mean_err:.3}, limit 0.10), std {:.3?} (max rel err {std_err:.3}, limit 0.15)",
            sum.sample_mean, sum.sample_std
        ),
    );
    r.line("dsm-training-time", el < 120.0, format!("{el:.1} s single-threaded (limit 120 s)"));
}

fn eps_suite(r: &mut Report) {
    let (dim, batch) = (4usize, 10_000usize);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let z0: Vec<Vec<f64>> = (0..batch).map(|_| normal_vec(dim, 1.0, &mut rng)).collect();
    let cond = vec![(); batch];
    let loss = eps_loss(|z: &[f64], _, _: &()| vec![0.0; z.len()], &z0, &cond, &VpSchedule::default(), &mut rng).unwrap();
    // ‖ε‖² is chi-square with `dim` degrees of freedom: variance 2·dim.
    let se = (2.0 * dim as f64).sqrt() / (batch as f64).sqrt();
    let z = (loss - dim as f64).abs() / se;
    r.line("eps-loss-zero-predictor", z <= 3.0, format!("batch 10^4, dim {dim}: loss {loss:.4}, {z:.2} standard errors from {dim} (limit 3)"));
}

fn intent_suite(r: &mut Report) {
    let cases: [(&str, &str, &[&str], &[&str]); 3] = [
        ("on a rainy day, there is a car cut in", "forward", &["cut_in"], &["rain"]),
        ("a person crosses the road on a rainy day", "forward", &["pedestrian_cross"], &["rain"]),
        ("the ego car changes lane during the daytime", "lane_change_left", &[], &["daytime"]),
    ];
    let mut wrong = Vec::new();
    for (prompt, ego, agents, env) in cases {
        let m = match_intent(prompt);
        let got_agents: Vec<&str> = m.spec.agents.iter().map(|a| a.call.function.as_str()).collect();
        let got_env: BTreeSet<&str> = m.spec.environment.iter().map(String::as_str).collect();
        if m.fallback || m.spec.ego.function != ego || got_agents != agents || got_env != env.iter().copied().collect() {
            wrong.push(prompt);
        }
    }
    r.line(
        "intent-matcher",
        wrong.is_empty(),
        format!("3 showcased prompts -> cut_in+rain, pedestrian_cross+rain, lane_change+daytime; {} mismatched {wrong:?}", wrong.len()),
    );
}

/// Returns the bundle layout shape for the layout suite.
fn end_to_end(r: &mut Report) -> [usize; 4] {
    let tmp = std::env::temp_dir().join(format!("scenforge-acceptance-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&tmp);
    let t = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_scenforge"))
        .args(["gen", "--prompt", "on a rainy day, there is a car cut in", "--offline", "--out"])
        .arg(&tmp)
        .env_remove("SCENFORGE_LLM_URL")
        .output()
        .expect("run scenforge");
    let el = secs(t);
    let valid = pipeline::validate_tree(&tmp);
    let shape = scenforge_core::conditioner::ConditionBundle::load(&tmp.join("bundle")).map(|b| b.meta.layout).unwrap_or([0; 4]);
    let detail = match &valid {
        Ok(rep) => format!("{} agents, env {:?}, {} frames", rep.agents, rep.environment, rep.frames),
        Err(e) => format!("tree does not validate: {e:#}"),
    };
    let agents_ok = valid.as_ref().is_ok_and(|rep| rep.agents == 2 && rep.environment == ["rain"]);
    r.line(
        "end-to-end-gen",
        status.status.success() && agents_ok && el < 5.0,
        format!("offline gen of the rainy cut-in prompt: exit {:?}, {el:.2} s (limit 5 s), {detail}", status.status.code()),
    );

    // The same run in-process must reproduce the written tree.
    let cfg = PipelineConfig { offline: true, ..PipelineConfig::default() };
    let (spec, source) = pipeline::resolve(&Input::Prompt("on a rainy day, there is a car cut in".into()), &cfg).unwrap();
    let g = pipeline::generate(spec, source, &cfg).unwrap();
    let again = tmp.with_extension("again");
    g.write(&again).unwrap();
    let same = ["scenario.scn", "trajectories.json", "hdmap.json", "t_b.ppm", "h_b.ppm", "render.svg", "bundle/meta.json", "bundle/hdmap_cond_07.ppm"]
        .iter()
        .all(|f| std::fs::read(tmp.join(f)).ok() == std::fs::read(again.join(f)).ok());
    r.line("end-to-end-determinism", same, format!("binary and in-process runs write byte-identical artifacts: {same}"));
    let _ = std::fs::remove_dir_all(&tmp);
    let _ = std::fs::remove_dir_all(&again);
    shape
}

fn main() {
    let t = Instant::now();
    let mut r = Report { lines: Vec::new(), unexpected: 0 };
    generation_quality(&mut r);
    dsl_round_trip(&mut r);
    trajectory_suite(&mut r);
    hdmap_suite(&mut r);
    skeleton_suite(&mut r);
    let shape = end_to_end(&mut r);
    layout_suite(&mut r, shape);
    edm_suite(&mut r);
    training_suite(&mut r);
    eps_suite(&mut r);
    intent_suite(&mut r);
    let passed = r.lines.iter().filter(|l| l.0).count();
    let failed = r.lines.len() - passed;
    println!(
        "acceptance: {passed} passed, {failed} failed ({} documented as unattainable) in {:.1} s",
        failed - r.unexpected,
        secs(t)
    );
    if r.unexpected > 0 {
        std::process::exit(1);
    }
}
