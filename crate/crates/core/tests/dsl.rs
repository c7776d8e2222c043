use std::path::{Path, PathBuf};

use proptest::prelude::*;
use scenforge_core::dsl::{self, parse, print_canonical, registry, ParseErrorKind};
use scenforge_core::kernel::{generate_scene, KernelParams, Trajectory};

fn corpus() -> Vec<(PathBuf, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/corpus");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files.into_iter().map(|p| (p.clone(), std::fs::read_to_string(&p).unwrap())).collect()
}

#[test]
fn corpus_round_trips() {
    let files = corpus();
    assert!(files.len() >= 20, "corpus has {} scenarios", files.len());
    for (path, text) in files {
        let spec = parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let once = print_canonical(&spec);
        let again = parse(&once).unwrap();
        assert_eq!(again, spec, "{}", path.display());
        assert_eq!(print_canonical(&again), once, "{} is not a fixpoint", path.display());
    }
}

#[test]
fn corpus_scenarios_generate() {
    for (path, text) in corpus() {
        let spec = parse(&text).unwrap();
        let trajs = generate_scene(&spec, &KernelParams::default()).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(trajs.len(), spec.agents.len() + 1);
    }
}

#[test]
fn registry_roster() {
    let names: Vec<&str> = registry().iter().map(|f| f.name).collect();
    assert_eq!(names.len(), 18);
    for n in ["cut_in", "u_turn", "save_trajectories", "pedestrian_cross", "set_seed"] {
        assert!(names.contains(&n), "{n}");
    }
    let mut sorted = names.clone();
    sorted.sort_unstable();
    sorted.dedup();
    assert_eq!(sorted.len(), 18);
}

#[test]
fn cut_in_safe_dis_parameter() {
    let spec = parse("ego: forward speed=10\nagent a1: vehicle cut_in target=ego safe_dis=10").unwrap();
    assert_eq!(spec.agents[0].call.number("safe_dis"), Some(10.0));
    assert_eq!(spec.agents[0].call.target(), Some("ego"));
}

#[test]
fn error_kinds() {
    let kind = |src: &str| parse(src).unwrap_err().kind;
    assert!(matches!(kind("ego: forward\nagent a1: vehicle cut_in target=ghost"), ParseErrorKind::UnresolvedTarget(_)));
    assert!(matches!(kind("ego: teleport"), ParseErrorKind::UnknownFunction(_)));
    assert!(matches!(kind("ego: forward\nagent a: vehicle forward\nagent a: vehicle forward"), ParseErrorKind::DuplicateAgent(_)));
    assert!(matches!(kind("ego: forward speed=99"), ParseErrorKind::OutOfRange { .. }));
    assert!(matches!(kind("ego: forward colour=red"), ParseErrorKind::UnknownParam { .. }));
    let e = parse("ego: forward\n\nagent a1: vehicle cut_in target=ghost").unwrap_err();
    assert_eq!(e.line, 3);
}

#[test]
fn empty_and_egoless_documents_fail() {
    assert!(parse("").is_err());
    assert!(parse("scenario s\nseed 1\n").is_err());
}

fn golden_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/cut_in_seed42.json")
}

/// Pins the seed-42 cut-in scene. Set `SCENFORGE_BLESS=1` to rewrite.
#[test]
fn cut_in_seed42_golden() {
    let spec = parse("seed 42\nenv rain\nego: forward\nagent a1: vehicle cut_in target=ego").unwrap();
    let trajs = generate_scene(&spec, &KernelParams::default()).unwrap();
    if std::env::var_os("SCENFORGE_BLESS").is_some() {
        std::fs::create_dir_all(golden_path().parent().unwrap()).unwrap();
        std::fs::write(golden_path(), serde_json::to_string_pretty(&trajs).unwrap() + "\n").unwrap();
    }
    let golden: Vec<Trajectory> = serde_json::from_str(&std::fs::read_to_string(golden_path()).unwrap()).unwrap();
    assert_eq!(golden.len(), trajs.len());
    for (g, t) in golden.iter().zip(&trajs) {
        assert_eq!((&g.agent_id, g.category, &g.maneuver), (&t.agent_id, t.category, &t.maneuver));
        for (a, b) in g.points.iter().zip(&t.points) {
            for i in 0..4 {
                assert!((a[i] - b[i]).abs() <= 1e-9, "{}: {a:?} vs {b:?}", g.agent_id);
            }
        }
        for (a, b) in g.speeds.iter().zip(&t.speeds) {
            assert!((a - b).abs() <= 1e-9);
        }
    }
}

const EGO_CALLS: &[&str] = &["forward", "accelerate", "brake", "stop", "steer_left", "steer_right", "lane_change_left", "lane_change_right", "u_turn"];
const AGENT_CALLS: &[&str] = &["vehicle forward", "vehicle cut_in", "vehicle follow", "vehicle overtake", "pedestrian pedestrian_walk", "pedestrian pedestrian_cross"];

fn scenario() -> impl Strategy<Value = String> {
    (
        "[a-z][a-z0-9_]{0,8}",
        any::<u64>(),
        prop::collection::btree_set(prop::sample::select(vec!["rain", "night", "daytime", "sunny", "fog"]), 0..3),
        prop::sample::select(EGO_CALLS.to_vec()),
        0.0f64..40.0,
        -3.0f64..3.0,
        prop::collection::vec((prop::sample::select(AGENT_CALLS.to_vec()), 0.5f64..100.0), 0..4),
    )
        .prop_map(|(name, seed, env, ego, speed, heading, agents)| {
            let mut s = format!("scenario {name}\nseed {seed}\n");
            if !env.is_empty() {
                s += &format!("env {}\n", env.into_iter().collect::<Vec<_>>().join(" "));
            }
            s += &format!("ego: {ego} heading={heading} speed={speed}\n");
            for (i, (call, safe)) in agents.into_iter().enumerate() {
                let extra = if call.ends_with("cut_in") { format!(" safe_dis={safe}") } else { String::new() };
                s += &format!("agent x{i}: {call}{extra}\n");
            }
            s
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn canonical_form_is_a_fixpoint(src in scenario()) {
        let spec = parse(&src).unwrap();
        let text = print_canonical(&spec);
        let back = parse(&text).unwrap();
        prop_assert_eq!(&back, &spec);
        prop_assert_eq!(print_canonical(&back), text);
    }

    #[test]
    fn parser_never_panics(src in "[ -~\n]{0,120}") {
        let _ = parse(&src);
    }

    #[test]
    fn numbers_survive_printing(speed in 0.0f64..=40.0) {
        let spec = parse(&format!("ego: forward speed={speed}")).unwrap();
        let back = parse(&print_canonical(&spec)).unwrap();
        prop_assert_eq!(back.ego.number("speed").map(f64::to_bits), Some(speed.to_bits()));
        prop_assert_eq!(back.ego.function.as_str(), "forward");
        prop_assert_eq!(spec.ego.function.as_str(), dsl::lookup("forward").unwrap().name);
    }
}
