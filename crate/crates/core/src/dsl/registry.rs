//! The trajectory function library.
//!
//! Eighteen functions: twelve vehicle maneuvers, two pedestrian behaviours and
//! four utilities. Every parameter carries a kind, an accepted range and a
//! default, so a call can be checked without running it.

use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FunctionCategory {
    Vehicle,
    Pedestrian,
    Utility,
}

/// Whether the function is named by the source behaviour set or was added to
/// complete the library.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Named,
    Reconstructed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamKind {
    /// m/s
    Speed,
    /// m
    Distance,
    /// rad; the surface syntax also takes a `deg` suffix
    Angle,
    /// s
    Duration,
    /// m/s², magnitude
    Accel,
    /// ego-frame point in m
    Point,
    /// reference to `ego` or a declared agent id
    Target,
    Choice(&'static [&'static str]),
    Path,
    Seed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamDefault {
    Number(f64),
    Ident(&'static str),
    Point([f64; 2]),
    /// Drawn from the kernel configuration at generation time.
    Sampled(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ParamKind,
    /// Inclusive bounds; points apply them per coordinate. Unused for
    /// identifier kinds.
    pub min: f64,
    pub max: f64,
    pub default: ParamDefault,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionSpec {
    pub name: &'static str,
    pub category: FunctionCategory,
    pub provenance: Provenance,
    pub summary: &'static str,
    pub params: &'static [ParamSpec],
}

impl FunctionSpec {
    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Compact signature line, e.g. `cut_in(target: target = ego, ...)`.
    pub fn signature(&self) -> String {
        let params: Vec<String> = self
            .params
            .iter()
            .map(|p| {
                let default = match p.default {
                    ParamDefault::Number(v) => format!("{v}"),
                    ParamDefault::Ident(s) => s.to_string(),
                    ParamDefault::Point([x, y]) => format!("({x}, {y})"),
                    ParamDefault::Sampled(d) => format!("<{d}>"),
                };
                format!("{}: {} = {}", p.name, kind_name(p.kind), default)
            })
            .collect();
        format!("{}({})", self.name, params.join(", "))
    }
}

pub fn kind_name(kind: ParamKind) -> &'static str {
    match kind {
        ParamKind::Speed => "m/s",
        ParamKind::Distance => "m",
        ParamKind::Angle => "rad",
        ParamKind::Duration => "s",
        ParamKind::Accel => "m/s^2",
        ParamKind::Point => "point",
        ParamKind::Target => "target",
        ParamKind::Choice(_) => "choice",
        ParamKind::Path => "path",
        ParamKind::Seed => "u64",
    }
}

const fn p(name: &'static str, kind: ParamKind, min: f64, max: f64, default: ParamDefault) -> ParamSpec {
    ParamSpec { name, kind, min, max, default }
}

const SPEED: ParamSpec = p("speed", ParamKind::Speed, 0.0, 40.0, ParamDefault::Sampled("uniform in V_RANGE"));
const START: ParamSpec = p(
    "start",
    ParamKind::Point,
    -200.0,
    200.0,
    ParamDefault::Sampled("origin for ego, otherwise 10-30 m ahead in an adjacent lane"),
);
const HEADING: ParamSpec = p("heading", ParamKind::Angle, -PI, PI, ParamDefault::Number(0.0));
const AT: ParamSpec = p("at", ParamKind::Duration, 0.0, 60.0, ParamDefault::Number(1.0));
const SIDE: &[&str] = &["left", "right"];

const FORWARD: &[ParamSpec] = &[SPEED, START, HEADING];
const ACCELERATE: &[ParamSpec] = &[
    SPEED,
    START,
    HEADING,
    p("accel", ParamKind::Accel, 0.1, 8.0, ParamDefault::Number(2.5)),
    p("target_speed", ParamKind::Speed, 0.0, 40.0, ParamDefault::Sampled("V_RANGE max")),
    AT,
];
const BRAKE: &[ParamSpec] = &[
    SPEED,
    START,
    HEADING,
    p("decel", ParamKind::Accel, 0.1, 10.0, ParamDefault::Number(2.5)),
    p("target_speed", ParamKind::Speed, 0.0, 40.0, ParamDefault::Sampled("V_RANGE min")),
    AT,
];
const STOP: &[ParamSpec] = &[
    SPEED,
    START,
    HEADING,
    p("decel", ParamKind::Accel, 0.1, 10.0, ParamDefault::Number(2.5)),
    AT,
];
const STEER: &[ParamSpec] = &[
    p("speed", ParamKind::Speed, 0.0, 40.0, ParamDefault::Number(6.0)),
    START,
    HEADING,
    p("angle", ParamKind::Angle, 0.0, PI, ParamDefault::Number(PI / 2.0)),
    p("radius", ParamKind::Distance, 3.0, 100.0, ParamDefault::Number(12.0)),
    AT,
];
const LANE_CHANGE: &[ParamSpec] = &[
    SPEED,
    START,
    HEADING,
    p("offset", ParamKind::Distance, 1.0, 10.0, ParamDefault::Number(3.5)),
    AT,
];
const OVERTAKE: &[ParamSpec] = &[
    p("target", ParamKind::Target, 0.0, 0.0, ParamDefault::Ident("ego")),
    p("side", ParamKind::Choice(SIDE), 0.0, 0.0, ParamDefault::Ident("left")),
    p("gap", ParamKind::Distance, 6.0, 50.0, ParamDefault::Number(12.0)),
    p("offset", ParamKind::Distance, 1.0, 10.0, ParamDefault::Number(3.5)),
];
const FOLLOW: &[ParamSpec] = &[
    p("target", ParamKind::Target, 0.0, 0.0, ParamDefault::Ident("ego")),
    p("time_gap", ParamKind::Duration, 0.5, 5.0, ParamDefault::Number(1.5)),
    p("standstill", ParamKind::Distance, 3.0, 30.0, ParamDefault::Number(5.0)),
];
const U_TURN: &[ParamSpec] = &[
    p("speed", ParamKind::Speed, 0.0, 40.0, ParamDefault::Number(4.0)),
    START,
    HEADING,
    p("radius", ParamKind::Distance, 3.0, 30.0, ParamDefault::Number(6.0)),
    p("direction", ParamKind::Choice(SIDE), 0.0, 0.0, ParamDefault::Ident("left")),
    AT,
];
const CUT_IN: &[ParamSpec] = &[
    p("target", ParamKind::Target, 0.0, 0.0, ParamDefault::Ident("ego")),
    p("safe_dis", ParamKind::Distance, 0.5, 100.0, ParamDefault::Number(10.0)),
];
const PED_WALK: &[ParamSpec] = &[
    p("speed", ParamKind::Speed, 0.5, 2.0, ParamDefault::Sampled("uniform in [0.5, 2.0]")),
    p(
        "start",
        ParamKind::Point,
        -200.0,
        200.0,
        ParamDefault::Sampled("5-40 m ahead on either sidewalk (|y| 8-10 m)"),
    ),
    HEADING,
];
const PED_CROSS: &[ParamSpec] = &[
    p("speed", ParamKind::Speed, 0.5, 2.0, ParamDefault::Sampled("uniform in [0.5, 2.0]")),
    p("direction", ParamKind::Choice(SIDE), 0.0, 0.0, ParamDefault::Ident("left")),
    p("x", ParamKind::Distance, -200.0, 200.0, ParamDefault::Sampled("uniform in [15, 40]")),
    p("offset", ParamKind::Distance, 2.0, 30.0, ParamDefault::Number(8.0)),
];
const SET_SEED: &[ParamSpec] = &[p("value", ParamKind::Seed, 0.0, u64::MAX as f64, ParamDefault::Number(0.0))];
const SAVE: &[ParamSpec] = &[p("path", ParamKind::Path, 0.0, 0.0, ParamDefault::Ident("out"))];

const fn f(
    name: &'static str,
    category: FunctionCategory,
    provenance: Provenance,
    summary: &'static str,
    params: &'static [ParamSpec],
) -> FunctionSpec {
    FunctionSpec { name, category, provenance, summary, params }
}

use FunctionCategory::{Pedestrian, Utility, Vehicle};
use Provenance::{Named, Reconstructed};

static REGISTRY: [FunctionSpec; 18] = [
    f("forward", Vehicle, Named, "keep lane at constant speed", FORWARD),
    f("accelerate", Vehicle, Named, "linear speed ramp up to target_speed", ACCELERATE),
    f("brake", Vehicle, Named, "linear speed ramp down to target_speed", BRAKE),
    f("steer_left", Vehicle, Named, "constant-radius left turn through angle", STEER),
    f("steer_right", Vehicle, Named, "constant-radius right turn through angle", STEER),
    f("lane_change_left", Vehicle, Named, "move one lane to the left", LANE_CHANGE),
    f("lane_change_right", Vehicle, Named, "move one lane to the right", LANE_CHANGE),
    f("overtake", Vehicle, Named, "pull out, pass the target, return to its lane", OVERTAKE),
    f("follow", Vehicle, Named, "trail the target with a time-gap controller", FOLLOW),
    f("u_turn", Vehicle, Named, "half-circle turn then continue", U_TURN),
    f("cut_in", Vehicle, Named, "merge into the target's lane just ahead of it", CUT_IN),
    f("stop", Vehicle, Reconstructed, "decelerate to standstill and hold", STOP),
    f("pedestrian_walk", Pedestrian, Named, "walk along a heading", PED_WALK),
    f("pedestrian_cross", Pedestrian, Named, "walk across the road", PED_CROSS),
    f("set_seed", Utility, Reconstructed, "scene random seed", SET_SEED),
    f("save_trajectories", Utility, Named, "write trajectory arrays", SAVE),
    f("save_bev", Utility, Reconstructed, "write BEV rasters", SAVE),
    f("save_bundle", Utility, Reconstructed, "write the condition bundle", SAVE),
];

pub fn registry() -> &'static [FunctionSpec] {
    &REGISTRY
}

pub fn lookup(name: &str) -> Option<&'static FunctionSpec> {
    REGISTRY.iter().find(|f| f.name == name)
}
