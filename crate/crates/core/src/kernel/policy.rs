//! Per-maneuver step rules.
//!
//! `cut_in` is the reference algorithm. Every other maneuver is
//! reconstructed from the same building blocks: the lateral merge controller,
//! the lane-hold rule and per-step speed perturbation inside a clamp.

use std::f64::consts::PI;

use rand::Rng;
use serde::Serialize;

use super::{clip, rand_in, update_yaw, KernelError, KernelParams, Trajectory};
use crate::dsl::{Category, ManeuverCall, ParamDefault, EGO_ID};
use crate::geom::{dot, heading_vec, left_normal, sub, wrap_angle, Vec2};

const DEG: f64 = PI / 180.0;

const HOLD_STEP: f64 = 0.3 * DEG;
const HOLD_CLAMP: f64 = 1.0 * DEG;
/// Corrective aim toward the reference line, per metre of lateral error.
const HOLD_GAIN: f64 = 2.0 * DEG;
const APPROACH_STEP: f64 = 0.1;
const APPROACH_CLAMP: f64 = 20.0 * DEG;
const MERGE_CLAMP: [f64; 2] = [10.0 * DEG, 20.0 * DEG];
const MERGE_DONE: f64 = 0.5;

const CUT_IN_AHEAD: [f64; 2] = [0.0, 10.0];
const CUT_IN_LEAD: f64 = 0.5;
const CUT_IN_SPEED_DELTA: [f64; 2] = [-2.0, 2.0];

const CRUISE_DELTA: [f64; 2] = [-0.2, 0.2];
const CRUISE_BAND: f64 = 0.5;
const RAMP_JITTER: f64 = 0.1;

const DEFAULT_AHEAD: [f64; 2] = [10.0, 30.0];
const LANE_WIDTH: f64 = 3.5;

const OVERTAKE_HOLD: f64 = 3.0;
const OVERTAKE_LEAD: f64 = 8.0;
const OVERTAKE_DELTA: [f64; 2] = [-0.2, 0.6];
const FOLLOW_GAIN: f64 = 0.5;

const PED_SPEED: [f64; 2] = [0.5, 2.0];
const PED_JITTER: f64 = 2.0 * DEG;
const PED_AHEAD: [f64; 2] = [5.0, 40.0];
const PED_SIDEWALK: [f64; 2] = [8.0, 10.0];
const PED_CROSS_X: [f64; 2] = [15.0, 40.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Approach,
    Merge,
    Hold,
}

/// Phase taken at each step `1..NUM_POINT` of a cut-in, and the step at which
/// the agent first reached or crossed the target lane line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutInTrace {
    pub phases: Vec<Phase>,
    pub flag_flip: Option<usize>,
    /// +1 when the agent starts left of the target lane, −1 when right.
    pub start_side: f64,
}

struct StepRule {
    reference: f64,
    yaw_delta: [f64; 2],
    /// Bounds on the yaw relative to `reference`.
    yaw_clamp: [f64; 2],
    speed_delta: [f64; 2],
    speed_clamp: [f64; 2],
    avoid: bool,
}

/// Position at step `t` and the heading and speed that brought it there.
struct State {
    t: usize,
    time: f64,
    pos: Vec2,
    yaw: f64,
    speed: f64,
}

struct Init {
    pos: Vec2,
    yaw: f64,
    speed: f64,
}

struct Agent<'a> {
    id: &'a str,
    category: Category,
    maneuver: &'a str,
}

#[allow(clippy::too_many_arguments)]
fn integrate<R: Rng>(
    params: &KernelParams,
    agent: Agent<'_>,
    init: Init,
    others: &[&Trajectory],
    safe_dis: f64,
    rng: &mut R,
    mut rule: impl FnMut(&State) -> StepRule,
) -> Trajectory {
    let n = params.num_point;
    let dt = params.t_inter;
    let mut points = Vec::with_capacity(n);
    let mut speeds = Vec::with_capacity(n);
    points.push([init.pos[0], init.pos[1], init.yaw, 0.0]);
    speeds.push(init.speed);
    let (mut pos, mut yaw, mut speed) = (init.pos, init.yaw, init.speed);
    for t in 1..n {
        pos = [pos[0] + speed * dt * yaw.cos(), pos[1] + speed * dt * yaw.sin()];
        let state = State { t, time: t as f64 * dt, pos, yaw, speed };
        let r = rule(&state);
        let range = if r.avoid { update_yaw(yaw, safe_dis, pos, others, t, r.yaw_delta) } else { r.yaw_delta };
        let u_yaw: f64 = rng.random();
        let rel = wrap_angle(yaw - r.reference) + rand_in(u_yaw, range);
        yaw = r.reference + clip(rel, r.yaw_clamp[0], r.yaw_clamp[1]);
        let u_speed: f64 = rng.random();
        speed = clip(speed + rand_in(u_speed, r.speed_delta), r.speed_clamp[0], r.speed_clamp[1]);
        points.push([pos[0], pos[1], yaw, state.time]);
        speeds.push(speed);
    }
    Trajectory {
        agent_id: agent.id.to_string(),
        category: agent.category,
        maneuver: agent.maneuver.to_string(),
        points,
        speeds,
    }
}

fn lateral(p: Vec2, origin: Vec2, yaw: f64) -> f64 {
    dot(sub(p, origin), left_normal(yaw))
}

fn longitudinal(p: Vec2, origin: Vec2, yaw: f64) -> f64 {
    dot(sub(p, origin), heading_vec(yaw))
}

fn displaced(origin: Vec2, yaw: f64, ahead: f64, left: f64) -> Vec2 {
    let (t, n) = (heading_vec(yaw), left_normal(yaw));
    [origin[0] + ahead * t[0] + left * n[0], origin[1] + ahead * t[1] + left * n[1]]
}

/// Lane hold: small steps toward an aim that is zero without a reference
/// line, or proportional to the lateral error against it.
fn hold(rel: f64, error: Option<f64>) -> ([f64; 2], [f64; 2]) {
    let aim = error.map_or(0.0, |e| (-HOLD_GAIN * e).clamp(-HOLD_CLAMP, HOLD_CLAMP));
    let delta = if rel >= aim { [-HOLD_STEP, 0.0] } else { [0.0, HOLD_STEP] };
    (delta, [-HOLD_CLAMP, HOLD_CLAMP])
}

/// Three-phase lateral controller toward a reference line. `e` is the signed
/// lateral error (left positive) and `rel` the yaw relative to the line.
struct Merge {
    side: f64,
    margin: f64,
    active: bool,
    prev_e: f64,
    flipped_at: Option<usize>,
}

impl Merge {
    fn new(e0: f64) -> Self {
        Self { side: if e0 >= 0.0 { 1.0 } else { -1.0 }, margin: e0.abs(), active: true, prev_e: e0, flipped_at: None }
    }

    fn step(&mut self, t: usize, e: f64, rel: f64) -> (Phase, [f64; 2], [f64; 2]) {
        if self.active && self.prev_e * e <= 0.0 {
            self.active = false;
            self.flipped_at = Some(t);
        }
        self.prev_e = e;
        let left = self.side > 0.0;
        if self.active && e.abs() > self.margin / 2.0 {
            let (delta, clamp) = if left {
                ([-APPROACH_STEP, 0.0], [-APPROACH_CLAMP, 0.0])
            } else {
                ([0.0, APPROACH_STEP], [0.0, APPROACH_CLAMP])
            };
            (Phase::Approach, delta, clamp)
        } else if self.active && e.abs() > MERGE_DONE {
            let (delta, clamp) = if left {
                ([0.0, APPROACH_STEP], [-MERGE_CLAMP[1], -MERGE_CLAMP[0]])
            } else {
                ([-APPROACH_STEP, 0.0], MERGE_CLAMP)
            };
            (Phase::Merge, delta, clamp)
        } else {
            let (delta, clamp) = hold(rel, Some(e));
            (Phase::Hold, delta, clamp)
        }
    }
}

fn cruise(v0: f64) -> ([f64; 2], [f64; 2]) {
    (CRUISE_DELTA, [(v0 - CRUISE_BAND).max(0.0), v0 + CRUISE_BAND])
}

/// Straight lane along `+x` at the slowest configured speed, used when a
/// cut-in has no target.
fn reference_lane(params: &KernelParams) -> Trajectory {
    let v = params.v_range[0];
    Trajectory {
        agent_id: String::new(),
        category: Category::Vehicle,
        maneuver: "forward".into(),
        points: (0..params.num_point)
            .map(|k| {
                let t = k as f64 * params.t_inter;
                [v * t, 0.0, 0.0, t]
            })
            .collect(),
        speeds: vec![v; params.num_point],
    }
}

fn pose(traj: &Trajectory, t: usize) -> (Vec2, f64, f64) {
    let k = t.min(traj.len() - 1);
    (traj.position(k), traj.yaw(k), traj.speeds[k])
}

pub(super) fn cut_in<R: Rng>(
    params: &KernelParams,
    id: &str,
    target: Option<&Trajectory>,
    others: &[&Trajectory],
    safe_dis: f64,
    rng: &mut R,
) -> (Trajectory, CutInTrace) {
    let fallback;
    let target = match target {
        Some(t) => t,
        None => {
            fallback = reference_lane(params);
            &fallback
        }
    };
    let u: [f64; 5] = std::array::from_fn(|_| rng.random());
    let (tp, tyaw, tv) = pose(target, 0);
    let side = if u[2] < 0.5 { 1.0 } else { -1.0 };
    let lat0 = side * rand_in(u[1], params.y_range);
    let pos = displaced(tp, tyaw, rand_in(u[0], CUT_IN_AHEAD), lat0);
    let vmax = params.v_range[1];
    let speed = clip(rand_in(u[3], params.v_range), tv + CUT_IN_LEAD, vmax.max(tv) + CUT_IN_LEAD);
    let yaw = tyaw + rand_in(u[4], params.forward_range);

    let mut merge = Merge::new(lateral(pos, tp, tyaw));
    let mut phases = Vec::with_capacity(params.num_point);
    let traj = integrate(
        params,
        Agent { id, category: Category::Vehicle, maneuver: "cut_in" },
        Init { pos, yaw, speed },
        others,
        safe_dis,
        rng,
        |s| {
            // lane direction is fixed at the target's initial heading so that
            // heading noise on the target does not swing a distant reference
            let (tp, _, tv) = pose(target, s.t);
            let (phase, yaw_delta, yaw_clamp) = merge.step(s.t, lateral(s.pos, tp, tyaw), wrap_angle(s.yaw - tyaw));
            phases.push(phase);
            StepRule {
                reference: tyaw,
                yaw_delta,
                yaw_clamp,
                speed_delta: CUT_IN_SPEED_DELTA,
                speed_clamp: [tv + CUT_IN_LEAD, vmax.max(tv) + CUT_IN_LEAD],
                avoid: true,
            }
        },
    );
    let trace = CutInTrace { phases, flag_flip: merge.flipped_at, start_side: side };
    (traj, trace)
}

/// Numeric parameter with the registry default applied.
fn number(call: &ManeuverCall, name: &str) -> Option<f64> {
    call.number(name).or_else(|| match call.spec()?.param(name)?.default {
        ParamDefault::Number(v) => Some(v),
        _ => None,
    })
}

fn choice_sign(call: &ManeuverCall, name: &str) -> f64 {
    let value = call.ident(name).or_else(|| match call.spec()?.param(name)?.default {
        ParamDefault::Ident(d) => Some(d),
        _ => None,
    });
    if value == Some("right") {
        -1.0
    } else {
        1.0
    }
}

/// Start pose and speed of a self-referenced vehicle. Ego defaults to the
/// origin; other vehicles to an adjacent lane ahead.
fn vehicle_init<R: Rng>(call: &ManeuverCall, params: &KernelParams, is_ego: bool, rng: &mut R) -> Init {
    let u: [f64; 3] = std::array::from_fn(|_| rng.random());
    let pos = call.point("start").unwrap_or(if is_ego {
        [0.0, 0.0]
    } else {
        [rand_in(u[0], DEFAULT_AHEAD), if u[1] < 0.5 { LANE_WIDTH } else { -LANE_WIDTH }]
    });
    let yaw = number(call, "heading").unwrap_or(0.0);
    let speed = number(call, "speed").unwrap_or_else(|| rand_in(u[2], params.v_range));
    Init { pos, yaw, speed }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn generate<R: Rng>(
    id: &str,
    category: Category,
    function: &str,
    call: &ManeuverCall,
    params: &KernelParams,
    target: Option<&Trajectory>,
    context: &[Trajectory],
    rng: &mut R,
) -> Result<Trajectory, KernelError> {
    let others: Vec<&Trajectory> = context.iter().filter(|t| t.agent_id != id).collect();
    let target_id = target.map(|t| t.agent_id.as_str());
    let non_target: Vec<&Trajectory> = others.iter().copied().filter(|t| Some(t.agent_id.as_str()) != target_id).collect();
    let agent = Agent { id, category, maneuver: function };
    let is_ego = id == EGO_ID;
    let safe_dis = params.safe_dis;
    let need_target = || {
        target.ok_or_else(|| KernelError::MissingTarget { agent: id.to_string(), target: "<none>".into() })
    };

    let traj = match function {
        "forward" => {
            let init = vehicle_init(call, params, is_ego, rng);
            lane_keep(params, agent, init, &others, rng)
        }
        "accelerate" | "brake" | "stop" => {
            let init = vehicle_init(call, params, is_ego, rng);
            let (target_speed, rate) = match function {
                "accelerate" => (
                    number(call, "target_speed").unwrap_or(params.v_range[1]).min(params.v_range[1]),
                    number(call, "accel").unwrap_or(2.5),
                ),
                "brake" => (number(call, "target_speed").unwrap_or(params.v_range[0]), number(call, "decel").unwrap_or(2.5)),
                _ => (0.0, number(call, "decel").unwrap_or(2.5)),
            };
            let at = number(call, "at").unwrap_or(1.0);
            ramp(params, agent, init, target_speed, rate, at, &others, rng)
        }
        "steer_left" | "steer_right" | "u_turn" => {
            let init = vehicle_init(call, params, is_ego, rng);
            let (dir, angle) = match function {
                "steer_left" => (1.0, number(call, "angle").unwrap_or(PI / 2.0)),
                "steer_right" => (-1.0, number(call, "angle").unwrap_or(PI / 2.0)),
                _ => (choice_sign(call, "direction"), PI),
            };
            let radius = number(call, "radius").unwrap_or(6.0);
            let at = number(call, "at").unwrap_or(1.0);
            turn(params, agent, init, dir, angle, radius, at, &others, rng)
        }
        "lane_change_left" | "lane_change_right" => {
            let init = vehicle_init(call, params, is_ego, rng);
            let dir = if function == "lane_change_left" { 1.0 } else { -1.0 };
            let offset = number(call, "offset").unwrap_or(LANE_WIDTH);
            let at = number(call, "at").unwrap_or(1.0);
            lane_change(params, agent, init, dir * offset, at, &others, rng)
        }
        "cut_in" => {
            let safe = number(call, "safe_dis").unwrap_or(safe_dis);
            let (mut traj, _) = cut_in(params, id, target, &others, safe, rng);
            traj.category = category;
            traj
        }
        "overtake" => {
            let target = need_target()?;
            let side = choice_sign(call, "side");
            let gap = number(call, "gap").unwrap_or(12.0);
            let offset = number(call, "offset").unwrap_or(LANE_WIDTH);
            overtake(params, agent, target, side * offset, gap, &non_target, rng)
        }
        "follow" => {
            let target = need_target()?;
            let time_gap = number(call, "time_gap").unwrap_or(1.5);
            let standstill = number(call, "standstill").unwrap_or(5.0);
            follow(params, agent, target, time_gap, standstill, &non_target, rng)
        }
        "pedestrian_walk" => {
            let u: [f64; 4] = std::array::from_fn(|_| rng.random());
            let pos = call.point("start").unwrap_or_else(|| {
                let side = if u[1] < 0.5 { 1.0 } else { -1.0 };
                [rand_in(u[0], PED_AHEAD), side * rand_in(u[2], PED_SIDEWALK)]
            });
            let heading = number(call, "heading").unwrap_or(0.0);
            let speed = number(call, "speed").unwrap_or_else(|| rand_in(u[3], PED_SPEED));
            walk(params, agent, Init { pos, yaw: heading, speed }, rng)
        }
        "pedestrian_cross" => {
            let u: [f64; 2] = std::array::from_fn(|_| rng.random());
            let dir = choice_sign(call, "direction");
            let x = number(call, "x").unwrap_or_else(|| rand_in(u[0], PED_CROSS_X));
            let offset = number(call, "offset").unwrap_or(8.0);
            let speed = number(call, "speed").unwrap_or_else(|| rand_in(u[1], PED_SPEED));
            walk(params, agent, Init { pos: [x, -dir * offset], yaw: dir * PI / 2.0, speed }, rng)
        }
        other => return Err(KernelError::UnknownFunction(other.to_string())),
    };
    Ok(traj)
}

fn lane_keep<R: Rng>(params: &KernelParams, agent: Agent<'_>, init: Init, others: &[&Trajectory], rng: &mut R) -> Trajectory {
    let (origin, heading) = (init.pos, init.yaw);
    let (speed_delta, speed_clamp) = cruise(init.speed);
    integrate(params, agent, init, others, params.safe_dis, rng, |s| {
        let (yaw_delta, yaw_clamp) = hold(wrap_angle(s.yaw - heading), Some(lateral(s.pos, origin, heading)));
        StepRule { reference: heading, yaw_delta, yaw_clamp, speed_delta, speed_clamp, avoid: true }
    })
}

/// Linear speed ramp from the initial speed toward `target_speed` starting
/// at time `at`, with a small jitter that vanishes at standstill.
#[allow(clippy::too_many_arguments)]
fn ramp<R: Rng>(
    params: &KernelParams,
    agent: Agent<'_>,
    init: Init,
    target_speed: f64,
    rate: f64,
    at: f64,
    others: &[&Trajectory],
    rng: &mut R,
) -> Trajectory {
    let (origin, heading, v0) = (init.pos, init.yaw, init.speed);
    integrate(params, agent, init, others, params.safe_dis, rng, |s| {
        let elapsed = (s.time - at).max(0.0);
        let nominal = if target_speed >= v0 {
            (v0 + rate * elapsed).min(target_speed)
        } else {
            (v0 - rate * elapsed).max(target_speed)
        };
        let j = if nominal > 0.0 { RAMP_JITTER } else { 0.0 };
        let (yaw_delta, yaw_clamp) = hold(wrap_angle(s.yaw - heading), Some(lateral(s.pos, origin, heading)));
        StepRule {
            reference: heading,
            yaw_delta,
            yaw_clamp,
            speed_delta: [nominal - s.speed - j, nominal - s.speed + j],
            speed_clamp: [(nominal - j).max(0.0), nominal + j],
            avoid: s.speed > 0.0,
        }
    })
}

/// Constant-radius turn through `angle` (left for `dir = +1`) starting at
/// time `at`, then straight on at the exit heading.
#[allow(clippy::too_many_arguments)]
fn turn<R: Rng>(
    params: &KernelParams,
    agent: Agent<'_>,
    init: Init,
    dir: f64,
    angle: f64,
    radius: f64,
    at: f64,
    others: &[&Trajectory],
    rng: &mut R,
) -> Trajectory {
    #[derive(PartialEq)]
    enum Stage {
        Before,
        Turning,
        After,
    }
    let (origin, heading) = (init.pos, init.yaw);
    let mid = heading + dir * angle / 2.0;
    let exit = heading + dir * angle;
    let (speed_delta, speed_clamp) = cruise(init.speed);
    let mut stage = Stage::Before;
    integrate(params, agent, init, others, params.safe_dis, rng, |s| {
        if stage == Stage::Before && s.time >= at {
            stage = Stage::Turning;
        }
        if stage == Stage::Turning && dir * wrap_angle(s.yaw - mid) >= angle / 2.0 - 1e-12 {
            stage = Stage::After;
        }
        let (reference, yaw_delta, yaw_clamp, avoid) = match stage {
            Stage::Before => {
                let (d, c) = hold(wrap_angle(s.yaw - heading), Some(lateral(s.pos, origin, heading)));
                (heading, d, c, true)
            }
            Stage::Turning => {
                let w = dir * s.speed * params.t_inter / radius;
                (mid, [w, w], [-angle / 2.0, angle / 2.0], false)
            }
            Stage::After => {
                let (d, c) = hold(wrap_angle(s.yaw - exit), None);
                (exit, d, c, true)
            }
        };
        StepRule { reference, yaw_delta, yaw_clamp, speed_delta, speed_clamp, avoid }
    })
}

/// Lane hold until `at`, then the merge controller toward the line `shift`
/// metres to the left of the start lane.
#[allow(clippy::too_many_arguments)]
fn lane_change<R: Rng>(
    params: &KernelParams,
    agent: Agent<'_>,
    init: Init,
    shift: f64,
    at: f64,
    others: &[&Trajectory],
    rng: &mut R,
) -> Trajectory {
    let (origin, heading) = (init.pos, init.yaw);
    let (speed_delta, speed_clamp) = cruise(init.speed);
    let mut merge: Option<Merge> = None;
    integrate(params, agent, init, others, params.safe_dis, rng, |s| {
        let rel = wrap_angle(s.yaw - heading);
        let e = lateral(s.pos, origin, heading);
        let (yaw_delta, yaw_clamp) = if s.time < at {
            hold(rel, Some(e))
        } else {
            let m = merge.get_or_insert_with(|| Merge::new(e - shift));
            let (_, d, c) = m.step(s.t, e - shift, rel);
            (d, c)
        };
        StepRule { reference: heading, yaw_delta, yaw_clamp, speed_delta, speed_clamp, avoid: true }
    })
}

/// Pull out by `shift` from the target lane, pass at the top of the speed
/// range for at least three seconds until well ahead, then return.
fn overtake<R: Rng>(
    params: &KernelParams,
    agent: Agent<'_>,
    target: &Trajectory,
    shift: f64,
    gap: f64,
    others: &[&Trajectory],
    rng: &mut R,
) -> Trajectory {
    enum Stage {
        Out(Merge),
        Pass(f64),
        Back(Merge),
        Done,
    }
    let (tp, tyaw, tv) = pose(target, 0);
    let init = Init { pos: displaced(tp, tyaw, -gap, 0.0), yaw: tyaw, speed: tv };
    let vmax = params.v_range[1];
    let mut stage = Stage::Out(Merge::new(-shift));
    integrate(params, agent, init, others, params.safe_dis, rng, |s| {
        let (tp, tyaw, tv) = pose(target, s.t);
        let e = lateral(s.pos, tp, tyaw);
        let rel = wrap_angle(s.yaw - tyaw);
        let lead = longitudinal(s.pos, tp, tyaw);
        let (yaw_delta, yaw_clamp) = loop {
            match &mut stage {
                Stage::Out(m) => {
                    let (phase, d, c) = m.step(s.t, e - shift, rel);
                    if phase == Phase::Hold {
                        stage = Stage::Pass(s.time);
                    }
                    break (d, c);
                }
                Stage::Pass(since) => {
                    if s.time - *since >= OVERTAKE_HOLD && lead >= OVERTAKE_LEAD {
                        stage = Stage::Back(Merge::new(e));
                        continue;
                    }
                    break hold(rel, Some(e - shift));
                }
                Stage::Back(m) => {
                    let (phase, d, c) = m.step(s.t, e, rel);
                    if phase == Phase::Hold {
                        stage = Stage::Done;
                    }
                    break (d, c);
                }
                Stage::Done => break hold(rel, Some(e)),
            }
        };
        let (speed_delta, speed_clamp) = match stage {
            Stage::Out(_) | Stage::Pass(_) => (OVERTAKE_DELTA, [s.speed.min(vmax - 1.0), vmax.max(tv)]),
            Stage::Back(_) | Stage::Done => (CRUISE_DELTA, [tv + CRUISE_BAND, vmax.max(tv + CRUISE_BAND)]),
        };
        StepRule { reference: tyaw, yaw_delta, yaw_clamp, speed_delta, speed_clamp, avoid: true }
    })
}

/// Constant time-gap spacing behind the target in its lane.
fn follow<R: Rng>(
    params: &KernelParams,
    agent: Agent<'_>,
    target: &Trajectory,
    time_gap: f64,
    standstill: f64,
    others: &[&Trajectory],
    rng: &mut R,
) -> Trajectory {
    let (tp, tyaw, tv) = pose(target, 0);
    let init = Init { pos: displaced(tp, tyaw, -(standstill + time_gap * tv), 0.0), yaw: tyaw, speed: tv };
    let vmax = params.v_range[1];
    integrate(params, agent, init, others, params.safe_dis, rng, |s| {
        let (tp, tyaw, tv) = pose(target, s.t);
        let gap = -longitudinal(s.pos, tp, tyaw);
        let desired = tv + FOLLOW_GAIN * (gap - (standstill + time_gap * tv));
        let (yaw_delta, yaw_clamp) = hold(wrap_angle(s.yaw - tyaw), Some(lateral(s.pos, tp, tyaw)));
        StepRule {
            reference: tyaw,
            yaw_delta,
            yaw_clamp,
            speed_delta: [desired - s.speed - RAMP_JITTER, desired - s.speed + RAMP_JITTER],
            speed_clamp: [0.0, vmax.max(tv)],
            avoid: true,
        }
    })
}

/// Straight walk with independent ±2° heading jitter each step.
fn walk<R: Rng>(params: &KernelParams, agent: Agent<'_>, init: Init, rng: &mut R) -> Trajectory {
    let heading = init.yaw;
    integrate(params, agent, init, &[], params.safe_dis, rng, |s| {
        let rel = wrap_angle(s.yaw - heading);
        StepRule {
            reference: heading,
            yaw_delta: [-PED_JITTER - rel, PED_JITTER - rel],
            yaw_clamp: [-PED_JITTER, PED_JITTER],
            speed_delta: CRUISE_DELTA,
            speed_clamp: PED_SPEED,
            avoid: false,
        }
    })
}
