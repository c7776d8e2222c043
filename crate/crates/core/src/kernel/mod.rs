//! Seeded waypoint generation for every agent of a scenario.
//!
//! All maneuvers share one integrator. At each step the position advances by
//! an explicit Euler step with the previous heading and speed, then the
//! maneuver's policy picks a yaw perturbation range, a yaw clamp, a speed
//! perturbation range and a speed clamp. The cut-in policy is the
//! reference algorithm; the other maneuvers are reconstructions built from
//! the same pieces (see [`policy`]).

mod policy;

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsl::{Category, ManeuverCall, ScenarioSpec, EGO_ID};
use crate::geom::{self, Vec2};
use crate::seed;

pub use policy::{CutInTrace, Phase};

/// Minimum center distance between any two agents at any step.
pub const MIN_SEPARATION: f64 = 2.0;
/// Re-samples allowed per agent before a scene is rejected.
pub const MAX_REPAIRS: u32 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelParams {
    pub num_point: usize,
    /// Seconds between waypoints.
    pub t_inter: f64,
    pub v_range: [f64; 2],
    pub y_range: [f64; 2],
    pub forward_range: [f64; 2],
    pub safe_dis: f64,
    /// Replaces the scenario seed when set.
    pub seed: Option<u64>,
}

impl Default for KernelParams {
    fn default() -> Self {
        let five_deg = 5.0 * PI / 180.0;
        Self {
            num_point: 80,
            t_inter: 0.25,
            v_range: [2.0, 15.0],
            y_range: [3.0, 4.0],
            forward_range: [-five_deg, five_deg],
            safe_dis: 10.0,
            seed: None,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<(), KernelError> {
        let bad = |msg: &str| Err(KernelError::InvalidParams(msg.to_string()));
        if self.num_point < 2 {
            return bad("num_point must be at least 2");
        }
        if !(self.t_inter > 0.0) {
            return bad("t_inter must be positive");
        }
        for (name, r) in [("v_range", self.v_range), ("y_range", self.y_range), ("forward_range", self.forward_range)] {
            if !(r[0] <= r[1]) {
                return bad(&format!("{name} is empty"));
            }
        }
        if self.v_range[0] < 0.0 {
            return bad("v_range must be non-negative");
        }
        if !(self.safe_dis > 0.0) {
            return bad("safe_dis must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KernelError {
    #[error("invalid kernel parameters: {0}")]
    InvalidParams(String),
    #[error("unknown maneuver function `{0}`")]
    UnknownFunction(String),
    #[error("agent `{agent}` references `{target}`, which has not been generated")]
    MissingTarget { agent: String, target: String },
    #[error(
        "collision repair exhausted: `{agent}` and `{other}` are {distance:.3} m apart at step {step} after {attempts} attempts"
    )]
    RepairExhausted { agent: String, other: String, step: usize, distance: f64, attempts: u32 },
}

/// Timestamped waypoints `[x, y, yaw, t]` with per-step speeds. `yaw[k]` and
/// `speeds[k]` are the heading and speed that carry waypoint `k` to `k + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub agent_id: String,
    pub category: Category,
    pub maneuver: String,
    pub points: Vec<[f64; 4]>,
    pub speeds: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn position(&self, k: usize) -> Vec2 {
        [self.points[k][0], self.points[k][1]]
    }

    pub fn yaw(&self, k: usize) -> f64 {
        self.points[k][2]
    }

    pub fn is_ego(&self) -> bool {
        self.agent_id == EGO_ID
    }

    /// Largest deviation from the Euler update rule over all steps.
    pub fn kinematic_residual(&self, t_inter: f64) -> f64 {
        self.points
            .windows(2)
            .zip(&self.speeds)
            .map(|(w, &v)| {
                let dx = w[1][0] - (w[0][0] + v * t_inter * w[0][2].cos());
                let dy = w[1][1] - (w[0][1] + v * t_inter * w[0][2].sin());
                dx.hypot(dy)
            })
            .fold(0.0, f64::max)
    }

    /// Rigid transform of the whole trajectory: rotate by `-rotation` about
    /// the origin after translating by `-origin`.
    fn reframe(&mut self, origin: Vec2, rotation: f64) {
        let (s, c) = rotation.sin_cos();
        for p in &mut self.points {
            let (dx, dy) = (p[0] - origin[0], p[1] - origin[1]);
            p[0] = c * dx + s * dy;
            p[1] = -s * dx + c * dy;
            p[2] -= rotation;
        }
    }
}

/// Maps a uniform sample in `[0, 1]` onto `[a, b]`.
pub fn rand_in(u: f64, range: [f64; 2]) -> f64 {
    range[0] + u * (range[1] - range[0])
}

/// numpy-style clip: the upper bound wins when the bounds cross.
pub(crate) fn clip(v: f64, lo: f64, hi: f64) -> f64 {
    v.max(lo).min(hi)
}

/// Minimum step applied when steering away from an intruder.
pub const AVOID_STEP: f64 = 0.05;

/// Collision-avoidance bias on a yaw perturbation range.
///
/// Looks at the other agents at `step` that are within `safe_dis` and in the
/// forward half-plane of `yaw`. If there is one, the nearest (lowest index on
/// ties) decides the result: a range of the default width (at least
/// [`AVOID_STEP`]) on the side away from it. A bearing of exactly zero steers
/// right. Otherwise `default` comes back unchanged.
pub fn update_yaw(
    yaw: f64,
    safe_dis: f64,
    position: Vec2,
    others: &[&Trajectory],
    step: usize,
    default: [f64; 2],
) -> [f64; 2] {
    let mut nearest: Option<(f64, f64)> = None;
    for other in others {
        if step >= other.len() {
            continue;
        }
        let q = other.position(step);
        let d = geom::dist(position, q);
        if d > safe_dis {
            continue;
        }
        let bearing = geom::wrap_angle((q[1] - position[1]).atan2(q[0] - position[0]) - yaw);
        if bearing.abs() > PI / 2.0 {
            continue;
        }
        if nearest.is_none_or(|(best, _)| d < best) {
            nearest = Some((d, bearing));
        }
    }
    match nearest {
        None => default,
        Some((_, bearing)) => {
            let w = (default[1] - default[0]).abs().max(AVOID_STEP);
            if bearing >= 0.0 {
                [-w, 0.0]
            } else {
                [0.0, w]
            }
        }
    }
}

/// Cut-in trajectory against `target` (ego-lane merge just ahead of it).
/// Without a target the lane at `y = 0` heading `+x` is used.
pub fn cut_in<R: Rng>(
    params: &KernelParams,
    id: &str,
    target: Option<&Trajectory>,
    others: &[&Trajectory],
    safe_dis: f64,
    rng: &mut R,
) -> Trajectory {
    cut_in_traced(params, id, target, others, safe_dis, rng).0
}

/// [`cut_in`] plus the phase taken at every step.
pub fn cut_in_traced<R: Rng>(
    params: &KernelParams,
    id: &str,
    target: Option<&Trajectory>,
    others: &[&Trajectory],
    safe_dis: f64,
    rng: &mut R,
) -> (Trajectory, CutInTrace) {
    policy::cut_in(params, id, target, others, safe_dis, rng)
}

/// Generates one agent's trajectory. `context` holds every trajectory
/// generated so far; targets are looked up there by id.
pub fn generate_maneuver<R: Rng>(
    id: &str,
    category: Category,
    call: &ManeuverCall,
    params: &KernelParams,
    context: &[Trajectory],
    rng: &mut R,
) -> Result<Trajectory, KernelError> {
    let spec = call.spec().ok_or_else(|| KernelError::UnknownFunction(call.function.clone()))?;
    let target = match call.target() {
        Some(t) => Some(context.iter().find(|c| c.agent_id == t).ok_or_else(|| KernelError::MissingTarget {
            agent: id.to_string(),
            target: t.to_string(),
        })?),
        None => None,
    };
    policy::generate(id, category, spec.name, call, params, target, context, rng)
}

/// First step and distance at which two trajectories come closer than
/// [`MIN_SEPARATION`].
pub fn first_conflict(a: &Trajectory, b: &Trajectory) -> Option<(usize, f64)> {
    (0..a.len().min(b.len())).find_map(|k| {
        let d = geom::dist(a.position(k), b.position(k));
        (d < MIN_SEPARATION).then_some((k, d))
    })
}

pub fn min_pairwise_distance(trajs: &[Trajectory]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in trajs.iter().enumerate() {
        for b in &trajs[i + 1..] {
            for k in 0..a.len().min(b.len()) {
                best = best.min(geom::dist(a.position(k), b.position(k)));
            }
        }
    }
    best
}

/// Targets before dependents; among ready agents, declaration order with ego
/// first.
fn generation_order(spec: &ScenarioSpec) -> Vec<(String, Category, &ManeuverCall)> {
    let mut pending: Vec<(String, Category, &ManeuverCall)> = std::iter::once((EGO_ID.to_string(), Category::Vehicle, &spec.ego))
        .chain(spec.agents.iter().map(|a| (a.id.clone(), a.category, &a.call)))
        .collect();
    let mut done: Vec<String> = Vec::new();
    let mut order = Vec::new();
    while !pending.is_empty() {
        let pos = pending
            .iter()
            .position(|(_, _, call)| call.target().is_none_or(|t| done.iter().any(|d| d == t)))
            // unresolvable references surface as MissingTarget downstream
            .unwrap_or(0);
        let item = pending.remove(pos);
        done.push(item.0.clone());
        order.push(item);
    }
    order
}

/// All trajectories of a scenario, ego first then agents in declaration
/// order, expressed in the ego frame at `t = 0`.
pub fn generate_scene(spec: &ScenarioSpec, params: &KernelParams) -> Result<Vec<Trajectory>, KernelError> {
    params.validate()?;
    let scene_seed = params.seed.unwrap_or(spec.seed);
    let mut accepted: Vec<Trajectory> = Vec::new();
    for (id, category, call) in generation_order(spec) {
        let mut last = None;
        let mut chosen = None;
        for attempt in 0..=MAX_REPAIRS {
            let mut rng = seed::stream(scene_seed, &id, attempt);
            let traj = generate_maneuver(&id, category, call, params, &accepted, &mut rng)?;
            match accepted.iter().find_map(|o| first_conflict(&traj, o).map(|(k, d)| (o.agent_id.clone(), k, d))) {
                None => {
                    chosen = Some(traj);
                    break;
                }
                Some(conflict) => last = Some(conflict),
            }
        }
        match chosen {
            Some(t) => accepted.push(t),
            None => {
                let (other, step, distance) = last.expect("a conflict was recorded");
                return Err(KernelError::RepairExhausted { agent: id, other, step, distance, attempts: MAX_REPAIRS + 1 });
            }
        }
    }

    let ego_idx = accepted.iter().position(|t| t.is_ego()).expect("ego generated");
    let ego0 = accepted[ego_idx].points[0];
    if ego0[0] != 0.0 || ego0[1] != 0.0 || ego0[2] != 0.0 {
        for t in &mut accepted {
            t.reframe([ego0[0], ego0[1]], ego0[2]);
        }
    }

    let mut out = Vec::with_capacity(accepted.len());
    out.push(accepted.swap_remove(ego_idx));
    for a in &spec.agents {
        let i = accepted.iter().position(|t| t.agent_id == a.id).expect("agent generated");
        out.push(accepted.swap_remove(i));
    }
    Ok(out)
}
