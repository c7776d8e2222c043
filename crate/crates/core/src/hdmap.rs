//! Rule-based vector HD map fitted around generated trajectories.
//!
//! Every line is an offset curve of one centerline (the smoothed ego path,
//! extended along its end headings). Offsets are stored per centerline vertex
//! so ordering constraints can be checked station by station. Where the
//! centerline curves back on itself the offsets on that side are scaled down
//! until each offset point still projects onto its own station, which keeps
//! the corridor from folding over.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsl::Category;
use crate::geom::{self, Polyline, Vec2};
use crate::kernel::{rand_in, Trajectory};

/// Heading change that marks a junction, and the window it must happen in.
pub const JUNCTION_TURN: f64 = 30.0 * PI / 180.0;
pub const JUNCTION_WINDOW_S: f64 = 2.0;
/// Centerline crossings by pedestrians count only this close to the road.
pub const CROSSING_REACH: f64 = 10.0;
/// Crossings must lie within this distance of a junction.
pub const JUNCTION_RADIUS: f64 = 15.0;

const STATION_SPACING: f64 = 1.0;
const SMOOTH_HALF_WINDOW: usize = 3;
const MIN_EXTENSION: f64 = 60.0;
const EXTENSION_MARGIN: f64 = 10.0;
const WIDTH_JITTER: f64 = 0.2;
const MAX_WAVINESS: f64 = 0.3;
const WAVE_LENGTH: [f64; 2] = [20.0, 60.0];
const VEHICLE_MARGIN: f64 = 0.5;
const CROSSING_HALF_LENGTH: f64 = 2.0;
const CROSSING_INSET: f64 = 1.0;
/// Projection may land this far from the station it was offset from.
const PROJECTION_WINDOW: f64 = 1.5;
const MIN_SCALE: f64 = 0.05;
const SCALE_ERODE: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub lane_width: f64,
    pub lanes_per_side: usize,
    /// Width jitter and boundary waviness; off gives the exact nominal layout.
    pub jitter: bool,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self { lane_width: 3.5, lanes_per_side: 2, jitter: true }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HdMapError {
    #[error("no ego trajectory among the inputs")]
    MissingEgo,
    #[error("invalid map parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapClass {
    Boundary,
    Divider,
    Crossing,
}

/// An offset curve of the centerline. `offsets[i]` is the signed lateral
/// offset (left positive) at centerline vertex `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapLine {
    pub class: MapClass,
    pub points: Vec<Vec2>,
    pub offsets: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JunctionKind {
    Turn,
    PedestrianCrossing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Junction {
    pub kind: JunctionKind,
    pub position: Vec2,
    pub station: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdMap {
    /// Effective lane width after jitter.
    pub lane_width: f64,
    pub centerline: Vec<Vec2>,
    pub boundaries: Vec<MapLine>,
    pub dividers: Vec<MapLine>,
    /// Closed polygons (first point repeated at the end).
    pub crossings: Vec<Vec<Vec2>>,
    pub junctions: Vec<Junction>,
}

impl HdMap {
    pub fn centerline_polyline(&self) -> Polyline {
        Polyline::new(&self.centerline)
    }

    /// Boundary and divider polylines tagged by class, then crossings.
    pub fn polylines(&self) -> impl Iterator<Item = (MapClass, &[Vec2])> {
        self.boundaries
            .iter()
            .chain(&self.dividers)
            .map(|l| (l.class, l.points.as_slice()))
            .chain(self.crossings.iter().map(|c| (MapClass::Crossing, c.as_slice())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// (a) a vehicle waypoint lies outside the boundary corridor.
    OutsideCorridor { agent: String, step: usize, offset: f64, limit: f64 },
    /// (b) a boundary does not strictly dominate a divider at a station.
    DividerNotDominated { station: usize, divider: usize, boundary: f64, offset: f64 },
    /// (b) a divider polyline touches a boundary polyline.
    DividerCrossesBoundary { divider: usize, boundary: usize },
    /// (c) a crossing that is not at a junction.
    CrossingAwayFromJunction { crossing: usize, distance: f64 },
}

fn ego(trajectories: &[Trajectory]) -> Option<&Trajectory> {
    trajectories.iter().find(|t| t.is_ego())
}

fn resample_points(points: &[Vec2], spacing: f64) -> Vec<Vec2> {
    let mut dedup: Vec<Vec2> = Vec::new();
    for &p in points {
        if dedup.last().is_none_or(|&q| geom::dist(p, q) > 1e-9) {
            dedup.push(p);
        }
    }
    if dedup.len() < 2 {
        return dedup;
    }
    Polyline::new(&dedup).resample(spacing)
}

fn smooth(points: &[Vec2]) -> Vec<Vec2> {
    let n = points.len();
    (0..n)
        .map(|i| {
            let h = SMOOTH_HALF_WINDOW.min(i).min(n - 1 - i);
            let window = &points[i - h..=i + h];
            let k = window.len() as f64;
            [window.iter().map(|p| p[0]).sum::<f64>() / k, window.iter().map(|p| p[1]).sum::<f64>() / k]
        })
        .collect()
}

/// Smoothed ego path extended along its end headings far enough that every
/// vehicle waypoint projects inside it.
fn build_centerline(ego: &Trajectory, vehicles: &[&Trajectory]) -> Polyline {
    let path: Vec<Vec2> = (0..ego.len()).map(|k| ego.position(k)).collect();
    let core = smooth(&resample_points(&path, STATION_SPACING));
    let (start, end) = (core[0], *core.last().unwrap());
    let (start_dir, end_dir) = if core.len() >= 2 {
        let a = geom::sub(core[1], core[0]);
        let b = geom::sub(core[core.len() - 1], core[core.len() - 2]);
        let (la, lb) = (geom::dot(a, a).sqrt(), geom::dot(b, b).sqrt());
        ([a[0] / la, a[1] / la], [b[0] / lb, b[1] / lb])
    } else {
        (geom::heading_vec(ego.yaw(0)), geom::heading_vec(ego.yaw(ego.len() - 1)))
    };
    let mut back = MIN_EXTENSION;
    let mut fwd = MIN_EXTENSION;
    for v in vehicles {
        for k in 0..v.len() {
            let p = v.position(k);
            back = back.max(-geom::dot(geom::sub(p, start), start_dir) + EXTENSION_MARGIN);
            fwd = fwd.max(geom::dot(geom::sub(p, end), end_dir) + EXTENSION_MARGIN);
        }
    }
    let mut pts = Vec::new();
    let nb = (back / STATION_SPACING).ceil() as usize;
    for k in (1..=nb).rev() {
        let d = k as f64 * STATION_SPACING;
        pts.push([start[0] - start_dir[0] * d, start[1] - start_dir[1] * d]);
    }
    pts.extend_from_slice(&core);
    let nf = (fwd / STATION_SPACING).ceil() as usize;
    for k in 1..=nf {
        let d = k as f64 * STATION_SPACING;
        pts.push([end[0] + end_dir[0] * d, end[1] + end_dir[1] * d]);
    }
    Polyline::new(&resample_points(&pts, STATION_SPACING))
}

/// Station of each centerline vertex.
fn vertex_stations(line: &Polyline) -> Vec<f64> {
    let pts = line.points();
    let mut s = vec![0.0; pts.len()];
    for i in 1..pts.len() {
        s[i] = s[i - 1] + geom::dist(pts[i - 1], pts[i]);
    }
    s
}

fn offset_at(line: &Polyline, stations: &[f64], i: usize, offset: f64) -> Vec2 {
    // vertex normal: average of the adjacent segment tangents
    let pts = line.points();
    let n = pts.len();
    let a = pts[i.saturating_sub(1)];
    let b = pts[(i + 1).min(n - 1)];
    let t = geom::sub(b, a);
    let len = geom::dot(t, t).sqrt();
    if len < 1e-12 {
        return line.offset_point(stations[i], offset);
    }
    [pts[i][0] - t[1] / len * offset, pts[i][1] + t[0] / len * offset]
}

/// Largest offset (up to `limit`) on `side` at vertex `i` whose point still
/// projects back onto that station.
fn clearance(line: &Polyline, stations: &[f64], i: usize, side: f64, limit: f64) -> f64 {
    let ok = |d: f64| (line.project(offset_at(line, stations, i, side * d)).station - stations[i]).abs() <= PROJECTION_WINDOW;
    if ok(limit) {
        return limit;
    }
    let (mut lo, mut hi) = (0.0, limit);
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn erode(values: &[f64], radius: usize) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| values[i.saturating_sub(radius)..=(i + radius).min(n - 1)].iter().copied().fold(f64::INFINITY, f64::min))
        .collect()
}

fn interpolate(stations: &[f64], values: &[f64], s: f64) -> f64 {
    match stations.binary_search_by(|x| x.partial_cmp(&s).unwrap()) {
        Ok(i) => values[i],
        Err(0) => values[0],
        Err(i) if i >= stations.len() => *values.last().unwrap(),
        Err(i) => {
            let u = (s - stations[i - 1]) / (stations[i] - stations[i - 1]);
            values[i - 1] + u * (values[i] - values[i - 1])
        }
    }
}

fn nearest_vertex(stations: &[f64], s: f64) -> usize {
    let i = stations.partition_point(|&x| x < s).min(stations.len() - 1);
    if i > 0 && s - stations[i - 1] < stations[i] - s {
        i - 1
    } else {
        i
    }
}

fn turn_junctions(ego: &Trajectory, line: &Polyline) -> Vec<Junction> {
    if ego.len() < 2 {
        return Vec::new();
    }
    let dt = ego.points[1][3] - ego.points[0][3];
    let w = ((JUNCTION_WINDOW_S / dt).round() as usize).clamp(1, ego.len() - 1);
    let hits: Vec<usize> =
        (0..ego.len() - w).filter(|&t| geom::wrap_angle(ego.yaw(t + w) - ego.yaw(t)).abs() > JUNCTION_TURN).collect();
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for t in hits {
        match runs.last_mut() {
            Some(run) if run.1 + 1 == t => run.1 = t,
            _ => runs.push((t, t)),
        }
    }
    runs.into_iter()
        .map(|(a, b)| {
            let k = ((a + b) / 2 + w / 2).min(ego.len() - 1);
            let proj = line.project(ego.position(k));
            Junction { kind: JunctionKind::Turn, position: proj.foot, station: proj.station }
        })
        .collect()
}

/// First point where a pedestrian_cross path crosses the centerline.
fn crossing_junctions(trajectories: &[Trajectory], line: &Polyline) -> Vec<Junction> {
    trajectories
        .iter()
        .filter(|t| t.category == Category::Pedestrian && t.maneuver == "pedestrian_cross")
        .filter_map(|t| {
            let proj: Vec<_> = (0..t.len()).map(|k| line.project(t.position(k))).collect();
            (0..t.len().saturating_sub(1)).find_map(|k| {
                let (a, b) = (proj[k], proj[k + 1]);
                if a.offset * b.offset > 0.0 || a.distance > CROSSING_REACH || b.distance > CROSSING_REACH {
                    return None;
                }
                let u = if a.offset == b.offset { 0.0 } else { a.offset / (a.offset - b.offset) };
                let (p, q) = (t.position(k), t.position(k + 1));
                let hit = line.project([p[0] + u * (q[0] - p[0]), p[1] + u * (q[1] - p[1])]);
                Some(Junction { kind: JunctionKind::PedestrianCrossing, position: hit.foot, station: hit.station })
            })
        })
        .collect()
}

/// Junctions implied by the trajectories against a centerline: sharp ego
/// turns and pedestrian road crossings.
pub fn detect_junctions(trajectories: &[Trajectory], centerline: &Polyline) -> Vec<Junction> {
    let mut out = ego(trajectories).map(|e| turn_junctions(e, centerline)).unwrap_or_default();
    out.extend(crossing_junctions(trajectories, centerline));
    out
}

pub fn synthesize<R: Rng>(trajectories: &[Trajectory], params: &SynthParams, rng: &mut R) -> Result<HdMap, HdMapError> {
    if !(2.0..=6.0).contains(&params.lane_width) {
        return Err(HdMapError::InvalidParams("lane_width must be within [2, 6] m".into()));
    }
    if params.lanes_per_side == 0 {
        return Err(HdMapError::InvalidParams("lanes_per_side must be at least 1".into()));
    }
    let ego = ego(trajectories).ok_or(HdMapError::MissingEgo)?;
    let vehicles: Vec<&Trajectory> = trajectories.iter().filter(|t| t.category == Category::Vehicle).collect();

    // fixed draw count keeps the stream aligned whether jitter is on or off
    let u: [f64; 7] = std::array::from_fn(|_| rng.random());
    let jitter = if params.jitter { 1.0 } else { 0.0 };
    let w = params.lane_width + jitter * rand_in(u[0], [-WIDTH_JITTER, WIDTH_JITTER]);
    let waves: [(f64, f64, f64); 2] = [0, 1].map(|k| {
        (jitter * MAX_WAVINESS * u[1 + 3 * k], rand_in(u[2 + 3 * k], WAVE_LENGTH), 2.0 * PI * u[3 + 3 * k])
    });

    let line = build_centerline(ego, &vehicles);
    let stations = vertex_stations(&line);
    let n = stations.len();
    let lps = params.lanes_per_side as f64;

    let mut boundaries = Vec::new();
    let mut dividers = Vec::new();
    for (side_idx, side) in [1.0, -1.0].into_iter().enumerate() {
        let (amp, length, phase) = waves[side_idx];
        let nominal: Vec<f64> = stations.iter().map(|s| lps * w + amp * (2.0 * PI * s / length + phase).sin()).collect();

        let mut need = vec![0.0f64; n];
        for v in &vehicles {
            for k in 0..v.len() {
                let proj = line.project(v.position(k));
                if proj.offset * side < 0.0 {
                    continue;
                }
                let i = nearest_vertex(&stations, proj.station);
                for j in i.saturating_sub(1)..=(i + 1).min(n - 1) {
                    need[j] = need[j].max(proj.distance + VEHICLE_MARGIN);
                }
            }
        }

        let scale: Vec<f64> = (0..n).map(|i| (clearance(&line, &stations, i, side, nominal[i]) / nominal[i]).max(MIN_SCALE)).collect();
        let scale = erode(&scale, SCALE_ERODE);

        let b_off: Vec<f64> = (0..n).map(|i| side * (nominal[i] * scale[i]).max(need[i])).collect();
        boundaries.push(MapLine {
            class: MapClass::Boundary,
            points: (0..n).map(|i| offset_at(&line, &stations, i, b_off[i])).collect(),
            offsets: b_off,
        });
        for k in 1..params.lanes_per_side {
            let d_off: Vec<f64> = (0..n).map(|i| side * k as f64 * w * scale[i]).collect();
            dividers.push(MapLine {
                class: MapClass::Divider,
                points: (0..n).map(|i| offset_at(&line, &stations, i, d_off[i])).collect(),
                offsets: d_off,
            });
        }
    }

    let junctions = detect_junctions(trajectories, &line);
    let crossings = junctions
        .iter()
        .map(|j| {
            let s0 = j.station - CROSSING_HALF_LENGTH;
            let s1 = j.station + CROSSING_HALF_LENGTH;
            let left = (interpolate(&stations, &boundaries[0].offsets, j.station) - CROSSING_INSET).max(CROSSING_INSET);
            let right = -(interpolate(&stations, &boundaries[1].offsets, j.station) + CROSSING_INSET).min(-CROSSING_INSET);
            let ring = vec![
                line.offset_point(s0, -right),
                line.offset_point(s1, -right),
                line.offset_point(s1, left),
                line.offset_point(s0, left),
            ];
            let mut ring = ring;
            ring.push(ring[0]);
            ring
        })
        .collect();

    Ok(HdMap { lane_width: w, centerline: line.points().to_vec(), boundaries, dividers, crossings, junctions })
}

/// Checks a map against trajectories; an empty list means the map is
/// consistent. Junctions are recomputed from the trajectories.
pub fn validate(map: &HdMap, trajectories: &[Trajectory]) -> Vec<Violation> {
    let mut out = Vec::new();
    if map.centerline.len() < 2 {
        return out;
    }
    let line = map.centerline_polyline();
    let stations = vertex_stations(&line);
    let n = stations.len();
    let side_of = |l: &MapLine| l.offsets.iter().copied().sum::<f64>().signum();
    let boundary_for = |side: f64| map.boundaries.iter().find(|b| b.offsets.len() == n && side_of(b) == side);

    // (a)
    for t in trajectories.iter().filter(|t| t.category == Category::Vehicle) {
        for k in 0..t.len() {
            let proj = line.project(t.position(k));
            let side = if proj.offset >= 0.0 { 1.0 } else { -1.0 };
            let limit = boundary_for(side).map_or(0.0, |b| interpolate(&stations, &b.offsets, proj.station).abs());
            if proj.distance > limit {
                out.push(Violation::OutsideCorridor { agent: t.agent_id.clone(), step: k, offset: proj.offset, limit });
                break;
            }
        }
    }

    // (b)
    for (di, d) in map.dividers.iter().enumerate() {
        if d.offsets.len() == n {
            let side = side_of(d);
            if let Some(b) = boundary_for(side) {
                if let Some(i) = (0..n).find(|&i| b.offsets[i].abs() <= d.offsets[i].abs() || d.offsets[i] * side < 0.0) {
                    out.push(Violation::DividerNotDominated { station: i, divider: di, boundary: b.offsets[i], offset: d.offsets[i] });
                }
            }
        }
        for (bi, b) in map.boundaries.iter().enumerate() {
            if geom::polylines_intersect(&d.points, &b.points) {
                out.push(Violation::DividerCrossesBoundary { divider: di, boundary: bi });
            }
        }
    }

    // (c)
    let junctions = detect_junctions(trajectories, &line);
    for (ci, c) in map.crossings.iter().enumerate() {
        let centroid = geom::polygon_centroid(c);
        let distance = junctions.iter().map(|j| geom::dist(j.position, centroid)).fold(f64::INFINITY, f64::min);
        if distance > JUNCTION_RADIUS {
            out.push(Violation::CrossingAwayFromJunction { crossing: ci, distance });
        }
    }
    out
}
