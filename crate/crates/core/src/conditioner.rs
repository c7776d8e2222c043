//! Multi-view structured conditions: 3D boxes from trajectories, per-view
//! projections of boxes and map lines, the unified side-by-side layout and
//! the task masks that select what is observed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bev::{Rgb, BOUNDARY_COLOR, CROSSING_COLOR, DIVIDER_COLOR, PEDESTRIAN_COLOR, VEHICLE_COLOR};
use crate::dsl::{Category, ScenarioSpec};
use crate::geom::{convex_hull, Vec2};
use crate::hdmap::{HdMap, MapClass};
use crate::io::{self, IoError};
use crate::kernel::Trajectory;
use crate::post::{densify, project_to_view, CameraRig, CameraView, ProjectedPolyline, RigError, DENSIFY_SPACING, VIEW_ORDER};

/// Video frame rate of a clip.
pub const FRAME_RATE_HZ: f64 = 4.0;
pub const DEFAULT_FRAMES: usize = 8;

#[derive(Debug, Error)]
pub enum CondError {
    #[error("no size-table entry for category {0:?}")]
    UnknownCategory(String),
    #[error("size for {category:?} must be strictly positive, got {size:?}")]
    InvalidSize { category: String, size: [f64; 3] },
    #[error("frame index {index} is outside the {len}-point trajectory")]
    FrameOutOfRange { index: usize, len: usize },
    #[error("no ego trajectory")]
    MissingEgo,
    #[error("view {0} is missing")]
    MissingView(String),
    #[error("views must be given in the order {VIEW_ORDER:?}, got {0:?}")]
    ViewOrder(Vec<String>),
    #[error("view {view} is {got:?} (frames, height, width), expected {expected:?}")]
    DimensionMismatch { view: String, got: [usize; 3], expected: [usize; 3] },
    #[error("clip needs at least one frame")]
    NoFrames,
    #[error("corrupt bundle: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Rig(#[from] RigError),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Box dimensions `(length, width, height)` in meters keyed by category name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeTable(pub BTreeMap<String, [f64; 3]>);

impl Default for SizeTable {
    fn default() -> Self {
        Self(BTreeMap::from([
            (Category::Vehicle.as_str().to_string(), [4.6, 1.95, 1.73]),
            (Category::Pedestrian.as_str().to_string(), [0.7, 0.7, 1.7]),
        ]))
    }
}

impl SizeTable {
    pub fn size(&self, category: Category) -> Result<[f64; 3], CondError> {
        let size = *self.0.get(category.as_str()).ok_or_else(|| CondError::UnknownCategory(category.as_str().into()))?;
        if size.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(CondError::InvalidSize { category: category.as_str().into(), size });
        }
        Ok(size)
    }

    pub fn load(path: &Path) -> Result<Self, CondError> {
        let text = std::fs::read_to_string(path).map_err(|source| IoError::Io { path: path.into(), source })?;
        serde_json::from_str(&text).map_err(|e| CondError::Corrupt(format!("size table {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub agent_id: String,
    pub category: Category,
    pub frame: usize,
    pub center: [f64; 3],
    /// Length along the heading, width, height.
    pub size: [f64; 3],
    pub yaw: f64,
}

impl Box3D {
    /// Bottom face counter-clockwise from the front-left corner, then the top face.
    pub fn corners(&self) -> [[f64; 3]; 8] {
        let (s, c) = self.yaw.sin_cos();
        let [l, w, h] = self.size.map(|v| v / 2.0);
        std::array::from_fn(|i| {
            let (a, b) = [(l, w), (-l, w), (-l, -w), (l, -w)][i % 4];
            let z = if i < 4 { -h } else { h };
            [self.center[0] + a * c - b * s, self.center[1] + a * s + b * c, self.center[2] + z]
        })
    }

    /// The same box expressed in the frame of a pose `(x, y, yaw)`.
    pub fn relative_to(&self, pose: [f64; 3]) -> Box3D {
        let (s, c) = pose[2].sin_cos();
        let (dx, dy) = (self.center[0] - pose[0], self.center[1] - pose[1]);
        Box3D { center: [c * dx + s * dy, -s * dx + c * dy, self.center[2]], yaw: self.yaw - pose[2], ..self.clone() }
    }
}

/// One box per non-ego agent per requested waypoint index, grouped by frame.
pub fn boxes_from_trajectories(trajs: &[Trajectory], sizes: &SizeTable, frames: &[usize]) -> Result<Vec<Vec<Box3D>>, CondError> {
    frames
        .iter()
        .map(|&k| {
            trajs
                .iter()
                .filter(|t| !t.is_ego())
                .map(|t| {
                    if k >= t.len() {
                        return Err(CondError::FrameOutOfRange { index: k, len: t.len() });
                    }
                    let size = sizes.size(t.category)?;
                    let p = t.position(k);
                    Ok(Box3D { agent_id: t.agent_id.clone(), category: t.category, frame: k, center: [p[0], p[1], size[2] / 2.0], size, yaw: t.yaw(k) })
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxProjection {
    pub agent_id: String,
    pub category: Category,
    pub view: String,
    /// Convex hull of the corners in front of the near plane, counter-clockwise in pixel space.
    pub polygon: Vec<Vec2>,
    /// Whether the polygon's bounding box overlaps the image.
    pub visible: bool,
}

/// Projects an ego-frame box; `None` when every corner is at or behind the near plane.
pub fn project_box(b: &Box3D, view: &CameraView) -> Option<BoxProjection> {
    let pixels: Vec<Vec2> = b.corners().iter().filter_map(|&p| view.project_point(p)).collect();
    if pixels.is_empty() {
        return None;
    }
    let polygon = convex_hull(&pixels);
    let (lo, hi) = polygon.iter().fold(([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]), |(lo, hi), p| {
        ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])])
    });
    let visible = hi[0] >= 0.0 && lo[0] < view.width as f64 && hi[1] >= 0.0 && lo[1] < view.height as f64;
    Some(BoxProjection { agent_id: b.agent_id.clone(), category: b.category, view: view.name.clone(), polygon, visible })
}

/// One camera's clip, `data[t][c][row][col]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewVideo {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl ViewVideo {
    pub fn blank(frames: usize, height: usize, width: usize) -> Self {
        Self { frames, height, width, data: vec![0; frames * 3 * height * width] }
    }

    fn dims(&self) -> [usize; 3] {
        [self.frames, self.height, self.width]
    }
}

/// All views side by side: `data[t][c][row][k·W + col]` for view `k` of the fixed order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnifiedLayout {
    pub frames: usize,
    pub height: usize,
    pub view_width: usize,
    pub views: usize,
    pub data: Vec<u8>,
}

impl UnifiedLayout {
    pub fn width(&self) -> usize {
        self.views * self.view_width
    }

    /// `[T, 3, H, K·W]`.
    pub fn shape(&self) -> [usize; 4] {
        [self.frames, 3, self.height, self.width()]
    }

    /// Planar RGB of one frame.
    pub fn frame(&self, t: usize) -> &[u8] {
        let n = 3 * self.height * self.width();
        &self.data[t * n..(t + 1) * n]
    }
}

/// Concatenates named views horizontally. Inputs must already be in the
/// fixed order; a permuted list is rejected rather than reordered.
pub fn unify_views(views: &[(String, ViewVideo)]) -> Result<UnifiedLayout, CondError> {
    for name in VIEW_ORDER {
        if !views.iter().any(|(n, _)| n == name) {
            return Err(CondError::MissingView(name.into()));
        }
    }
    let names: Vec<String> = views.iter().map(|(n, _)| n.clone()).collect();
    if names != VIEW_ORDER {
        return Err(CondError::ViewOrder(names));
    }
    let expected = views[0].1.dims();
    for (name, v) in views {
        if v.dims() != expected || v.data.len() != 3 * expected.iter().product::<usize>() {
            return Err(CondError::DimensionMismatch { view: name.clone(), got: v.dims(), expected });
        }
    }
    let [frames, height, width] = expected;
    let k = views.len();
    let mut data = Vec::with_capacity(frames * 3 * height * width * k);
    for t in 0..frames {
        for c in 0..3 {
            for row in 0..height {
                for (_, v) in views {
                    let start = ((t * 3 + c) * height + row) * width;
                    data.extend_from_slice(&v.data[start..start + width]);
                }
            }
        }
    }
    Ok(UnifiedLayout { frames, height, view_width: width, views: k, data })
}

/// Inverse of [`unify_views`].
pub fn split_views(layout: &UnifiedLayout) -> Vec<(String, ViewVideo)> {
    let (w, uw) = (layout.view_width, layout.width());
    VIEW_ORDER
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let mut v = ViewVideo::blank(layout.frames, layout.height, w);
            for t in 0..layout.frames {
                for c in 0..3 {
                    for row in 0..layout.height {
                        let src = ((t * 3 + c) * layout.height + row) * uw + k * w;
                        let dst = ((t * 3 + c) * layout.height + row) * w;
                        v.data[dst..dst + w].copy_from_slice(&layout.data[src..src + w]);
                    }
                }
            }
            (name.to_string(), v)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    FuturePrediction,
    FrontOutpaint,
    FullGeneration,
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "future_prediction" => Ok(Task::FuturePrediction),
            "front_outpaint" => Ok(Task::FrontOutpaint),
            "full_generation" => Ok(Task::FullGeneration),
            _ => Err(format!("unknown task {s:?}; expected future_prediction, front_outpaint or full_generation")),
        }
    }
}

/// Binary grid over (frame, view) cells; 1 marks observed content that
/// conditions generation, 0 marks content to generate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskMask {
    pub task: Task,
    pub views: Vec<String>,
    /// `cells[t][k]`.
    pub cells: Vec<Vec<u8>>,
}

impl TaskMask {
    pub fn ones(&self) -> usize {
        self.cells.iter().flatten().filter(|&&v| v == 1).count()
    }

    /// `1 − m`, cell by cell.
    pub fn complement(&self) -> Vec<Vec<u8>> {
        self.cells.iter().map(|row| row.iter().map(|&v| 1 - v).collect()).collect()
    }
}

pub fn make_mask(task: Task, frames: usize) -> TaskMask {
    let views: Vec<String> = VIEW_ORDER.iter().map(|s| s.to_string()).collect();
    let front = VIEW_ORDER.iter().position(|&v| v == "F").unwrap();
    let cells = (0..frames)
        .map(|t| {
            (0..views.len())
                .map(|k| match task {
                    Task::FuturePrediction => u8::from(t == 0),
                    Task::FrontOutpaint => u8::from(k == front),
                    Task::FullGeneration => 0,
                })
                .collect()
        })
        .collect();
    TaskMask { task, views, cells }
}

/// Which waypoints a clip samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClipOptions {
    pub frames: usize,
    /// Waypoint index of the first frame; chained clips start at the previous clip's last frame.
    pub start_frame: usize,
}

impl Default for ClipOptions {
    fn default() -> Self {
        Self { frames: DEFAULT_FRAMES, start_frame: 0 }
    }
}

impl ClipOptions {
    /// Waypoint indices at the clip frame rate for waypoints `t_inter` apart.
    pub fn frame_indices(&self, t_inter: f64) -> Vec<usize> {
        let stride = ((1.0 / FRAME_RATE_HZ) / t_inter).round().max(1.0) as usize;
        (0..self.frames).map(|i| self.start_frame + i * stride).collect()
    }

    /// Options for the clip that continues this one.
    pub fn next(&self, t_inter: f64) -> ClipOptions {
        ClipOptions { start_frame: *self.frame_indices(t_inter).last().unwrap_or(&self.start_frame), ..*self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameProjections {
    pub frame: usize,
    pub timestamp: f64,
    pub lines: Vec<ProjectedPolyline>,
    pub boxes: Vec<BoxProjection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub scenario: String,
    pub seed: u64,
    pub environment: Vec<String>,
    pub task: Task,
    pub frame_rate_hz: f64,
    pub frame_indices: Vec<usize>,
    pub timestamps: Vec<f64>,
    pub views: Vec<String>,
    /// `[T, 3, H, K·W]`.
    pub layout: [usize; 4],
    pub agents: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionBundle {
    pub hdmap: UnifiedLayout,
    pub boxes: UnifiedLayout,
    pub mask: TaskMask,
    pub meta: BundleMeta,
    pub projections: Vec<FrameProjections>,
}

fn map_color(class: MapClass) -> Rgb {
    match class {
        MapClass::Boundary => BOUNDARY_COLOR,
        MapClass::Divider => DIVIDER_COLOR,
        MapClass::Crossing => CROSSING_COLOR,
    }
}

fn box_color(category: Category) -> Rgb {
    match category {
        Category::Vehicle => VEHICLE_COLOR,
        Category::Pedestrian => PEDESTRIAN_COLOR,
    }
}

/// Liang–Barsky clip of segment `a → b` to `[0, w] × [0, h]`.
fn clip_segment(a: Vec2, b: Vec2, w: f64, h: f64) -> Option<(Vec2, Vec2)> {
    let d = [b[0] - a[0], b[1] - a[1]];
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [(-d[0], a[0]), (d[0], w - a[0]), (-d[1], a[1]), (d[1], h - a[1])] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    (t0 <= t1).then(|| ([a[0] + t0 * d[0], a[1] + t0 * d[1]], [a[0] + t1 * d[0], a[1] + t1 * d[1]]))
}

/// Draws a pixel-space segment into frame `t` of a view video; pixel
/// `(row, col)` covers `u ∈ [col, col+1)`, `v ∈ [row, row+1)`.
fn draw_segment(video: &mut ViewVideo, t: usize, a: Vec2, b: Vec2, color: Rgb) {
    let (w, h) = (video.width, video.height);
    let Some((a, b)) = clip_segment(a, b, w as f64 - 1e-9, h as f64 - 1e-9) else { return };
    let (c0, r0, c1, r1) = (a[0].floor() as i64, a[1].floor() as i64, b[0].floor() as i64, b[1].floor() as i64);
    let (dc, dr) = ((c1 - c0).abs(), -(r1 - r0).abs());
    let (sc, sr) = ((c1 - c0).signum(), (r1 - r0).signum());
    let (mut c, mut r, mut err) = (c0, r0, dc + dr);
    loop {
        if (0..w as i64).contains(&c) && (0..h as i64).contains(&r) {
            for (ch, v) in color.into_iter().enumerate() {
                video.data[((t * 3 + ch) * h + r as usize) * w + c as usize] = v;
            }
        }
        if c == c1 && r == r1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dr {
            err += dr;
            c += sc;
        }
        if e2 <= dc {
            err += dc;
            r += sr;
        }
    }
}

fn draw_path(video: &mut ViewVideo, t: usize, pts: &[Vec2], closed: bool, color: Rgb) {
    for w in pts.windows(2) {
        draw_segment(video, t, w[0], w[1], color);
    }
    if closed && pts.len() > 2 {
        draw_segment(video, t, pts[pts.len() - 1], pts[0], color);
    }
}

/// Ego pose `(x, y, yaw)` at waypoint `k`.
fn ego_pose(ego: &Trajectory, k: usize) -> [f64; 3] {
    let p = ego.points[k];
    [p[0], p[1], p[2]]
}

/// Builds the unified HD map and box condition layouts, the task mask and
/// metadata for one clip. Map and boxes are re-expressed in the ego frame
/// of every sampled waypoint before projection.
#[allow(clippy::too_many_arguments)]
pub fn bundle(
    spec: &ScenarioSpec,
    seed: u64,
    trajs: &[Trajectory],
    map: &HdMap,
    rig: &CameraRig,
    sizes: &SizeTable,
    task: Task,
    clip: &ClipOptions,
) -> Result<ConditionBundle, CondError> {
    rig.validate()?;
    if clip.frames == 0 {
        return Err(CondError::NoFrames);
    }
    let ego = trajs.iter().find(|t| t.is_ego()).ok_or(CondError::MissingEgo)?;
    let t_inter = if ego.len() > 1 { ego.points[1][3] - ego.points[0][3] } else { 1.0 / FRAME_RATE_HZ };
    let indices = clip.frame_indices(t_inter);
    if let Some(&bad) = indices.iter().find(|&&k| k >= ego.len()) {
        return Err(CondError::FrameOutOfRange { index: bad, len: ego.len() });
    }
    let boxes = boxes_from_trajectories(trajs, sizes, &indices)?;
    let views = rig.ordered();
    let (h, w) = (views[0].height, views[0].width);
    if let Some(v) = views.iter().find(|v| (v.height, v.width) != (h, w)) {
        return Err(CondError::DimensionMismatch { view: v.name.clone(), got: [clip.frames, v.height, v.width], expected: [clip.frames, h, w] });
    }

    let map_lines: Vec<(MapClass, Vec<Vec2>)> = map.polylines().map(|(class, pts)| (class, densify(pts, DENSIFY_SPACING))).collect();
    let mut hd_videos: Vec<ViewVideo> = views.iter().map(|_| ViewVideo::blank(clip.frames, h, w)).collect();
    let mut box_videos = hd_videos.clone();
    let mut projections = Vec::with_capacity(clip.frames);

    for (t, (&k, frame_boxes)) in indices.iter().zip(&boxes).enumerate() {
        let pose = ego_pose(ego, k);
        let (s, c) = pose[2].sin_cos();
        let local = |p: &Vec2| {
            let (dx, dy) = (p[0] - pose[0], p[1] - pose[1]);
            [c * dx + s * dy, -s * dx + c * dy, 0.0]
        };
        let mut fp = FrameProjections { frame: k, timestamp: ego.points[k][3], lines: Vec::new(), boxes: Vec::new() };
        for (vi, view) in views.iter().enumerate() {
            for (class, pts) in &map_lines {
                let lifted: Vec<[f64; 3]> = pts.iter().map(local).collect();
                for piece in project_to_view(&lifted, view, *class) {
                    draw_path(&mut hd_videos[vi], t, &piece.points, false, map_color(*class));
                    fp.lines.push(piece);
                }
            }
            for b in frame_boxes {
                if let Some(proj) = project_box(&b.relative_to(pose), view) {
                    draw_path(&mut box_videos[vi], t, &proj.polygon, true, box_color(b.category));
                    fp.boxes.push(proj);
                }
            }
        }
        projections.push(fp);
    }

    let name = |i: usize| VIEW_ORDER[i].to_string();
    let hdmap = unify_views(&hd_videos.into_iter().enumerate().map(|(i, v)| (name(i), v)).collect::<Vec<_>>())?;
    let boxes_layout = unify_views(&box_videos.into_iter().enumerate().map(|(i, v)| (name(i), v)).collect::<Vec<_>>())?;
    let meta = BundleMeta {
        scenario: spec.name.clone(),
        seed,
        environment: spec.environment.iter().cloned().collect(),
        task,
        frame_rate_hz: FRAME_RATE_HZ,
        frame_indices: indices.clone(),
        timestamps: indices.iter().map(|&k| ego.points[k][3]).collect(),
        views: VIEW_ORDER.iter().map(|s| s.to_string()).collect(),
        layout: hdmap.shape(),
        agents: trajs.len(),
    };
    Ok(ConditionBundle { hdmap, boxes: boxes_layout, mask: make_mask(task, clip.frames), meta, projections })
}

fn frame_file(prefix: &str, t: usize) -> String {
    format!("{prefix}_{t:02}.ppm")
}

impl ConditionBundle {
    /// Writes `hdmap_cond_XX.ppm`, `boxes_cond_XX.ppm` per frame plus
    /// `mask.json`, `meta.json` and `projections.json`.
    pub fn save(&self, dir: &Path) -> Result<(), CondError> {
        std::fs::create_dir_all(dir).map_err(|source| IoError::Io { path: dir.into(), source })?;
        for t in 0..self.hdmap.frames {
            io::write_ppm(&dir.join(frame_file("hdmap_cond", t)), self.hdmap.width(), self.hdmap.height, self.hdmap.frame(t))?;
            io::write_ppm(&dir.join(frame_file("boxes_cond", t)), self.boxes.width(), self.boxes.height, self.boxes.frame(t))?;
        }
        io::write_json(&dir.join("mask.json"), &self.mask)?;
        io::write_json(&dir.join("meta.json"), &self.meta)?;
        io::write_json(&dir.join("projections.json"), &self.projections)?;
        Ok(())
    }

    /// Reads a bundle directory back and checks it is self-consistent.
    pub fn load(dir: &Path) -> Result<Self, CondError> {
        fn json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CondError> {
            let text = std::fs::read_to_string(path).map_err(|source| IoError::Io { path: path.into(), source })?;
            serde_json::from_str(&text).map_err(|e| CondError::Corrupt(format!("{}: {e}", path.display())))
        }
        let meta: BundleMeta = json(&dir.join("meta.json"))?;
        let mask: TaskMask = json(&dir.join("mask.json"))?;
        let projections: Vec<FrameProjections> = json(&dir.join("projections.json"))?;
        let [frames, _, height, width] = meta.layout;
        let views = meta.views.len();
        if views == 0 || width % views != 0 {
            return Err(CondError::Corrupt(format!("layout width {width} does not split into {views} views")));
        }
        let read = |prefix: &str| -> Result<UnifiedLayout, CondError> {
            let mut data = Vec::with_capacity(frames * 3 * height * width);
            for t in 0..frames {
                let (w, h, d) = io::read_ppm(&dir.join(frame_file(prefix, t)))?;
                if (w, h) != (width, height) {
                    return Err(CondError::Corrupt(format!("{} is {w}×{h}, expected {width}×{height}", frame_file(prefix, t))));
                }
                data.extend(d);
            }
            Ok(UnifiedLayout { frames, height, view_width: width / views, views, data })
        };
        let bundle = Self { hdmap: read("hdmap_cond")?, boxes: read("boxes_cond")?, mask, meta, projections };
        bundle.check()?;
        Ok(bundle)
    }

    /// Cross-checks mask, metadata and projections against the layouts.
    pub fn check(&self) -> Result<(), CondError> {
        let corrupt = |m: String| Err(CondError::Corrupt(m));
        let frames = self.meta.layout[0];
        if self.meta.views != VIEW_ORDER || self.mask.views != VIEW_ORDER {
            return corrupt("view order differs from the fixed layout".into());
        }
        if self.mask != make_mask(self.mask.task, frames) || self.mask.task != self.meta.task {
            return corrupt("mask does not match its task".into());
        }
        if self.meta.frame_indices.len() != frames || self.meta.timestamps.len() != frames || self.projections.len() != frames {
            return corrupt(format!("expected {frames} frames in metadata and projections"));
        }
        if self.hdmap.shape() != self.meta.layout || self.boxes.shape() != self.meta.layout {
            return corrupt("layout shape differs from metadata".into());
        }
        for (fp, (&k, &ts)) in self.projections.iter().zip(self.meta.frame_indices.iter().zip(&self.meta.timestamps)) {
            if fp.frame != k || fp.timestamp != ts {
                return corrupt(format!("projection frame {} does not match metadata", fp.frame));
            }
        }
        Ok(())
    }
}

/// SVG of one frame: the views side by side in the fixed order with map
/// lines, box polygons and observed cells shaded.
pub fn render_frame_svg(bundle: &ConditionBundle, t: usize) -> String {
    let (vw, h) = (bundle.hdmap.view_width as f64, bundle.hdmap.height as f64);
    let total = vw * bundle.hdmap.views as f64;
    let hex = |c: Rgb| format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2]);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{total}\" height=\"{h}\" viewBox=\"0 0 {total} {h}\">\n\
         <rect width=\"{total}\" height=\"{h}\" fill=\"#000000\"/>\n"
    );
    for (k, name) in VIEW_ORDER.iter().enumerate() {
        let x0 = k as f64 * vw;
        if bundle.mask.cells[t][k] == 1 {
            let _ = writeln!(s, "<rect class=\"observed\" x=\"{x0}\" y=\"0\" width=\"{vw}\" height=\"{h}\" fill=\"#ffffff\" fill-opacity=\"0.15\"/>");
        }
        let _ = writeln!(s, "<g transform=\"translate({x0} 0)\">\n<title>{name}</title>");
        let _ = writeln!(s, "<rect x=\"0\" y=\"0\" width=\"{vw}\" height=\"{h}\" fill=\"none\" stroke=\"#808080\"/>");
        let fp = &bundle.projections[t];
        let path = |pts: &[Vec2]| pts.iter().enumerate().map(|(i, p)| format!("{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, p[0], p[1])).collect::<String>();
        for line in fp.lines.iter().filter(|l| l.view == *name) {
            let _ = writeln!(s, "<path class=\"{:?}\" d=\"{}\" stroke=\"{}\" fill=\"none\"/>", line.class, path(&line.points), hex(map_color(line.class)));
        }
        for b in fp.boxes.iter().filter(|b| b.view == *name) {
            let _ = writeln!(s, "<path class=\"box\" data-agent=\"{}\" d=\"{} Z\" stroke=\"{}\" fill=\"none\"/>", b.agent_id, path(&b.polygon), hex(box_color(b.category)));
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}
