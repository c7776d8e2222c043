//! BEV HD map post-processing: binarization, Zhang–Suen thinning, skeleton
//! tracing and pinhole projection of ground polylines into camera views.

use std::collections::{HashSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bev::BevRaster;
use crate::geom::{dist, Vec2};
use crate::hdmap::{HdMap, MapClass};

/// Camera order of the unified multi-view layout, left to right.
pub const VIEW_ORDER: [&str; 6] = ["FL", "F", "FR", "BR", "B", "BL"];
/// Points at or in front of this camera-frame depth are culled.
pub const NEAR_PLANE: f64 = 0.1;
/// Clipped points land this far in front of the near plane.
const CLIP_EPS: f64 = 1e-6;
/// Arclength spacing used to densify ground polylines before projection.
pub const DENSIFY_SPACING: f64 = 0.5;

/// Binary image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, on: bool) {
        self.data[row * self.width + col] = on;
    }

    /// Out-of-range coordinates read as background.
    fn at(&self, row: isize, col: isize) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.height && (col as usize) < self.width && self.get(row as usize, col as usize)
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.height).flat_map(move |r| (0..self.width).map(move |c| (r, c))).filter(|&(r, c)| self.get(r, c))
    }

    /// Number of 8-connected foreground components.
    pub fn components(&self) -> usize {
        let mut seen = vec![false; self.data.len()];
        let mut n = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.data.len() {
            if !self.data[start] || seen[start] {
                continue;
            }
            n += 1;
            seen[start] = true;
            queue.push_back(start);
            while let Some(i) = queue.pop_front() {
                let (r, c) = ((i / self.width) as isize, (i % self.width) as isize);
                for (dr, dc) in RING {
                    let (nr, nc) = (r + dr, c + dc);
                    if self.at(nr, nc) {
                        let j = nr as usize * self.width + nc as usize;
                        if !seen[j] {
                            seen[j] = true;
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        n
    }
}

/// Neighbor offsets P2..P9: N, NE, E, SE, S, SW, W, NW.
const RING: [(isize, isize); 8] = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)];

/// Per-channel masks `channel ≥ threshold`, in channel order (R, G, B).
pub fn binarize(raster: &BevRaster, threshold: u8) -> [Mask; 3] {
    std::array::from_fn(|c| Mask {
        width: raster.width,
        height: raster.height,
        data: raster.channel(c).iter().map(|&v| v >= threshold).collect(),
    })
}

fn ring(m: &Mask, r: usize, c: usize) -> [bool; 8] {
    RING.map(|(dr, dc)| m.at(r as isize + dr, c as isize + dc))
}

fn deletable(p: [bool; 8], first: bool) -> bool {
    let b = p.iter().filter(|&&x| x).count();
    let a = (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count();
    let [p2, _, p4, _, p6, _, p8, _] = p;
    let directional = if first { !(p2 && p4 && p6) && !(p4 && p6 && p8) } else { !(p2 && p4 && p8) && !(p2 && p6 && p8) };
    (2..=6).contains(&b) && a == 1 && directional
}

/// Zhang–Suen thinning. Each sub-iteration deletes its candidates in
/// parallel; if that would change the component count (two-pixel-thick
/// runs vanish under the parallel rule), the sub-iteration is replayed
/// sequentially in raster order, which only removes simple points.
pub fn skeletonize(mask: &Mask) -> Mask {
    let mut m = mask.clone();
    loop {
        let mut changed = false;
        for first in [true, false] {
            let cands: Vec<(usize, usize)> = m.pixels().filter(|&(r, c)| deletable(ring(&m, r, c), first)).collect();
            if cands.is_empty() {
                continue;
            }
            let mut trial = m.clone();
            for &(r, c) in &cands {
                trial.set(r, c, false);
            }
            if trial.components() == m.components() {
                m = trial;
                changed = true;
            } else {
                for &(r, c) in &cands {
                    if deletable(ring(&m, r, c), first) {
                        m.set(r, c, false);
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return m;
        }
    }
}

pub type PixelPath = Vec<(usize, usize)>;

/// m-adjacent neighbors: 4-neighbors always, diagonal neighbors only when
/// neither shared 4-neighbor is set. Ordered as `RING`.
fn m_neighbors(m: &Mask, r: usize, c: usize) -> Vec<(usize, usize)> {
    let (ri, ci) = (r as isize, c as isize);
    RING.iter()
        .filter(|&&(dr, dc)| {
            m.at(ri + dr, ci + dc) && (dr == 0 || dc == 0 || (!m.at(ri + dr, ci) && !m.at(ri, ci + dc)))
        })
        .map(|&(dr, dc)| ((ri + dr) as usize, (ci + dc) as usize))
        .collect()
}

fn edge(a: (usize, usize), b: (usize, usize)) -> ((usize, usize), (usize, usize)) {
    if a <= b { (a, b) } else { (b, a) }
}

/// Splits a unit-width skeleton into pixel polylines. Paths run between
/// endpoints and junctions (three or more neighbors); junction pixels end
/// every path touching them. Closed loops repeat their first pixel. Open
/// paths start at their top-left end and the list is sorted by start pixel.
pub fn trace_polylines(skeleton: &Mask) -> Vec<PixelPath> {
    let degree = |r, c| m_neighbors(skeleton, r, c).len();
    let mut visited = Mask::new(skeleton.width, skeleton.height);
    let mut edges = HashSet::new();
    let mut out = Vec::new();

    for (r, c) in skeleton.pixels() {
        let d = degree(r, c);
        if d == 2 {
            continue;
        }
        visited.set(r, c, true);
        if d == 0 {
            out.push(vec![(r, c)]);
            continue;
        }
        for n in m_neighbors(skeleton, r, c) {
            if !edges.insert(edge((r, c), n)) {
                continue;
            }
            let mut path = vec![(r, c)];
            let (mut prev, mut cur) = ((r, c), n);
            loop {
                path.push(cur);
                visited.set(cur.0, cur.1, true);
                let nbrs = m_neighbors(skeleton, cur.0, cur.1);
                if nbrs.len() != 2 {
                    break;
                }
                let next = if nbrs[0] == prev { nbrs[1] } else { nbrs[0] };
                if !edges.insert(edge(cur, next)) {
                    break;
                }
                (prev, cur) = (cur, next);
            }
            if path.last() < path.first() {
                path.reverse();
            }
            out.push(path);
        }
    }

    // what is left are cycles of degree-2 pixels
    for (r, c) in skeleton.pixels() {
        if visited.get(r, c) {
            continue;
        }
        let start = (r, c);
        let mut path = vec![start];
        visited.set(r, c, true);
        let (mut prev, mut cur) = (start, m_neighbors(skeleton, r, c)[0]);
        while cur != start {
            path.push(cur);
            visited.set(cur.0, cur.1, true);
            let nbrs = m_neighbors(skeleton, cur.0, cur.1);
            let next = if nbrs[0] == prev { nbrs[1] } else { nbrs[0] };
            (prev, cur) = (cur, next);
        }
        path.push(start);
        out.push(path);
    }
    out.sort();
    out
}

#[derive(Debug, Error)]
pub enum RigError {
    #[error("rig has {0} views, expected 6")]
    ViewCount(usize),
    #[error("rig views must be exactly {VIEW_ORDER:?}, got {0:?}")]
    ViewNames(Vec<String>),
    #[error("view {view}: rotation is not orthonormal (max |RᵀR − I| = {err:e})")]
    NotOrthonormal { view: String, err: f64 },
    #[error("view {view}: {reason}")]
    Intrinsics { view: String, reason: String },
    #[error("rig file {path}: {reason}")]
    File { path: String, reason: String },
}

/// Pinhole camera. `rotation` (row-major) and `translation` map ego-frame
/// points into the OpenCV camera frame: x right, y down, z forward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraView {
    pub name: String,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(rename = "R")]
    pub rotation: [f64; 9],
    #[serde(rename = "t")]
    pub translation: [f64; 3],
    pub width: usize,
    pub height: usize,
}

impl CameraView {
    /// Camera mounted at `height` above the ego origin looking along `yaw`.
    pub fn looking(name: &str, yaw: f64, height: f64) -> Self {
        let (s, c) = yaw.sin_cos();
        // rows: camera right, camera down, camera forward, in ego coordinates
        let rotation = [s, -c, 0.0, 0.0, 0.0, -1.0, c, s, 0.0];
        let center = [0.0, 0.0, height];
        let translation = std::array::from_fn(|i| -(0..3).map(|j| rotation[3 * i + j] * center[j]).sum::<f64>());
        Self { name: name.into(), fx: 500.0, fy: 500.0, cx: 224.0, cy: 128.0, rotation, translation, width: 448, height: 256 }
    }

    pub fn to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| (0..3).map(|j| self.rotation[3 * i + j] * p[j]).sum::<f64>() + self.translation[i])
    }

    /// Pixel of a camera-frame point; the caller guarantees depth > near.
    pub fn pixel(&self, q: [f64; 3]) -> Vec2 {
        [self.fx * q[0] / q[2] + self.cx, self.fy * q[1] / q[2] + self.cy]
    }

    /// Pixel of an ego-frame point, or `None` at or behind the near plane.
    pub fn project_point(&self, p: [f64; 3]) -> Option<Vec2> {
        let q = self.to_camera(p);
        (q[2] > NEAR_PLANE).then(|| self.pixel(q))
    }

    pub fn in_image(&self, uv: Vec2) -> bool {
        (0.0..self.width as f64).contains(&uv[0]) && (0.0..self.height as f64).contains(&uv[1])
    }

    fn validate(&self) -> Result<(), RigError> {
        let r = &self.rotation;
        let mut err: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[3 * k + i] * r[3 * k + j]).sum();
                err = err.max((dot - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
        if !(err <= 1e-9) {
            return Err(RigError::NotOrthonormal { view: self.name.clone(), err });
        }
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().chain(&self.translation).all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 || self.width == 0 || self.height == 0 {
            return Err(RigError::Intrinsics { view: self.name.clone(), reason: "focal lengths and image size must be positive and finite".into() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub views: Vec<CameraView>,
}

impl Default for CameraRig {
    /// Six cameras 1.6 m up, 60° apart, at 448×256 with f = 500 px.
    fn default() -> Self {
        let yaw_deg = [60.0, 0.0, -60.0, -120.0, 180.0, 120.0];
        let views = VIEW_ORDER.iter().zip(yaw_deg).map(|(n, y)| CameraView::looking(n, f64::to_radians(y), 1.6)).collect();
        Self { views }
    }
}

impl CameraRig {
    pub fn validate(&self) -> Result<(), RigError> {
        if self.views.len() != VIEW_ORDER.len() {
            return Err(RigError::ViewCount(self.views.len()));
        }
        let mut names: Vec<&str> = self.views.iter().map(|v| v.name.as_str()).collect();
        names.sort_unstable();
        let mut want = VIEW_ORDER;
        want.sort_unstable();
        if names != want {
            return Err(RigError::ViewNames(self.views.iter().map(|v| v.name.clone()).collect()));
        }
        self.views.iter().try_for_each(CameraView::validate)
    }

    pub fn view(&self, name: &str) -> Option<&CameraView> {
        self.views.iter().find(|v| v.name == name)
    }

    /// Views in the fixed layout order.
    pub fn ordered(&self) -> Vec<&CameraView> {
        VIEW_ORDER.iter().filter_map(|n| self.view(n)).collect()
    }

    pub fn load(path: &Path) -> Result<Self, RigError> {
        let file_err = |reason: String| RigError::File { path: path.display().to_string(), reason };
        let text = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        let rig: Self = serde_json::from_str(&text).map_err(|e| file_err(e.to_string()))?;
        rig.validate()?;
        Ok(rig)
    }
}

/// One near-plane-clipped piece of a ground polyline in a view's pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPolyline {
    pub view: String,
    pub class: MapClass,
    pub points: Vec<Vec2>,
    /// Whether each point falls inside the image.
    pub visible: Vec<bool>,
}

/// Projects an ego-frame 3D polyline. Segments crossing the near plane are
/// cut there, so the result may hold several pieces or none.
pub fn project_to_view(polyline: &[[f64; 3]], view: &CameraView, class: MapClass) -> Vec<ProjectedPolyline> {
    let mut pieces: Vec<Vec<[f64; 3]>> = Vec::new();
    let mut current: Vec<[f64; 3]> = Vec::new();
    let mut prev: Option<[f64; 3]> = None;
    let plane = NEAR_PLANE + CLIP_EPS;
    for &p in polyline {
        let q = view.to_camera(p);
        let front = q[2] > NEAR_PLANE;
        if let Some(a) = prev {
            let a_front = a[2] > NEAR_PLANE;
            if a_front != front {
                let t = (plane - a[2]) / (q[2] - a[2]);
                let cut: [f64; 3] = std::array::from_fn(|i| a[i] + t * (q[i] - a[i]));
                current.push([cut[0], cut[1], plane]);
                if a_front {
                    pieces.push(std::mem::take(&mut current));
                }
            }
        }
        if front {
            current.push(q);
        }
        prev = Some(q);
    }
    if !current.is_empty() {
        pieces.push(current);
    }
    pieces
        .into_iter()
        .map(|piece| {
            let points: Vec<Vec2> = piece.iter().map(|&q| view.pixel(q)).collect();
            let visible = points.iter().map(|&uv| view.in_image(uv)).collect();
            ProjectedPolyline { view: view.name.clone(), class, points, visible }
        })
        .collect()
}

/// Subdivides every segment into pieces no longer than `spacing`, keeping
/// the original vertices.
pub fn densify(points: &[Vec2], spacing: f64) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(points.len());
    for w in points.windows(2) {
        let n = (dist(w[0], w[1]) / spacing).ceil().max(1.0) as usize;
        for k in 0..n {
            let t = k as f64 / n as f64;
            out.push([w[0][0] + t * (w[1][0] - w[0][0]), w[0][1] + t * (w[1][1] - w[0][1])]);
        }
    }
    out.extend(points.last());
    out
}

/// Every boundary, divider and crossing of `map`, densified, lifted to the
/// ground plane and projected into each view in layout order.
pub fn project_map(map: &HdMap, rig: &CameraRig) -> Vec<ProjectedPolyline> {
    let lifted: Vec<(MapClass, Vec<[f64; 3]>)> =
        map.polylines().map(|(class, pts)| (class, densify(pts, DENSIFY_SPACING).into_iter().map(|p| [p[0], p[1], 0.0]).collect())).collect();
    rig.ordered()
        .into_iter()
        .flat_map(|view| lifted.iter().flat_map(move |(class, pts)| project_to_view(pts, view, *class)))
        .collect()
}

/// Ground polylines recovered from an `H_b` raster: per class, binarize,
/// thin, trace, and map pixel centers back to meters.
pub fn vectorize(raster: &BevRaster, threshold: u8, params: &crate::bev::RasterParams) -> Vec<(MapClass, Vec<Vec2>)> {
    let [red, green, blue] = binarize(raster, threshold);
    let mut out = Vec::new();
    for (class, mask) in [(MapClass::Boundary, red), (MapClass::Crossing, green), (MapClass::Divider, blue)] {
        for path in trace_polylines(&skeletonize(&mask)) {
            let pts = path.iter().map(|&(r, c)| crate::bev::meters_of(r as i64, c as i64, params)).collect();
            out.push((class, pts));
        }
    }
    out
}
