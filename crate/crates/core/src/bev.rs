//! Bird's-eye-view rasters of trajectories (`T_b`) and HD maps (`H_b`).
//!
//! Frame: ego at the image center, +x (forward) points up, +y (left) points
//! toward the image's left edge. Pixel `(row, col)` covers the square whose
//! center maps to `x = (H/2 − row)·mpp`, `y = (W/2 − col)·mpp`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::Category;
use crate::geom::{point_in_polygon, Vec2};
use crate::hdmap::{HdMap, MapClass};
use crate::io::{self, IoError};
use crate::kernel::Trajectory;

pub type Rgb = [u8; 3];

pub const EGO_COLOR: Rgb = [255, 165, 0];
pub const VEHICLE_COLOR: Rgb = [255, 255, 0];
pub const PEDESTRIAN_COLOR: Rgb = [0, 255, 255];
pub const BOUNDARY_COLOR: Rgb = [255, 0, 0];
pub const CROSSING_COLOR: Rgb = [0, 255, 0];
pub const DIVIDER_COLOR: Rgb = [0, 0, 255];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RasterParams {
    pub width: usize,
    pub height: usize,
    pub meters_per_pixel: f64,
    /// Stroke width in pixels.
    pub stroke: usize,
}

impl Default for RasterParams {
    fn default() -> Self {
        Self { width: 512, height: 512, meters_per_pixel: 0.2, stroke: 2 }
    }
}

impl RasterParams {
    pub fn validate(&self) -> Result<(), BevError> {
        if self.width == 0 || self.height == 0 || self.stroke == 0 {
            return Err(BevError::InvalidParams("width, height and stroke must be positive".into()));
        }
        if !(self.meters_per_pixel.is_finite() && self.meters_per_pixel > 0.0) {
            return Err(BevError::InvalidParams(format!("meters_per_pixel {} must be positive", self.meters_per_pixel)));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum BevError {
    #[error("invalid raster parameters: {0}")]
    InvalidParams(String),
    #[error("no ego trajectory to rasterize")]
    MissingEgo,
    #[error("raster is {got} bytes, expected {expected}")]
    SizeMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Pixel address; `in_bounds` is false when the point falls outside the
/// raster. Coordinates are never clamped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pixel {
    pub row: i64,
    pub col: i64,
    pub in_bounds: bool,
}

pub fn pixel_of(p: Vec2, params: &RasterParams) -> Pixel {
    // f64::round rounds half away from zero
    let row = (params.height as f64 / 2.0 - p[0] / params.meters_per_pixel).round() as i64;
    let col = (params.width as f64 / 2.0 - p[1] / params.meters_per_pixel).round() as i64;
    let in_bounds = (0..params.height as i64).contains(&row) && (0..params.width as i64).contains(&col);
    Pixel { row, col, in_bounds }
}

/// Metric position of a pixel center.
pub fn meters_of(row: i64, col: i64, params: &RasterParams) -> Vec2 {
    [
        (params.height as f64 / 2.0 - row as f64) * params.meters_per_pixel,
        (params.width as f64 / 2.0 - col as f64) * params.meters_per_pixel,
    ]
}

/// Planar 8-bit RGB raster, `data[c·H·W + row·W + col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BevRaster {
    pub width: usize,
    pub height: usize,
    pub meters_per_pixel: f64,
    pub data: Vec<u8>,
}

/// Sidecar metadata persisted next to each PPM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterMeta {
    pub width: usize,
    pub height: usize,
    pub meters_per_pixel: f64,
    /// Pixel `[row, col]` of the ego origin.
    pub origin: [usize; 2],
    pub axes: String,
}

impl BevRaster {
    pub fn blank(params: &RasterParams) -> Self {
        Self {
            width: params.width,
            height: params.height,
            meters_per_pixel: params.meters_per_pixel,
            data: vec![0; 3 * params.width * params.height],
        }
    }

    pub fn channel(&self, c: usize) -> &[u8] {
        let plane = self.width * self.height;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn rgb(&self, row: usize, col: usize) -> Rgb {
        let plane = self.width * self.height;
        let i = row * self.width + col;
        [self.data[i], self.data[plane + i], self.data[2 * plane + i]]
    }

    fn set(&mut self, row: usize, col: usize, color: Rgb) {
        let plane = self.width * self.height;
        let i = row * self.width + col;
        for (c, v) in color.into_iter().enumerate() {
            self.data[c * plane + i] = v;
        }
    }

    /// Number of pixels painted exactly `color`.
    pub fn count(&self, color: Rgb) -> usize {
        (0..self.height).flat_map(|r| (0..self.width).map(move |c| (r, c))).filter(|&(r, c)| self.rgb(r, c) == color).count()
    }

    /// Distinct non-black colors, sorted.
    pub fn colors(&self) -> Vec<Rgb> {
        let mut seen = std::collections::BTreeSet::new();
        for r in 0..self.height {
            for c in 0..self.width {
                let px = self.rgb(r, c);
                if px != [0, 0, 0] {
                    seen.insert(px);
                }
            }
        }
        seen.into_iter().collect()
    }

    pub fn meta(&self) -> RasterMeta {
        RasterMeta {
            width: self.width,
            height: self.height,
            meters_per_pixel: self.meters_per_pixel,
            origin: [self.height / 2, self.width / 2],
            axes: "x forward = up, y left = image left".into(),
        }
    }

    /// Writes `path` as P6 and `path` with a `.json` extension as the sidecar.
    pub fn save(&self, path: &Path) -> Result<(), BevError> {
        io::write_ppm(path, self.width, self.height, &self.data)?;
        io::write_json(&path.with_extension("json"), &self.meta())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, BevError> {
        let (width, height, data) = io::read_ppm(path)?;
        let text = std::fs::read_to_string(path.with_extension("json"))
            .map_err(|source| IoError::Io { path: path.with_extension("json"), source })?;
        let meta: RasterMeta = serde_json::from_str(&text)
            .map_err(|e| BevError::InvalidParams(format!("sidecar {}: {e}", path.with_extension("json").display())))?;
        if (meta.width, meta.height) != (width, height) {
            return Err(BevError::SizeMismatch { got: width * height, expected: meta.width * meta.height });
        }
        Ok(Self { width, height, meters_per_pixel: meta.meters_per_pixel, data })
    }
}

/// What the rasterizer actually painted: final pixel count per class after
/// later classes overwrite earlier ones, and trajectories that fell
/// entirely outside the raster.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawLog {
    pub pixels: BTreeMap<String, usize>,
    pub skipped: Vec<String>,
}

/// Paints into a raster while tracking a per-pixel class label.
struct Canvas {
    raster: BevRaster,
    labels: Vec<Option<&'static str>>,
    params: RasterParams,
}

impl Canvas {
    fn new(params: &RasterParams) -> Self {
        Self { raster: BevRaster::blank(params), labels: vec![None; params.width * params.height], params: *params }
    }

    fn put(&mut self, row: i64, col: i64, color: Rgb, label: &'static str) -> bool {
        if row < 0 || col < 0 || row >= self.params.height as i64 || col >= self.params.width as i64 {
            return false;
        }
        let (r, c) = (row as usize, col as usize);
        self.raster.set(r, c, color);
        self.labels[r * self.params.width + c] = Some(label);
        true
    }

    /// Square stamp of side `stroke` anchored at the Bresenham pixel.
    fn stamp(&mut self, row: i64, col: i64, color: Rgb, label: &'static str) -> bool {
        let s = self.params.stroke as i64;
        let mut any = false;
        for dr in 0..s {
            for dc in 0..s {
                any |= self.put(row + dr, col + dc, color, label);
            }
        }
        any
    }

    fn segment(&mut self, a: Pixel, b: Pixel, color: Rgb, label: &'static str) -> bool {
        let (mut r, mut c) = (a.row, a.col);
        let (dr, dc) = ((b.row - a.row).abs(), -(b.col - a.col).abs());
        let (sr, sc) = ((b.row - a.row).signum(), (b.col - a.col).signum());
        let mut err = dr + dc;
        let mut any = false;
        loop {
            any |= self.stamp(r, c, color, label);
            if r == b.row && c == b.col {
                return any;
            }
            let e2 = 2 * err;
            if e2 >= dc {
                err += dc;
                r += sr;
            }
            if e2 <= dr {
                err += dr;
                c += sc;
            }
        }
    }

    fn polyline(&mut self, points: &[Vec2], color: Rgb, label: &'static str) -> bool {
        let px: Vec<Pixel> = points.iter().map(|&p| pixel_of(p, &self.params)).collect();
        match px.as_slice() {
            [] => false,
            [only] => self.stamp(only.row, only.col, color, label),
            _ => px.windows(2).fold(false, |any, w| self.segment(w[0], w[1], color, label) | any),
        }
    }

    /// Fills every pixel whose center lies inside the polygon.
    fn fill(&mut self, poly: &[Vec2], color: Rgb, label: &'static str) -> bool {
        if poly.len() < 3 {
            return false;
        }
        let px: Vec<Pixel> = poly.iter().map(|&p| pixel_of(p, &self.params)).collect();
        let r0 = px.iter().map(|p| p.row).min().unwrap().max(0);
        let r1 = px.iter().map(|p| p.row).max().unwrap().min(self.params.height as i64 - 1);
        let c0 = px.iter().map(|p| p.col).min().unwrap().max(0);
        let c1 = px.iter().map(|p| p.col).max().unwrap().min(self.params.width as i64 - 1);
        let mut any = false;
        for r in r0..=r1 {
            for c in c0..=c1 {
                if point_in_polygon(meters_of(r, c, &self.params), poly) {
                    any |= self.put(r, c, color, label);
                }
            }
        }
        any
    }

    fn finish(self, skipped: Vec<String>) -> (BevRaster, DrawLog) {
        let mut pixels = BTreeMap::new();
        for label in self.labels.into_iter().flatten() {
            *pixels.entry(label.to_string()).or_insert(0) += 1;
        }
        (self.raster, DrawLog { pixels, skipped })
    }
}

fn trajectory_style(t: &Trajectory) -> (Rgb, &'static str) {
    if t.is_ego() {
        (EGO_COLOR, "ego")
    } else {
        match t.category {
            Category::Vehicle => (VEHICLE_COLOR, "vehicle"),
            Category::Pedestrian => (PEDESTRIAN_COLOR, "pedestrian"),
        }
    }
}

/// Draws every trajectory as a polyline; ego is drawn last so it stays on top.
pub fn rasterize_trajectories(trajs: &[Trajectory], params: &RasterParams) -> Result<(BevRaster, DrawLog), BevError> {
    params.validate()?;
    let ego = trajs.iter().find(|t| t.is_ego()).ok_or(BevError::MissingEgo)?;
    let mut canvas = Canvas::new(params);
    let mut skipped = Vec::new();
    for t in trajs.iter().filter(|t| !t.is_ego()).chain([ego]) {
        let (color, label) = trajectory_style(t);
        let pts: Vec<Vec2> = (0..t.len()).map(|k| t.position(k)).collect();
        if !canvas.polyline(&pts, color, label) {
            skipped.push(t.agent_id.clone());
        }
    }
    Ok(canvas.finish(skipped))
}

/// Draws dividers, then filled crossings, then boundaries; a pixel keeps the
/// last class painted on it, so the three channels never overlap.
pub fn rasterize_hdmap(map: &HdMap, params: &RasterParams) -> Result<(BevRaster, DrawLog), BevError> {
    params.validate()?;
    let mut canvas = Canvas::new(params);
    for line in &map.dividers {
        canvas.polyline(&line.points, DIVIDER_COLOR, "divider");
    }
    for poly in &map.crossings {
        canvas.fill(poly, CROSSING_COLOR, "crossing");
    }
    for line in &map.boundaries {
        canvas.polyline(&line.points, BOUNDARY_COLOR, "boundary");
    }
    Ok(canvas.finish(Vec::new()))
}

fn hex(c: Rgb) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn svg_path(points: &[Vec2], params: &RasterParams) -> String {
    let mut d = String::new();
    for (i, p) in points.iter().enumerate() {
        // same frame as the raster, in fractional pixels
        let row = params.height as f64 / 2.0 - p[0] / params.meters_per_pixel;
        let col = params.width as f64 / 2.0 - p[1] / params.meters_per_pixel;
        let _ = write!(d, "{}{col:.2},{row:.2}", if i == 0 { "M" } else { " L" });
    }
    d
}

/// Human-readable SVG of the map and trajectories in the raster frame.
pub fn render_svg(map: Option<&HdMap>, trajs: &[Trajectory], params: &RasterParams) -> String {
    let (w, h) = (params.width, params.height);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"#000000\"/>\n"
    );
    if let Some(map) = map {
        for (class, pts) in map.polylines() {
            let (color, fill) = match class {
                MapClass::Boundary => (BOUNDARY_COLOR, false),
                MapClass::Divider => (DIVIDER_COLOR, false),
                MapClass::Crossing => (CROSSING_COLOR, true),
            };
            let fill = if fill { hex(color) } else { "none".into() };
            let _ = writeln!(
                s,
                "<path class=\"{class:?}\" d=\"{}\" stroke=\"{}\" fill=\"{fill}\" stroke-width=\"{}\"/>",
                svg_path(pts, params),
                hex(color),
                params.stroke
            );
        }
    }
    for t in trajs.iter().filter(|t| !t.is_ego()).chain(trajs.iter().filter(|t| t.is_ego())) {
        let (color, label) = trajectory_style(t);
        let pts: Vec<Vec2> = (0..t.len()).map(|k| t.position(k)).collect();
        let _ = writeln!(
            s,
            "<path class=\"{label}\" data-agent=\"{}\" d=\"{}\" stroke=\"{}\" fill=\"none\" stroke-width=\"{}\"/>",
            t.agent_id,
            svg_path(&pts, params),
            hex(color),
            params.stroke
        );
    }
    s.push_str("</svg>\n");
    s
}
