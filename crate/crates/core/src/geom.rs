//! Planar geometry shared by the map, raster and projection stages.

use std::f64::consts::PI;

pub type Vec2 = [f64; 2];

pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

pub fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

pub fn dist(a: Vec2, b: Vec2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub fn heading_vec(yaw: f64) -> Vec2 {
    [yaw.cos(), yaw.sin()]
}

/// Left normal of a heading.
pub fn left_normal(yaw: f64) -> Vec2 {
    [-yaw.sin(), yaw.cos()]
}

/// Nearest-point query result against a [`Polyline`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub station: f64,
    /// Signed lateral offset, positive on the left of the direction of travel.
    pub offset: f64,
    pub distance: f64,
    pub foot: Vec2,
}

/// Polyline with cached cumulative arclength.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Vec2>,
    stations: Vec<f64>,
}

impl Polyline {
    /// Consecutive duplicate points are dropped. Panics on fewer than two
    /// distinct points.
    pub fn new(points: &[Vec2]) -> Self {
        let mut pts: Vec<Vec2> = Vec::with_capacity(points.len());
        for &p in points {
            if pts.last().is_none_or(|&q| dist(p, q) > 1e-12) {
                pts.push(p);
            }
        }
        assert!(pts.len() >= 2, "polyline needs two distinct points");
        let mut stations = Vec::with_capacity(pts.len());
        let mut s = 0.0;
        stations.push(0.0);
        for w in pts.windows(2) {
            s += dist(w[0], w[1]);
            stations.push(s);
        }
        Self { points: pts, stations }
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        *self.stations.last().unwrap()
    }

    fn segment_at(&self, station: f64) -> usize {
        match self
            .stations
            .binary_search_by(|s| s.partial_cmp(&station).unwrap())
        {
            Ok(i) => i.min(self.points.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.points.len() - 2),
        }
    }

    /// Point and unit tangent at a station; stations outside the polyline are
    /// extrapolated along the end segments.
    pub fn pose_at(&self, station: f64) -> (Vec2, Vec2) {
        let i = self.segment_at(station);
        let (a, b) = (self.points[i], self.points[i + 1]);
        let len = self.stations[i + 1] - self.stations[i];
        let t = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
        let u = station - self.stations[i];
        ([a[0] + t[0] * u, a[1] + t[1] * u], t)
    }

    /// Point displaced laterally from the station, left positive.
    pub fn offset_point(&self, station: f64, offset: f64) -> Vec2 {
        let (p, t) = self.pose_at(station);
        [p[0] - t[1] * offset, p[1] + t[0] * offset]
    }

    pub fn project(&self, q: Vec2) -> Projection {
        let mut best = Projection {
            station: 0.0,
            offset: 0.0,
            distance: f64::INFINITY,
            foot: self.points[0],
        };
        for i in 0..self.points.len() - 1 {
            let (a, b) = (self.points[i], self.points[i + 1]);
            let ab = sub(b, a);
            let len2 = dot(ab, ab);
            let u = (dot(sub(q, a), ab) / len2).clamp(0.0, 1.0);
            let foot = [a[0] + ab[0] * u, a[1] + ab[1] * u];
            let d = dist(q, foot);
            if d < best.distance {
                let len = len2.sqrt();
                let side = cross(ab, sub(q, a)) / len;
                best = Projection {
                    station: self.stations[i] + u * len,
                    offset: if side >= 0.0 { d } else { -d },
                    distance: d,
                    foot,
                };
            }
        }
        best
    }

    /// Uniform arclength resampling; the last point is always kept.
    pub fn resample(&self, spacing: f64) -> Vec<Vec2> {
        let n = (self.length() / spacing).ceil().max(1.0) as usize;
        let step = self.length() / n as f64;
        (0..=n).map(|k| self.pose_at(k as f64 * step).0).collect()
    }
}

pub fn segments_intersect(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let d1 = cross(sub(b, a), sub(c, a));
    let d2 = cross(sub(b, a), sub(d, a));
    let d3 = cross(sub(d, c), sub(a, c));
    let d4 = cross(sub(d, c), sub(b, c));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |p: Vec2, q: Vec2, r: Vec2| {
        r[0] >= p[0].min(q[0]) && r[0] <= p[0].max(q[0]) && r[1] >= p[1].min(q[1]) && r[1] <= p[1].max(q[1])
    };
    (d1 == 0.0 && on(a, b, c))
        || (d2 == 0.0 && on(a, b, d))
        || (d3 == 0.0 && on(c, d, a))
        || (d4 == 0.0 && on(c, d, b))
}

pub fn polylines_intersect(p: &[Vec2], q: &[Vec2]) -> bool {
    let bbox = |pts: &[Vec2]| {
        pts.iter().fold([f64::MAX, f64::MAX, f64::MIN, f64::MIN], |b, p| {
            [b[0].min(p[0]), b[1].min(p[1]), b[2].max(p[0]), b[3].max(p[1])]
        })
    };
    let (bp, bq) = (bbox(p), bbox(q));
    if bp[2] < bq[0] || bq[2] < bp[0] || bp[3] < bq[1] || bq[3] < bp[1] {
        return false;
    }
    p.windows(2).any(|s| {
        let sb = bbox(s);
        if sb[2] < bq[0] || bq[2] < sb[0] || sb[3] < bq[1] || bq[3] < sb[1] {
            return false;
        }
        q.windows(2).any(|t| segments_intersect(s[0], s[1], t[0], t[1]))
    })
}

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
pub fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Vec2> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vec2>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 {
                let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                if cross(sub(b, a), sub(p, a)) <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Area centroid of a simple polygon (closing point optional).
pub fn polygon_centroid(poly: &[Vec2]) -> Vec2 {
    let pts = open_ring(poly);
    let mut a = 0.0;
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..pts.len() {
        let (p, q) = (pts[i], pts[(i + 1) % pts.len()]);
        let c = cross(p, q);
        a += c;
        cx += (p[0] + q[0]) * c;
        cy += (p[1] + q[1]) * c;
    }
    if a.abs() < 1e-12 {
        let n = pts.len() as f64;
        return [
            pts.iter().map(|p| p[0]).sum::<f64>() / n,
            pts.iter().map(|p| p[1]).sum::<f64>() / n,
        ];
    }
    [cx / (3.0 * a), cy / (3.0 * a)]
}

pub fn point_in_polygon(q: Vec2, poly: &[Vec2]) -> bool {
    let pts = open_ring(poly);
    let mut inside = false;
    let mut j = pts.len() - 1;
    for i in 0..pts.len() {
        let (a, b) = (pts[i], pts[j]);
        if (a[1] > q[1]) != (b[1] > q[1]) && q[0] < (b[0] - a[0]) * (q[1] - a[1]) / (b[1] - a[1]) + a[0] {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn open_ring(poly: &[Vec2]) -> &[Vec2] {
    if poly.len() > 1 && poly.first() == poly.last() {
        &poly[..poly.len() - 1]
    } else {
        poly
    }
}
