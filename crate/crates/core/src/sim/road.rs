//! Road geometry: a straight road along the x axis or a waypoint polyline.

use std::f64::consts::PI;

use thiserror::Error;

use crate::ir::Waypoint;

/// Lane half-width, meters. Road departure beyond this counts as leaving
/// the road.
pub const LANE_HALF_WIDTH: f64 = 1.75;

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    if !a.is_finite() {
        return a;
    }
    let two_pi = 2.0 * PI;
    let mut r = a - two_pi * ((a + PI) / two_pi).floor();
    if r <= -PI {
        r += two_pi;
    }
    if r > PI {
        r -= two_pi;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length along the road to the foot point.
    pub station: f64,
    /// Signed lateral offset, positive to the left of the direction of travel.
    pub cross_track: f64,
    pub segment: usize,
    /// True once the point lies past the final waypoint.
    pub beyond_end: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Waypoint>,
    /// Cumulative arc length at each waypoint.
    stations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PathError {
    #[error("path needs at least two waypoints")]
    TooShort,
    #[error("line {line}: {message}")]
    BadRow { line: usize, message: String },
    #[error("consecutive waypoints {0} and {1} coincide")]
    Degenerate(usize, usize),
}

impl Polyline {
    pub fn new(points: Vec<Waypoint>) -> Result<Self, PathError> {
        if points.len() < 2 {
            return Err(PathError::TooShort);
        }
        let mut stations = vec![0.0];
        for i in 1..points.len() {
            let d = (points[i].x - points[i - 1].x).hypot(points[i].y - points[i - 1].y);
            if d == 0.0 {
                return Err(PathError::Degenerate(i - 1, i));
            }
            stations.push(stations[i - 1] + d);
        }
        Ok(Polyline { points, stations })
    }

    pub fn points(&self) -> &[Waypoint] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        *self.stations.last().expect("non-empty")
    }

    fn project_segment(&self, i: usize, x: f64, y: f64) -> (f64, Projection) {
        let a = self.points[i];
        let b = self.points[i + 1];
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let len2 = dx * dx + dy * dy;
        let raw = ((x - a.x) * dx + (y - a.y) * dy) / len2;
        let last = i + 2 == self.points.len();
        let u = if last { raw.max(0.0) } else { raw.clamp(0.0, 1.0) };
        let (fx, fy) = (a.x + u * dx, a.y + u * dy);
        let len = len2.sqrt();
        let cross = (dx * (y - a.y) - dy * (x - a.x)) / len;
        let dist2 = (x - fx).powi(2) + (y - fy).powi(2);
        let proj = Projection {
            station: self.stations[i] + u * len,
            cross_track: if u == raw || (0.0..=1.0).contains(&raw) {
                cross
            } else {
                // Foot point clamped to a vertex: use the signed distance.
                cross.signum() * dist2.sqrt()
            },
            segment: i,
            beyond_end: last && raw > 1.0,
        };
        (dist2, proj)
    }

    /// Projects a point onto the nearest segment. `hint` restricts the search
    /// to a window around a previously found segment.
    pub fn project(&self, x: f64, y: f64, hint: Option<usize>) -> Projection {
        let nseg = self.points.len() - 1;
        let (lo, hi) = match hint {
            Some(h) => (h.saturating_sub(20), (h + 21).min(nseg)),
            None => (0, nseg),
        };
        let mut best: Option<(f64, Projection)> = None;
        for i in lo..hi {
            let cand = self.project_segment(i, x, y);
            if best.as_ref().map_or(true, |b| cand.0 < b.0) {
                best = Some(cand);
            }
        }
        best.expect("at least one segment").1
    }
}

/// Parses a path CSV with header `x,y,heading`.
pub fn parse_path_csv(text: &str) -> Result<Vec<Waypoint>, PathError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.replace(' ', "") == "x,y,heading") {
            continue;
        }
        let cols: Vec<_> = line.split(',').map(str::trim).collect();
        let bad = |message: String| PathError::BadRow {
            line: line_no,
            message,
        };
        if cols.len() != 3 {
            return Err(bad(format!("expected 3 columns, found {}", cols.len())));
        }
        let nums = cols
            .iter()
            .map(|c| c.parse::<f64>().map_err(|e| bad(format!("{c:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if !nums.iter().all(|v| v.is_finite()) {
            return Err(bad("non-finite value".into()));
        }
        if !(nums[2] > -PI && nums[2] <= PI) {
            return Err(bad(format!("heading {} outside (-pi, pi]", nums[2])));
        }
        rows.push(Waypoint {
            x: nums[0],
            y: nums[1],
            heading: nums[2],
        });
    }
    Ok(rows)
}

pub fn path_to_csv(points: &[Waypoint]) -> String {
    let mut out = String::from("x,y,heading\n");
    for w in points {
        out.push_str(&format!("{},{},{}\n", w.x, w.y, w.heading));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum Road {
    /// Centerline along +x through the origin.
    Straight,
    Path(Polyline),
}

impl Road {
    pub fn project(&self, x: f64, y: f64, hint: Option<usize>) -> Projection {
        match self {
            Road::Straight => Projection {
                station: x,
                cross_track: y,
                segment: 0,
                beyond_end: false,
            },
            Road::Path(p) => p.project(x, y, hint),
        }
    }

    /// Starting pose at the beginning of the road.
    pub fn start_pose(&self) -> (f64, f64, f64) {
        match self {
            Road::Straight => (0.0, 0.0, 0.0),
            Road::Path(p) => {
                let w = p.points()[0];
                (w.x, w.y, w.heading)
            }
        }
    }
}
