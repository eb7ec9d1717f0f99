//! Planar vectors and arc-length parameterised polylines.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Expresses `self` (a world point) in a frame at `origin` rotated by
    /// `heading`.
    pub fn to_frame(self, origin: Vec2, heading: f64) -> Vec2 {
        let d = self - origin;
        let (s, c) = heading.sin_cos();
        Vec2::new(c * d.x + s * d.y, -s * d.x + c * d.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut t = theta % TAU;
    if t <= -PI {
        t += TAU;
    } else if t > PI {
        t -= TAU;
    }
    t
}

/// Result of projecting a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the closest point.
    pub arc: f64,
    pub distance: f64,
    pub segment: usize,
}

/// Piecewise-linear path with cumulative arc lengths and a speed limit per
/// segment. Queries past either end extrapolate along the end segments.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Vec2>,
    cumulative: Vec<f64>,
    speed_limits: Vec<f64>,
}

impl Polyline {
    /// Builds a polyline, dropping consecutive duplicate points. Returns
    /// `None` if fewer than two distinct points remain or a speed limit list
    /// of the wrong length is given.
    pub fn new(points: Vec<Vec2>, speed_limits: Vec<f64>) -> Option<Self> {
        if points.len() != speed_limits.len() + 1 {
            return None;
        }
        let mut pts = Vec::with_capacity(points.len());
        let mut limits = Vec::with_capacity(speed_limits.len());
        for (i, p) in points.into_iter().enumerate() {
            if let Some(&last) = pts.last() {
                if p.distance(last) <= 1e-9 {
                    continue;
                }
                limits.push(speed_limits[i - 1]);
            }
            pts.push(p);
        }
        if pts.len() < 2 {
            return None;
        }
        let mut cumulative = Vec::with_capacity(pts.len());
        cumulative.push(0.0);
        for w in pts.windows(2) {
            let last = *cumulative.last().unwrap();
            cumulative.push(last + w[0].distance(w[1]));
        }
        Some(Self {
            points: pts,
            cumulative,
            speed_limits: limits,
        })
    }

    /// Polyline with a single speed limit on every segment.
    pub fn uniform(points: Vec<Vec2>, speed_limit: f64) -> Option<Self> {
        let n = points.len().saturating_sub(1);
        Self::new(points, vec![speed_limit; n])
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn speed_limits(&self) -> &[f64] {
        &self.speed_limits
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn segment_at(&self, arc: f64) -> usize {
        let n = self.points.len() - 1;
        if arc <= 0.0 {
            return 0;
        }
        // first cumulative > arc, minus one
        let idx = self.cumulative.partition_point(|&c| c <= arc);
        idx.saturating_sub(1).min(n - 1)
    }

    pub fn point_at(&self, arc: f64) -> Vec2 {
        let i = self.segment_at(arc);
        let a = self.points[i];
        let b = self.points[i + 1];
        let len = self.cumulative[i + 1] - self.cumulative[i];
        let t = (arc - self.cumulative[i]) / len;
        a + (b - a) * t
    }

    pub fn heading_at(&self, arc: f64) -> f64 {
        let i = self.segment_at(arc);
        (self.points[i + 1] - self.points[i]).angle()
    }

    pub fn speed_limit_at(&self, arc: f64) -> f64 {
        self.speed_limits[self.segment_at(arc)]
    }

    fn project_segment(&self, i: usize, p: Vec2) -> (f64, f64) {
        let a = self.points[i];
        let b = self.points[i + 1];
        let ab = b - a;
        let len = self.cumulative[i + 1] - self.cumulative[i];
        let t = ((p - a).dot(ab) / (len * len)).clamp(0.0, 1.0);
        let q = a + ab * t;
        (self.cumulative[i] + t * len, q.distance(p))
    }

    /// Closest point over the whole polyline (first segment wins ties).
    pub fn project(&self, p: Vec2) -> Projection {
        self.project_range(p, 0, self.points.len() - 1)
    }

    /// Closest point restricted to segments overlapping `[lo, hi]` in arc
    /// length, for paths that revisit the same area.
    pub fn project_window(&self, p: Vec2, lo: f64, hi: f64) -> Projection {
        let first = self.segment_at(lo);
        let last = self.segment_at(hi) + 1;
        self.project_range(p, first, last)
    }

    fn project_range(&self, p: Vec2, first: usize, end: usize) -> Projection {
        let mut best = Projection {
            arc: 0.0,
            distance: f64::INFINITY,
            segment: first,
        };
        for i in first..end {
            let (arc, d) = self.project_segment(i, p);
            if d < best.distance {
                best = Projection {
                    arc,
                    distance: d,
                    segment: i,
                };
            }
        }
        best
    }
}
