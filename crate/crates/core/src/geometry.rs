//! Planar geometry shared by the simulator, planners and metrics.
//!
//! Conventions: x forward / y left, headings counter-clockwise in radians,
//! lateral Frenet offsets positive to the left of the reference line.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point or arc length lies outside the polyline's projection domain")]
    OutOfDomain,
    #[error("boundary-value system is singular (duration {0})")]
    SingularSystem(f64),
    #[error("polyline needs at least two distinct points")]
    DegeneratePolyline,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Self) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Self) -> f64 {
        (self - o).norm()
    }

    /// Counter-clockwise rotation.
    pub fn rotate(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Left-hand perpendicular.
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        if n == 0.0 {
            self
        } else {
            self * (1.0 / n)
        }
    }

    pub fn lerp(self, o: Self, t: f64) -> Self {
        self + (o - self) * t
    }
}

impl Add for Point2 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Point2 {
    fn add_assign(&mut self, o: Self) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Point2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self::new(self.x * k, self.y * k)
    }
}

impl Neg for Point2 {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Wraps an angle into (−π, π].
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    /// Maps a world point into this pose's local frame.
    pub fn to_local(&self, p: Point2) -> Point2 {
        (p - self.position()).rotate(-self.heading)
    }

    /// Maps a local point into the world frame.
    pub fn to_world(&self, p: Point2) -> Point2 {
        p.rotate(self.heading) + self.position()
    }
}

/// Signed curvature of the circle through three points; 0 when degenerate.
pub fn three_point_curvature(a: Point2, b: Point2, c: Point2) -> f64 {
    let ab = b - a;
    let bc = c - b;
    let ac = c - a;
    let denom = ab.norm() * bc.norm() * ac.norm();
    if denom <= 1e-12 {
        return 0.0;
    }
    2.0 * ab.cross(bc) / denom
}

/// Piecewise-linear reference line with arc-length parameterization.
///
/// Normals are interpolated linearly along each segment between vertex
/// normals (bisectors at interior vertices), which makes the Frenet map
/// continuous and exactly invertible near the line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point2>", into = "Vec<Point2>")]
pub struct Polyline {
    points: Vec<Point2>,
    cum_s: Vec<f64>,
    normals: Vec<Point2>,
}

impl TryFrom<Vec<Point2>> for Polyline {
    type Error = GeometryError;
    fn try_from(points: Vec<Point2>) -> Result<Self, Self::Error> {
        Polyline::new(points)
    }
}

impl From<Polyline> for Vec<Point2> {
    fn from(p: Polyline) -> Self {
        p.points
    }
}

impl Polyline {
    pub fn new(points: Vec<Point2>) -> Result<Self, GeometryError> {
        if points.len() < 2 {
            return Err(GeometryError::DegeneratePolyline);
        }
        let mut cum_s = Vec::with_capacity(points.len());
        cum_s.push(0.0);
        for w in points.windows(2) {
            let len = w[0].distance(w[1]);
            if len <= 1e-12 {
                return Err(GeometryError::DegeneratePolyline);
            }
            cum_s.push(cum_s.last().unwrap() + len);
        }
        let seg_normals: Vec<Point2> = points.windows(2).map(|w| (w[1] - w[0]).normalized().perp()).collect();
        let mut normals = Vec::with_capacity(points.len());
        normals.push(seg_normals[0]);
        for i in 1..points.len() - 1 {
            let n = (seg_normals[i - 1] + seg_normals[i]).normalized();
            normals.push(if n.norm() == 0.0 { seg_normals[i] } else { n });
        }
        normals.push(*seg_normals.last().unwrap());
        Ok(Self { points, cum_s, normals })
    }

    pub fn straight(from: Point2, to: Point2) -> Result<Self, GeometryError> {
        Self::new(vec![from, to])
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        *self.cum_s.last().unwrap()
    }

    fn normal_at(&self, seg: usize, u: f64) -> Point2 {
        self.normals[seg].lerp(self.normals[seg + 1], u).normalized()
    }

    fn segment_of(&self, s: f64) -> usize {
        let n = self.points.len() - 1;
        match self
            .cum_s
            .binary_search_by(|v| v.partial_cmp(&s).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i.min(n - 1),
            Err(i) => i.saturating_sub(1).min(n - 1),
        }
    }

    /// Projects a point to (arc length, signed lateral offset).
    pub fn to_frenet(&self, p: Point2) -> Result<(f64, f64), GeometryError> {
        const EPS: f64 = 1e-9;
        let mut best: Option<(f64, f64)> = None;
        for seg in 0..self.points.len() - 1 {
            let a = self.points[seg];
            let d = self.points[seg + 1] - a;
            let n0 = self.normals[seg];
            let dn = self.normals[seg + 1] - n0;
            let q = p - a;
            // cross(q - u d, n0 + u dn) = 0
            let qa = -d.cross(dn);
            let qb = q.cross(dn) - d.cross(n0);
            let qc = q.cross(n0);
            for u in quadratic_roots(qa, qb, qc) {
                if !(-EPS..=1.0 + EPS).contains(&u) {
                    continue;
                }
                let u = u.clamp(0.0, 1.0);
                let base = a + d * u;
                let off = (p - base).dot(self.normal_at(seg, u));
                let s = self.cum_s[seg] + u * (self.cum_s[seg + 1] - self.cum_s[seg]);
                if best.is_none_or(|(_, bd)| off.abs() < bd.abs()) {
                    best = Some((s, off));
                }
            }
        }
        best.ok_or(GeometryError::OutOfDomain)
    }

    pub fn from_frenet(&self, s: f64, d: f64) -> Result<Point2, GeometryError> {
        let len = self.length();
        if !s.is_finite() || s < -1e-9 || s > len + 1e-9 {
            return Err(GeometryError::OutOfDomain);
        }
        let s = s.clamp(0.0, len);
        let seg = self.segment_of(s);
        let u = (s - self.cum_s[seg]) / (self.cum_s[seg + 1] - self.cum_s[seg]);
        let a = self.points[seg];
        let b = self.points[seg + 1];
        Ok(a.lerp(b, u) + self.normal_at(seg, u) * d)
    }

    /// Tangent heading of the Frenet frame at arc length `s` (clamped).
    pub fn heading_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.length());
        let seg = self.segment_of(s);
        let u = (s - self.cum_s[seg]) / (self.cum_s[seg + 1] - self.cum_s[seg]);
        let n = self.normal_at(seg, u);
        n.y.atan2(n.x) - PI / 2.0
    }

    pub fn point_at(&self, s: f64) -> Point2 {
        let s = s.clamp(0.0, self.length());
        let seg = self.segment_of(s);
        let u = (s - self.cum_s[seg]) / (self.cum_s[seg + 1] - self.cum_s[seg]);
        self.points[seg].lerp(self.points[seg + 1], u)
    }

    /// Curvature at interior vertex `i` from the circumscribed circle.
    pub fn curvature_at_vertex(&self, i: usize) -> f64 {
        if i == 0 || i + 1 >= self.points.len() {
            return 0.0;
        }
        three_point_curvature(self.points[i - 1], self.points[i], self.points[i + 1])
    }

    /// Distance from `p` to the nearest point of the polyline.
    pub fn distance_to(&self, p: Point2) -> f64 {
        self.points
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
    }
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return vec![0.0];
    }
    if a.abs() <= 1e-14 * scale {
        if b.abs() <= 1e-14 * scale {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    let mut roots = Vec::with_capacity(2);
    if q != 0.0 {
        roots.push(c / q);
    }
    roots.push(q / a);
    roots
}

pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// Rectangle with a center, heading, and full side lengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedRect {
    pub center: Point2,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedRect {
    pub fn new(center: Point2, heading: f64, length: f64, width: f64) -> Self {
        Self {
            center,
            heading,
            length,
            width,
        }
    }

    pub fn axis_aligned(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self::new(
            Point2::new(0.5 * (x_min + x_max), 0.5 * (y_min + y_max)),
            0.0,
            x_max - x_min,
            y_max - y_min,
        )
    }

    fn axes(&self) -> (Point2, Point2) {
        let u = Point2::new(self.heading.cos(), self.heading.sin());
        (u, u.perp())
    }

    pub fn corners(&self) -> [Point2; 4] {
        let (u, v) = self.axes();
        let hl = u * (0.5 * self.length);
        let hw = v * (0.5 * self.width);
        let c = self.center;
        [c + hl + hw, c - hl + hw, c - hl - hw, c + hl - hw]
    }

    pub fn to_local(&self, p: Point2) -> Point2 {
        (p - self.center).rotate(-self.heading)
    }

    /// Closed containment (boundary counts as inside).
    pub fn contains(&self, p: Point2) -> bool {
        let l = self.to_local(p);
        l.x.abs() <= 0.5 * self.length && l.y.abs() <= 0.5 * self.width
    }

    /// Strict interior containment.
    pub fn contains_strict(&self, p: Point2) -> bool {
        let l = self.to_local(p);
        l.x.abs() < 0.5 * self.length && l.y.abs() < 0.5 * self.width
    }

    /// Euclidean distance from `p` to the rectangle (0 inside).
    pub fn distance_to(&self, p: Point2) -> f64 {
        let l = self.to_local(p);
        let dx = (l.x.abs() - 0.5 * self.length).max(0.0);
        let dy = (l.y.abs() - 0.5 * self.width).max(0.0);
        dx.hypot(dy)
    }

    /// Axis-aligned bounds `(x_min, y_min, x_max, y_max)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let cs = self.corners();
        let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for c in cs {
            b.0 = b.0.min(c.x);
            b.1 = b.1.min(c.y);
            b.2 = b.2.max(c.x);
            b.3 = b.3.max(c.y);
        }
        b
    }
}

/// Axis-aligned box; used for detections in the ego frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Aabb {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn from_center(c: Point2, w: f64, h: f64) -> Self {
        Self::new(c.x - 0.5 * w, c.y - 0.5 * h, c.x + 0.5 * w, c.y + 0.5 * h)
    }

    pub fn of_rect(r: &OrientedRect) -> Self {
        let (a, b, c, d) = r.bounds();
        Self::new(a, b, c, d)
    }

    pub fn width(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y_max - self.y_min).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point2 {
        Point2::new(0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    pub fn intersection_area(&self, o: &Aabb) -> f64 {
        let w = self.x_max.min(o.x_max) - self.x_min.max(o.x_min);
        let h = self.y_max.min(o.y_max) - self.y_min.max(o.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn translate(&self, d: Point2) -> Self {
        Self::new(self.x_min + d.x, self.y_min + d.y, self.x_max + d.x, self.y_max + d.y)
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }
}

/// Segment–rectangle intersection; boundary contact (including grazing a
/// corner) counts as intersecting.
pub fn seg_rect_intersect(a: Point2, b: Point2, rect: &OrientedRect) -> bool {
    let p0 = rect.to_local(a);
    let p1 = rect.to_local(b);
    let d = p1 - p0;
    let hl = 0.5 * rect.length;
    let hw = 0.5 * rect.width;
    // Liang-Barsky clipping against the closed box.
    let mut t0 = 0.0_f64;
    let mut t1 = 1.0_f64;
    for (p, q) in [(-d.x, p0.x + hl), (d.x, hl - p0.x), (-d.y, p0.y + hw), (d.y, hw - p0.y)] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

/// Separating-axis overlap test; requires strictly positive overlap, so
/// rectangles that only touch do not overlap.
pub fn rect_rect_overlap(a: &OrientedRect, b: &OrientedRect) -> bool {
    let ca = a.corners();
    let cb = b.corners();
    let (ua, va) = a.axes();
    let (ub, vb) = b.axes();
    for axis in [ua, va, ub, vb] {
        let (amin, amax) = project(&ca, axis);
        let (bmin, bmax) = project(&cb, axis);
        if amax <= bmin || bmax <= amin {
            return false;
        }
    }
    true
}

fn project(pts: &[Point2; 4], axis: Point2) -> (f64, f64) {
    pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let v = p.dot(axis);
        (lo.min(v), hi.max(v))
    })
}

/// Quintic polynomial matching position, velocity and acceleration at both
/// ends of `[0, duration]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuinticPoly {
    pub coeffs: [f64; 6],
}

impl QuinticPoly {
    pub fn new(start: (f64, f64, f64), end: (f64, f64, f64), duration: f64) -> Result<Self, GeometryError> {
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(GeometryError::SingularSystem(duration));
        }
        let (x0, v0, a0) = start;
        let (x1, v1, a1) = end;
        let t = duration;
        let (t2, t3) = (t * t, t * t * t);
        let dx = x1 - x0;
        let c3 = (20.0 * dx - (8.0 * v1 + 12.0 * v0) * t - (3.0 * a0 - a1) * t2) / (2.0 * t3);
        let c4 = (-30.0 * dx + (14.0 * v1 + 16.0 * v0) * t + (3.0 * a0 - 2.0 * a1) * t2) / (2.0 * t3 * t);
        let c5 = (12.0 * dx - 6.0 * (v1 + v0) * t + (a1 - a0) * t2) / (2.0 * t3 * t2);
        Ok(Self {
            coeffs: [x0, v0, 0.5 * a0, c3, c4, c5],
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        poly_eval(&self.coeffs, t)
    }
    pub fn d1(&self, t: f64) -> f64 {
        poly_deriv(&self.coeffs, t, 1)
    }
    pub fn d2(&self, t: f64) -> f64 {
        poly_deriv(&self.coeffs, t, 2)
    }
    pub fn d3(&self, t: f64) -> f64 {
        poly_deriv(&self.coeffs, t, 3)
    }
}

/// Quartic polynomial for velocity keeping: matches start position,
/// velocity and acceleration plus end velocity and acceleration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuarticPoly {
    pub coeffs: [f64; 5],
}

impl QuarticPoly {
    pub fn new(start: (f64, f64, f64), end: (f64, f64), duration: f64) -> Result<Self, GeometryError> {
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(GeometryError::SingularSystem(duration));
        }
        let (x0, v0, a0) = start;
        let (v1, a1) = end;
        let t = duration;
        let t2 = t * t;
        let b1 = v1 - v0 - a0 * t;
        let b2 = a1 - a0;
        let det = 12.0 * t2 * t2;
        let c3 = (12.0 * t2 * b1 - 4.0 * t2 * t * b2) / det;
        let c4 = (3.0 * t2 * b2 - 6.0 * t * b1) / det;
        Ok(Self {
            coeffs: [x0, v0, 0.5 * a0, c3, c4],
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        poly_eval(&self.coeffs, t)
    }
    pub fn d1(&self, t: f64) -> f64 {
        poly_deriv(&self.coeffs, t, 1)
    }
    pub fn d2(&self, t: f64) -> f64 {
        poly_deriv(&self.coeffs, t, 2)
    }
    pub fn d3(&self, t: f64) -> f64 {
        poly_deriv(&self.coeffs, t, 3)
    }
}

fn poly_eval(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * t + k)
}

fn poly_deriv(c: &[f64], t: f64, order: u32) -> f64 {
    c.iter().enumerate().skip(order as usize).rev().fold(0.0, |acc, (i, &k)| {
        let falling: f64 = (0..order).map(|j| (i as u32 - j) as f64).product();
        acc * t + k * falling
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_angle_range() {
        assert_eq!(normalize_angle(PI), PI);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-15);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(0.5 - 4.0 * PI) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn frenet_on_line_and_left() {
        let pl = Polyline::straight(Point2::new(0.0, 0.0), Point2::new(10.0, 0.0)).unwrap();
        let (s, d) = pl.to_frenet(Point2::new(3.0, 0.0)).unwrap();
        assert!((s - 3.0).abs() < 1e-12 && d.abs() < 1e-12);
        let (s, d) = pl.to_frenet(Point2::new(4.0, 1.0)).unwrap();
        assert!((s - 4.0).abs() < 1e-12);
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frenet_out_of_domain() {
        let pl = Polyline::straight(Point2::new(0.0, 0.0), Point2::new(10.0, 0.0)).unwrap();
        assert_eq!(pl.to_frenet(Point2::new(-5.0, 0.0)), Err(GeometryError::OutOfDomain));
        assert_eq!(pl.from_frenet(11.0, 0.0), Err(GeometryError::OutOfDomain));
        assert!(Polyline::new(vec![Point2::new(0.0, 0.0)]).is_err());
    }

    #[test]
    fn quarter_circle_round_trip() {
        // Analytic circle of radius 20 sampled at 0.1 m arc spacing.
        let r = 20.0;
        let n = (r * PI / 2.0 / 0.1).round() as usize;
        let pts: Vec<Point2> = (0..=n)
            .map(|i| {
                let a = i as f64 / n as f64 * PI / 2.0;
                Point2::new(r * a.cos(), r * a.sin())
            })
            .collect();
        let pl = Polyline::new(pts).unwrap();
        let mut worst: f64 = 0.0;
        for k in 1..50 {
            let a = k as f64 / 50.0 * PI / 2.0;
            for rr in [18.5, 19.3, 20.0, 20.7, 21.5] {
                let p = Point2::new(rr * a.cos(), rr * a.sin());
                let (s, d) = pl.to_frenet(p).unwrap();
                // inside of the circle is to the left of a CCW traversal
                assert!((d - (r - rr)).abs() < 2e-3, "d={d} rr={rr}");
                let back = pl.from_frenet(s, d).unwrap();
                worst = worst.max(back.distance(p));
            }
        }
        assert!(worst <= 1e-6, "worst round trip error {worst}");
    }

    #[test]
    fn quintic_unit_step() {
        let q = QuinticPoly::new((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), 1.0).unwrap();
        let expected = [0.0, 0.0, 0.0, 10.0, -15.0, 6.0];
        for (c, e) in q.coeffs.iter().zip(expected) {
            assert!((c - e).abs() < 1e-12);
        }
        let z = QuinticPoly::new((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), 2.0).unwrap();
        assert!(z.coeffs.iter().all(|c| *c == 0.0));
        assert!(QuinticPoly::new((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn quintic_boundary_conditions() {
        let t = 3.7;
        let q = QuinticPoly::new((1.5, -0.4, 0.3), (-2.0, 0.7, -0.1), t).unwrap();
        assert!((q.eval(0.0) - 1.5).abs() < 1e-9);
        assert!((q.d1(0.0) + 0.4).abs() < 1e-9);
        assert!((q.d2(0.0) - 0.3).abs() < 1e-9);
        assert!((q.eval(t) + 2.0).abs() < 1e-9);
        assert!((q.d1(t) - 0.7).abs() < 1e-9);
        assert!((q.d2(t) + 0.1).abs() < 1e-9);
    }

    #[test]
    fn quartic_boundary_conditions() {
        let t = 2.3;
        let q = QuarticPoly::new((4.0, 10.0, 0.5), (12.0, 0.0), t).unwrap();
        assert!((q.eval(0.0) - 4.0).abs() < 1e-9);
        assert!((q.d1(0.0) - 10.0).abs() < 1e-9);
        assert!((q.d2(0.0) - 0.5).abs() < 1e-9);
        assert!((q.d1(t) - 12.0).abs() < 1e-9);
        assert!(q.d2(t).abs() < 1e-9);
        assert!(QuarticPoly::new((0.0, 0.0, 0.0), (1.0, 0.0), -1.0).is_err());
    }

    #[test]
    fn segment_rectangle_cases() {
        let r = OrientedRect::axis_aligned(-1.0, -1.0, 1.0, 1.0);
        assert!(seg_rect_intersect(Point2::new(-5.0, 0.0), Point2::new(5.0, 0.0), &r));
        assert!(!seg_rect_intersect(Point2::new(-5.0, 2.0), Point2::new(5.0, 2.0), &r));
        // grazing a corner counts
        assert!(seg_rect_intersect(Point2::new(0.0, 2.0), Point2::new(2.0, 0.0), &r));
        // segment ending before the rectangle
        assert!(!seg_rect_intersect(Point2::new(-5.0, 0.0), Point2::new(-1.5, 0.0), &r));
    }

    #[test]
    fn rectangle_overlap_cases() {
        let a = OrientedRect::axis_aligned(0.0, 0.0, 2.0, 1.0);
        let far = OrientedRect::axis_aligned(100.0, 0.0, 102.0, 1.0);
        let touch = OrientedRect::axis_aligned(2.0, 0.0, 4.0, 1.0);
        assert!(!rect_rect_overlap(&a, &far));
        assert!(rect_rect_overlap(&a, &a));
        assert!(!rect_rect_overlap(&a, &touch));
    }

    #[test]
    fn rotated_overlap_matches_sampling_oracle() {
        use rand::{Rng, SeedableRng};
        let a = OrientedRect::new(Point2::new(0.0, 0.0), PI / 4.0, 4.0, 2.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for case in 0..40 {
            let b = OrientedRect::new(
                Point2::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)),
                rng.random_range(-PI..PI),
                rng.random_range(0.5..3.0),
                rng.random_range(0.5..3.0),
            );
            // Monte-Carlo oracle: any sample strictly inside both rectangles.
            let mut hit = false;
            for _ in 0..10_000 {
                let p = Point2::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0));
                if a.contains_strict(p) && b.contains_strict(p) {
                    hit = true;
                    break;
                }
            }
            let sat = rect_rect_overlap(&a, &b);
            // Sampling can miss slivers; it can never report a false hit.
            if hit {
                assert!(sat, "case {case}: oracle saw overlap");
            }
            if sat && !hit {
                // verify sliver: shrink-test with a finer local grid
                let mut fine = false;
                let (x0, y0, x1, y1) = b.bounds();
                for i in 0..400 {
                    for j in 0..400 {
                        let p = Point2::new(x0 + (x1 - x0) * (i as f64 + 0.5) / 400.0, y0 + (y1 - y0) * (j as f64 + 0.5) / 400.0);
                        if a.contains_strict(p) && b.contains_strict(p) {
                            fine = true;
                        }
                    }
                }
                assert!(fine, "case {case}: SAT overlap not confirmed");
            }
        }
    }

    #[test]
    fn constructed_45_degree_overlap() {
        let a = OrientedRect::new(Point2::new(0.0, 0.0), PI / 4.0, 2.0, 2.0);
        let b = OrientedRect::new(Point2::new(1.2, 0.0), PI / 4.0, 2.0, 2.0);
        assert!(rect_rect_overlap(&a, &b));
        let c = OrientedRect::new(Point2::new(2.0 * 2f64.sqrt(), 0.0), PI / 4.0, 2.0, 2.0);
        assert!(!rect_rect_overlap(&a, &c));
    }
}
