//! Closed boundary curves and graded Nyström meshes.
//!
//! Every curve is parametrized on `t in [0, 1]` and positively oriented.
//! Corner curves ("drops") start and end at the vertex, placed at the origin,
//! and coincide with the rays `theta = -alpha/2` and `theta = alpha/2` on
//! `r < R0`.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::dispersion::CornerAngle;
use crate::error::{Error, Result};
use crate::quad::{smoothstep, smoothstep_deriv, smoothstep_deriv2, GaussLegendre};

pub type Point = Vector2<f64>;

/// Fraction of the closing arc spent in each of its two blending turns.
const TURN_FRACTION: f64 = 0.2;
const TURN_NODES: usize = 30;

fn rot(angle: f64) -> Point {
    Point::new(angle.cos(), angle.sin())
}

/// Convex teardrop: two straight edges of length `r0` leaving the origin at
/// angles `-alpha/2` and `alpha/2`, closed by a C² arc. The arc makes two
/// smoothstep turns of `(pi + alpha)/2` each, joined by a straight stretch, so
/// the curvature vanishes where it meets the edges.
#[derive(Debug, Clone, PartialEq)]
pub struct DropCurve {
    alpha: f64,
    r0: f64,
    arc_len: f64,
    turn_end: Point,
}

impl DropCurve {
    fn build(alpha: f64, r0: f64) -> Result<Self> {
        if !(r0 > 0.0 && r0 < 1.0) {
            return Err(Error::InvalidParameter(format!("R0 = {r0} must lie in (0, 1)")));
        }
        let gl = GaussLegendre::new(TURN_NODES);
        let turn = 0.5 * (PI + alpha);
        let mean_sin = gl.integrate(0.0, 1.0, |u| (-0.5 * alpha + turn * smoothstep(u)).sin());
        let rise = 2.0 * TURN_FRACTION * mean_sin + (1.0 - 2.0 * TURN_FRACTION);
        let arc_len = 2.0 * r0 * (0.5 * alpha).sin() / rise;
        let mut drop = Self { alpha, r0, arc_len, turn_end: Point::zeros() };
        drop.turn_end = drop.turn_displacement(TURN_FRACTION * arc_len);
        Ok(drop)
    }

    /// Drop with a genuine corner of opening `alpha`.
    pub fn new(alpha: CornerAngle, r0: f64) -> Result<Self> {
        Self::build(alpha.radians(), r0)
    }

    /// The same construction with `alpha = pi`: a C² curve that is straight
    /// (hence smooth) through the origin. Used as a corner-free control.
    pub fn flat(r0: f64) -> Result<Self> {
        Self::build(PI, r0)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn is_flat(&self) -> bool {
        self.alpha == PI
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * self.r0 + self.arc_len
    }

    fn turn_scale(&self) -> f64 {
        0.5 * (PI + self.alpha)
    }

    /// Tangent angle along the closing arc, `sigma in [0, arc_len]`.
    fn tangent_angle(&self, sigma: f64) -> f64 {
        let fl = TURN_FRACTION * self.arc_len;
        let c = self.turn_scale();
        -0.5 * self.alpha
            + c * (smoothstep(sigma / fl) + smoothstep((sigma - (self.arc_len - fl)) / fl))
    }

    fn tangent_angle_deriv(&self, sigma: f64) -> f64 {
        let fl = TURN_FRACTION * self.arc_len;
        let c = self.turn_scale() / fl;
        c * (smoothstep_deriv(sigma / fl) + smoothstep_deriv((sigma - (self.arc_len - fl)) / fl))
    }

    fn tangent_angle_deriv2(&self, sigma: f64) -> f64 {
        let fl = TURN_FRACTION * self.arc_len;
        let c = self.turn_scale() / (fl * fl);
        c * (smoothstep_deriv2(sigma / fl) + smoothstep_deriv2((sigma - (self.arc_len - fl)) / fl))
    }

    /// `int_0^sigma e^{i psi}` for `sigma` within the first turn.
    fn turn_displacement(&self, sigma: f64) -> Point {
        let gl = GaussLegendre::new(TURN_NODES);
        gl.mapped(0.0, sigma)
            .map(|(s, w)| rot(self.tangent_angle(s)) * w)
            .sum()
    }

    fn arc_point(&self, sigma: f64) -> Point {
        let start = rot(-0.5 * self.alpha) * self.r0;
        let fl = TURN_FRACTION * self.arc_len;
        if sigma <= fl {
            start + self.turn_displacement(sigma)
        } else if sigma <= self.arc_len - fl {
            start + self.turn_end + Point::new(0.0, sigma - fl)
        } else {
            // second turn mirrors the first about the bisector
            let end = rot(0.5 * self.alpha) * self.r0;
            let back = self.turn_displacement(self.arc_len - sigma);
            end + Point::new(back.x, -back.y)
        }
    }

    /// Position, first and second derivative with respect to arclength `s`.
    fn eval_arclength(&self, s: f64) -> (Point, Point, Point) {
        let half = 0.5 * self.alpha;
        if s <= self.r0 {
            let d = rot(-half);
            (d * s, d, Point::zeros())
        } else if s < self.r0 + self.arc_len {
            let sigma = s - self.r0;
            let psi = self.tangent_angle(sigma);
            let dpsi = self.tangent_angle_deriv(sigma);
            let d = rot(psi);
            (self.arc_point(sigma), d, Point::new(-d.y, d.x) * dpsi)
        } else {
            let d = rot(half);
            (d * (self.perimeter() - s), -d, Point::zeros())
        }
    }

    /// Distance from the vertex to the boundary along the ray at angle
    /// `theta`, `|theta| <= alpha/2`.
    pub fn ray_radius(&self, theta: f64) -> f64 {
        let half = 0.5 * self.alpha;
        if theta.abs() >= half {
            return self.r0;
        }
        // The polar angle of the closing arc increases monotonically.
        let (mut lo, mut hi) = (0.0, self.arc_len);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            let p = self.arc_point(mid);
            if p.y.atan2(p.x) < theta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.arc_point(0.5 * (lo + hi)).norm()
    }

    /// Derivative of the tangent angle along the arc, exposed for curvature checks.
    pub fn curvature_slope(&self, s: f64) -> f64 {
        if s <= self.r0 || s >= self.r0 + self.arc_len {
            0.0
        } else {
            self.tangent_angle_deriv2(s - self.r0)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryCurve {
    Disk { radius: f64 },
    Ellipse { a: f64, b: f64 },
    Drop(DropCurve),
}

/// Descriptor for the smooth validation shapes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SmoothShape {
    Disk { r: f64 },
    Ellipse { a: f64, b: f64 },
}

pub fn build_corner_domain(alpha: f64, r0: f64) -> Result<BoundaryCurve> {
    let alpha = CornerAngle::new(alpha)?;
    Ok(BoundaryCurve::Drop(DropCurve::new(alpha, r0)?))
}

pub fn build_smooth_domain(kind: SmoothShape) -> Result<BoundaryCurve> {
    match kind {
        SmoothShape::Disk { r } if r > 0.0 && r.is_finite() => Ok(BoundaryCurve::Disk { radius: r }),
        SmoothShape::Ellipse { a, b } if b > 0.0 && a >= b && a.is_finite() => {
            Ok(BoundaryCurve::Ellipse { a, b })
        }
        other => Err(Error::InvalidParameter(format!("invalid smooth shape {other:?}"))),
    }
}

impl BoundaryCurve {
    /// `(p, dp/dt, d2p/dt2)` at parameter `t in [0, 1]`.
    pub fn eval(&self, t: f64) -> (Point, Point, Point) {
        match self {
            BoundaryCurve::Disk { radius } => {
                let u = rot(TAU * t);
                let du = Point::new(-u.y, u.x);
                (u * *radius, du * (TAU * radius), -u * (TAU * TAU * radius))
            }
            BoundaryCurve::Ellipse { a, b } => {
                let (s, c) = (TAU * t).sin_cos();
                (
                    Point::new(a * c, b * s),
                    Point::new(-a * s, b * c) * TAU,
                    Point::new(-a * c, -b * s) * (TAU * TAU),
                )
            }
            BoundaryCurve::Drop(d) => {
                let len = d.perimeter();
                let (p, dp, ddp) = d.eval_arclength(t * len);
                (p, dp * len, ddp * (len * len))
            }
        }
    }

    pub fn point(&self, t: f64) -> Point {
        self.eval(t).0
    }

    /// Outward unit normal (right of the tangent for a positively oriented curve).
    pub fn normal(&self, t: f64) -> Point {
        let (_, d, _) = self.eval(t);
        Point::new(d.y, -d.x) / d.norm()
    }

    /// Signed curvature, positive where the curve bends towards the interior.
    pub fn curvature(&self, t: f64) -> f64 {
        let (_, d, dd) = self.eval(t);
        (d.x * dd.y - d.y * dd.x) / d.norm().powi(3)
    }

    pub fn corner(&self) -> Option<CornerAngle> {
        match self {
            BoundaryCurve::Drop(d) if !d.is_flat() => CornerAngle::new(d.alpha).ok(),
            _ => None,
        }
    }

    /// Exact perimeter where available, otherwise adaptive quadrature.
    pub fn perimeter(&self) -> f64 {
        match self {
            BoundaryCurve::Disk { radius } => TAU * radius,
            BoundaryCurve::Drop(d) => d.perimeter(),
            BoundaryCurve::Ellipse { .. } => crate::quad::adaptive_gk(
                |t| self.eval(t).1.norm(),
                0.0,
                1.0,
                1e-14,
                1e-14,
                200,
            ),
        }
    }

    /// A point strictly inside the curve.
    pub fn interior_point(&self) -> Point {
        match self {
            BoundaryCurve::Disk { .. } | BoundaryCurve::Ellipse { .. } => Point::zeros(),
            BoundaryCurve::Drop(d) => Point::new(0.5 * d.r0 * (0.5 * d.alpha).cos().max(0.2), 0.0),
        }
    }

    /// Largest distance of the curve from the origin (sampled).
    pub fn max_radius(&self) -> f64 {
        (0..2048).map(|i| self.point(i as f64 / 2048.0).norm()).fold(0.0, f64::max)
    }

    pub fn sample(&self, n: usize) -> Vec<Point> {
        (0..n).map(|i| self.point(i as f64 / n as f64)).collect()
    }

    /// Winding number of the sampled closed polygon around `z`.
    pub fn winding_number(&self, z: Point, samples: usize) -> f64 {
        let pts = self.sample(samples);
        let mut total = 0.0;
        for i in 0..pts.len() {
            let a = pts[i] - z;
            let b = pts[(i + 1) % pts.len()] - z;
            total += (a.x * b.y - a.y * b.x).atan2(a.dot(&b));
        }
        total / TAU
    }

    /// Sampled self-intersection test over `samples` polygon segments.
    pub fn is_simple(&self, samples: usize) -> bool {
        let pts = self.sample(samples);
        let n = pts.len();
        for i in 0..n {
            let (p1, p2) = (pts[i], pts[(i + 1) % n]);
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (q1, q2) = (pts[j], pts[(j + 1) % n]);
                if segments_cross(p1, p2, q1, q2) {
                    return false;
                }
            }
        }
        true
    }

    /// Distance from the origin to the curve along the ray at `theta`.
    ///
    /// Disks and ellipses are centered at the origin; for drops the ray
    /// leaves the vertex and `theta` must lie in `[-alpha/2, alpha/2]`.
    pub fn ray_radius(&self, theta: f64) -> f64 {
        match self {
            BoundaryCurve::Disk { radius } => *radius,
            BoundaryCurve::Ellipse { a, b } => {
                let (s, c) = theta.sin_cos();
                1.0 / ((c / a).powi(2) + (s / b).powi(2)).sqrt()
            }
            BoundaryCurve::Drop(d) => d.ray_radius(theta),
        }
    }
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn segments_cross(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    let tol = 1e-10 * (p2 - p1).norm() * (q2 - q1).norm();
    let strictly = |a: f64, b: f64| (a < -tol && b > tol) || (a > tol && b < -tol);
    strictly(d1, d2) && strictly(d3, d4)
}

/// Nyström discretization of a boundary curve.
///
/// Nodes are equispaced in a periodic computational parameter `s`; for corner
/// curves `t = w(s)/(2 pi)` with `w(s) = 2 pi s^q / (s^q + (2 pi - s)^q)`,
/// which vanishes to order `q` at the vertex on both sides. Nodes sit at
/// `s_j = 2 pi (j + 1/2) / N`, so the vertex is never a node.
#[derive(Debug, Clone)]
pub struct BoundaryMesh {
    pub curve: BoundaryCurve,
    pub grading: f64,
    /// Computational parameter of each node in `[0, 2 pi)`.
    pub s: Vec<f64>,
    /// Curve parameter `t in [0, 1]` of each node.
    pub t: Vec<f64>,
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
    pub normals: Vec<Point>,
    pub curvature: Vec<f64>,
    /// `|dp/ds|` at each node.
    pub speed: Vec<f64>,
}

impl BoundaryMesh {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_graded(&self) -> bool {
        self.curve.corner().is_some()
    }

    /// Maps `s in [0, 2 pi]` to the curve parameter and `dt/ds`.
    pub fn param_map(&self, s: f64) -> (f64, f64) {
        grading_map(s, self.grading, self.is_graded())
    }

    /// Position, `dp/ds` and `d2p/ds2` at computational parameter `s`.
    pub fn eval_s(&self, s: f64) -> (Point, Point) {
        let (t, dt) = self.param_map(s);
        let (p, d, _) = self.curve.eval(t);
        (p, d * dt)
    }

    /// Arclength distance of node `i` from the vertex (along the shorter side).
    pub fn corner_distance(&self, i: usize) -> f64 {
        let len = self.curve.perimeter();
        let t = self.t[i];
        (t * len).min((1.0 - t) * len)
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

fn grading_map(s: f64, q: f64, graded: bool) -> (f64, f64) {
    if !graded || q == 1.0 {
        return (s / TAU, 1.0 / TAU);
    }
    let s = s.clamp(0.0, TAU);
    let a = s.powf(q);
    let b = (TAU - s).powf(q);
    let den = a + b;
    let w = TAU * a / den;
    // w' = 2 pi q (s^{q-1} b + a (2 pi - s)^{q-1}) / den^2
    let da = if s > 0.0 { q * s.powf(q - 1.0) } else { 0.0 };
    let db = if s < TAU { q * (TAU - s).powf(q - 1.0) } else { 0.0 };
    let dw = TAU * (da * b + a * db) / (den * den);
    (w / TAU, dw / TAU)
}

pub fn graded_mesh(curve: &BoundaryCurve, n: usize, grading: f64) -> Result<BoundaryMesh> {
    if n < 16 || n % 2 != 0 {
        return Err(Error::InvalidParameter(format!("node count {n} must be even and >= 16")));
    }
    if !(1.0..=6.0).contains(&grading) {
        return Err(Error::InvalidParameter(format!("grading {grading} outside [1, 6]")));
    }
    let graded = curve.corner().is_some();
    let h = TAU / n as f64;
    let mut mesh = BoundaryMesh {
        curve: curve.clone(),
        grading,
        s: Vec::with_capacity(n),
        t: Vec::with_capacity(n),
        nodes: Vec::with_capacity(n),
        weights: Vec::with_capacity(n),
        normals: Vec::with_capacity(n),
        curvature: Vec::with_capacity(n),
        speed: Vec::with_capacity(n),
    };
    for j in 0..n {
        let s = if graded { h * (j as f64 + 0.5) } else { h * j as f64 };
        let (t, dt) = grading_map(s, grading, graded);
        let (p, d, dd) = curve.eval(t);
        let speed = d.norm() * dt;
        mesh.s.push(s);
        mesh.t.push(t);
        mesh.nodes.push(p);
        mesh.weights.push(h * speed);
        mesh.normals.push(Point::new(d.y, -d.x) / d.norm());
        mesh.curvature.push((d.x * dd.y - d.y * dd.x) / d.norm().powi(3));
        mesh.speed.push(speed);
    }
    Ok(mesh)
}

/// Outward unit normal of a smooth curve at an angle, for reference checks.
pub fn disk_normal(p: Point) -> Point {
    p / p.norm()
}
