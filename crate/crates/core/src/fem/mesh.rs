//! Triangulations of the disk `Omega` with an inclusion `D`, built from mapped
//! polar grids, plus a small text format for external meshes.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryCurve, DropCurve, Point};
use crate::quad::smoothstep;

/// Shapes of the inclusion `D` inside `Omega = disk(big_r)` centered at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FemGeometry {
    DiskInDisk { r: f64, big_r: f64 },
    EllipseInDisk { a: f64, b: f64, big_r: f64 },
    /// Drop with its vertex at the origin. `alpha = pi` gives the flat drop.
    DropInDisk { alpha: f64, r0: f64, big_r: f64 },
}

/// Resolution controls for the polar generator. Unset fields are derived
/// from `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarOptions {
    pub h: f64,
    pub dtheta: Option<f64>,
    /// Target `Delta ln r` of the geometric grading towards a drop's vertex.
    pub log_step: Option<f64>,
    /// Radius of the first ring around a drop's vertex.
    pub r_min: Option<f64>,
}

impl PolarOptions {
    pub fn with_h(h: f64) -> Self {
        PolarOptions { h, dtheta: None, log_step: None, r_min: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FemMesh {
    pub nodes: Vec<Point>,
    pub tris: Vec<[usize; 3]>,
    /// Whether each triangle belongs to `D`.
    pub in_d: Vec<bool>,
    /// Nodes on the outer boundary, where the Dirichlet condition holds.
    pub dirichlet: Vec<bool>,
}

/// Role of a node with respect to the inclusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRegion {
    Exterior,
    Inside,
    Interface,
}

impl NodeRegion {
    fn flag(self) -> u8 {
        match self {
            NodeRegion::Exterior => 0,
            NodeRegion::Inside => 1,
            NodeRegion::Interface => 2,
        }
    }
}

impl FemMesh {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn interior_count(&self) -> usize {
        self.dirichlet.iter().filter(|&&d| !d).count()
    }

    /// Classifies nodes by the regions of the triangles that contain them.
    pub fn node_regions(&self) -> Vec<NodeRegion> {
        let mut touches_d = vec![false; self.nodes.len()];
        let mut touches_e = vec![false; self.nodes.len()];
        for (t, &d) in self.tris.iter().zip(&self.in_d) {
            for &v in t {
                if d {
                    touches_d[v] = true;
                } else {
                    touches_e[v] = true;
                }
            }
        }
        touches_d
            .iter()
            .zip(&touches_e)
            .map(|(&d, &e)| match (d, e) {
                (true, true) => NodeRegion::Interface,
                (true, false) => NodeRegion::Inside,
                _ => NodeRegion::Exterior,
            })
            .collect()
    }

    pub fn tri_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.tris[t];
        let (p, q, r) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        0.5 * ((q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if self.in_d.len() != self.tris.len() || self.dirichlet.len() != n {
            return Err(Error::MeshGenerationFailure("inconsistent array lengths".into()));
        }
        for (i, t) in self.tris.iter().enumerate() {
            if t.iter().any(|&v| v >= n) {
                return Err(Error::MeshGenerationFailure(format!("triangle {i} has an invalid vertex")));
            }
            if !(self.tri_area(i) > 0.0) {
                return Err(Error::MeshGenerationFailure(format!(
                    "triangle {i} is degenerate or clockwise"
                )));
            }
        }
        if !self.in_d.iter().any(|&d| d) {
            return Err(Error::MeshGenerationFailure("mesh has no inclusion triangles".into()));
        }
        Ok(())
    }

    /// Serializes to the text format read by [`parse_mesh`].
    pub fn to_text(&self) -> String {
        let regions = self.node_regions();
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.nodes.len(), self.tris.len());
        for (i, p) in self.nodes.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:.17e} {:.17e} {} {}",
                p.x,
                p.y,
                regions[i].flag(),
                u8::from(self.dirichlet[i])
            );
        }
        for (t, &d) in self.tris.iter().zip(&self.in_d) {
            let _ = writeln!(out, "{} {} {} {}", t[0], t[1], t[2], u8::from(d));
        }
        out
    }
}

fn parse_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Parse { line, reason: reason.into() }
}

fn fields<'a>(line: &'a str, count: usize, lineno: usize) -> Result<Vec<&'a str>> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != count {
        return Err(parse_err(lineno, format!("expected {count} fields, found {}", parts.len())));
    }
    Ok(parts)
}

fn parse_num<T: std::str::FromStr>(s: &str, lineno: usize, what: &str) -> Result<T> {
    s.parse().map_err(|_| parse_err(lineno, format!("invalid {what} {s:?}")))
}

/// Reads a mesh: a header `N_nodes N_tris`, node lines
/// `x y region_flag boundary_flag`, then triangle lines `i j k region`.
/// Indices are zero-based; blank lines and `#` comments are skipped.
/// Node region flags (0 exterior, 1 inside, 2 interface) are checked against
/// the triangle regions; clockwise triangles are reoriented.
pub fn parse_mesh(text: &str) -> Result<FemMesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "empty mesh file"))?;
    let h = fields(header, 2, hl)?;
    let n_nodes: usize = parse_num(h[0], hl, "node count")?;
    let n_tris: usize = parse_num(h[1], hl, "triangle count")?;
    if n_nodes < 3 || n_tris == 0 {
        return Err(parse_err(hl, "mesh needs at least 3 nodes and one triangle"));
    }
    if n_nodes > 10_000_000 || n_tris > 20_000_000 {
        return Err(parse_err(hl, "mesh too large"));
    }
    let cap = n_nodes.min(text.len() / 8);
    let mut nodes = Vec::with_capacity(cap);
    let mut dirichlet = Vec::with_capacity(cap);
    let mut flags = Vec::with_capacity(cap);
    for _ in 0..n_nodes {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(hl, "missing node lines"))?;
        let f = fields(l, 4, ln)?;
        let x: f64 = parse_num(f[0], ln, "coordinate")?;
        let y: f64 = parse_num(f[1], ln, "coordinate")?;
        if !x.is_finite() || !y.is_finite() {
            return Err(parse_err(ln, "non-finite coordinate"));
        }
        let region: u8 = parse_num(f[2], ln, "region flag")?;
        let boundary: u8 = parse_num(f[3], ln, "boundary flag")?;
        if region > 2 || boundary > 1 {
            return Err(parse_err(ln, "flags out of range"));
        }
        nodes.push(Point::new(x, y));
        flags.push((ln, region));
        dirichlet.push(boundary == 1);
    }
    let cap = n_tris.min(text.len() / 8);
    let mut tris = Vec::with_capacity(cap);
    let mut in_d = Vec::with_capacity(cap);
    for _ in 0..n_tris {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(hl, "missing triangle lines"))?;
        let f = fields(l, 4, ln)?;
        let mut t = [0usize; 3];
        for (k, v) in t.iter_mut().enumerate() {
            *v = parse_num(f[k], ln, "vertex index")?;
            if *v >= n_nodes {
                return Err(parse_err(ln, format!("vertex index {v} out of range")));
            }
        }
        if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
            return Err(parse_err(ln, "repeated vertex"));
        }
        let region: u8 = parse_num(f[3], ln, "triangle region")?;
        if region > 1 {
            return Err(parse_err(ln, "triangle region must be 0 or 1"));
        }
        let (p, q, r) = (nodes[t[0]], nodes[t[1]], nodes[t[2]]);
        let area = (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
        if area == 0.0 || !area.is_finite() {
            return Err(parse_err(ln, "degenerate triangle"));
        }
        if area < 0.0 {
            t.swap(1, 2);
        }
        tris.push(t);
        in_d.push(region == 1);
    }
    if let Some((ln, _)) = lines.next() {
        return Err(parse_err(ln, "trailing content"));
    }
    let mesh = FemMesh { nodes, tris, in_d, dirichlet };
    let regions = mesh.node_regions();
    for (i, &(ln, flag)) in flags.iter().enumerate() {
        if regions[i].flag() != flag {
            return Err(parse_err(ln, format!("region flag {flag} disagrees with triangle regions")));
        }
    }
    if !mesh.in_d.iter().any(|&d| d) {
        return Err(parse_err(hl, "mesh has no inclusion triangles"));
    }
    Ok(mesh)
}

/// Angular grid: rays and the half-open range of cells inside `D`'s sector.
struct Rays {
    theta: Vec<f64>,
    sector_cells: usize,
}

fn disk_rays(count: usize) -> Rays {
    let count = count.max(8);
    Rays { theta: (0..count).map(|j| TAU * j as f64 / count as f64).collect(), sector_cells: count }
}

fn drop_rays(alpha: f64, dtheta: f64) -> Rays {
    let n1 = ((alpha / dtheta).ceil() as usize).max(2);
    let n2 = (((TAU - alpha) / dtheta).ceil() as usize).max(4);
    let mut theta: Vec<f64> = (0..=n1).map(|j| -0.5 * alpha + alpha * j as f64 / n1 as f64).collect();
    theta.extend((1..n2).map(|j| 0.5 * alpha + (TAU - alpha) * j as f64 / n2 as f64));
    Rays { theta, sector_cells: n1 }
}

/// Geometric profile on `(0, 1]` from `u_min`, with steps capped at
/// `max_log` in `ln u` and `max_lin` in `u`.
fn graded_profile(u_min: f64, max_log: f64, max_lin: f64) -> Vec<f64> {
    let mut u = vec![1.0];
    let mut cur: f64 = 1.0;
    while cur > u_min {
        cur = (cur - max_lin).max(cur * (-max_log).exp());
        if cur <= u_min * 1.5 {
            cur = u_min;
        }
        u.push(cur);
    }
    u.reverse();
    u
}

pub fn build_polar_mesh(geom: FemGeometry, opts: PolarOptions) -> Result<FemMesh> {
    let h = opts.h;
    if !(h > 0.0 && h < 0.5) {
        return Err(Error::InvalidParameter(format!("mesh size h = {h} must lie in (0, 0.5)")));
    }
    // interface radius along each ray and the ring layout of the inner band
    let mut drop_grading = None;
    let (rays, iface, inner, big_r): (Rays, Box<dyn Fn(usize, f64) -> f64>, Vec<f64>, f64) = match geom {
        FemGeometry::DiskInDisk { r, big_r } => {
            if !(r > 0.0 && r < big_r) {
                return Err(Error::InvalidParameter(format!("need 0 < r < R, got r = {r}, R = {big_r}")));
            }
            let dth = opts.dtheta.unwrap_or(h / big_r);
            let m1 = ((r / h).ceil() as usize).max(2);
            let inner = (1..=m1).map(|i| i as f64 / m1 as f64).collect();
            (disk_rays((TAU / dth).ceil() as usize), Box::new(move |_, _| r), inner, big_r)
        }
        FemGeometry::EllipseInDisk { a, b, big_r } => {
            if !(b > 0.0 && a >= b && a < big_r) {
                return Err(Error::InvalidParameter(format!("need 0 < b <= a < R, got a = {a}, b = {b}")));
            }
            let curve = BoundaryCurve::Ellipse { a, b };
            let dth = opts.dtheta.unwrap_or(h / big_r);
            let m1 = ((a / h).ceil() as usize).max(2);
            let inner = (1..=m1).map(|i| i as f64 / m1 as f64).collect();
            (disk_rays((TAU / dth).ceil() as usize), Box::new(move |_, t| curve.ray_radius(t)), inner, big_r)
        }
        FemGeometry::DropInDisk { alpha, r0, big_r } => {
            let drop = if alpha == PI {
                DropCurve::flat(r0)?
            } else {
                DropCurve::new(crate::dispersion::CornerAngle::new(alpha)?, r0)?
            };
            let curve = BoundaryCurve::Drop(drop);
            let reach = curve.max_radius();
            if !(reach < big_r) {
                return Err(Error::InvalidParameter(format!(
                    "drop reaches radius {reach}, outside Omega of radius {big_r}"
                )));
            }
            let dth = opts.dtheta.unwrap_or(h / r0);
            let rays = drop_rays(alpha, dth);
            let sector = rays.sector_cells;
            let log_step = opts.log_step.unwrap_or(dth);
            let r_min = opts.r_min.unwrap_or(h * h).min(0.5 * r0);
            drop_grading = Some((r_min, log_step, h / r0));
            let f = move |j: usize, t: f64| if j <= sector { curve.ray_radius(t) } else { r0 };
            (rays, Box::new(f), Vec::new(), big_r)
        }
    };
    let is_drop = matches!(geom, FemGeometry::DropInDisk { .. });
    let nt = rays.theta.len();
    let radii: Vec<f64> = (0..nt).map(|j| iface(j, rays.theta[j])).collect();
    let min_iface = radii.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_iface > 0.0) || radii.iter().any(|&r| r >= big_r) {
        return Err(Error::MeshGenerationFailure("interface leaves the outer disk".into()));
    }
    // Around a drop's vertex the rings are circles of radius u * min_iface up
    // to u = 1/2, then blend into the interface radius of each ray.
    let inner = match drop_grading {
        Some((r_min, log_step, max_lin)) => graded_profile(r_min / min_iface, log_step, max_lin),
        None => inner,
    };
    let ring_radius = |j: usize, u: f64| {
        if is_drop {
            let blend = smoothstep(2.0 * u - 1.0);
            u * (min_iface + (radii[j] - min_iface) * blend)
        } else {
            u * radii[j]
        }
    };
    let m1 = inner.len();
    let m2 = (((big_r - min_iface) / h).ceil() as usize).max(2);
    let rings = m1 + m2;
    // the first outer step matches the last inner one, so that the mesh looks
    // alike on both sides of the interface
    let last_inner = 1.0 - inner[m1 - 2];
    let outer = |rho: f64, k: usize| {
        let t = k as f64 / m2 as f64;
        let c = (rho * last_inner * m2 as f64 / (big_r - rho)).clamp(0.2, 1.8);
        rho + (big_r - rho) * (c * t + (1.0 - c) * t * t)
    };
    let mut nodes = vec![Point::zeros()];
    for i in 1..=rings {
        for j in 0..nt {
            let rho = radii[j];
            let r = if i <= m1 { ring_radius(j, inner[i - 1]) } else { outer(rho, i - m1) };
            let (s, c) = rays.theta[j].sin_cos();
            nodes.push(Point::new(r * c, r * s));
        }
    }
    let id = |i: usize, j: usize| if i == 0 { 0 } else { 1 + (i - 1) * nt + (j % nt) };
    let in_sector = |j: usize| !is_drop || j < rays.sector_cells;
    let mut tris = Vec::new();
    let mut in_d = Vec::new();
    for j in 0..nt {
        tris.push([0, id(1, j), id(1, j + 1)]);
        in_d.push(in_sector(j));
    }
    for i in 1..rings {
        for j in 0..nt {
            let (a, b) = (id(i, j), id(i, j + 1));
            let (c, d) = (id(i + 1, j + 1), id(i + 1, j));
            let inside = i < m1 && in_sector(j);
            tris.push([a, d, c]);
            tris.push([a, c, b]);
            in_d.push(inside);
            in_d.push(inside);
        }
    }
    let mut dirichlet = vec![false; nodes.len()];
    for j in 0..nt {
        dirichlet[id(rings, j)] = true;
    }
    let mesh = FemMesh { nodes, tris, in_d, dirichlet };
    mesh.validate()?;
    if mesh.interior_count() < 200 {
        return Err(Error::MeshGenerationFailure(format!(
            "only {} interior nodes; refine h",
            mesh.interior_count()
        )));
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_mesh_covers_the_disk() {
        let m = build_polar_mesh(FemGeometry::DiskInDisk { r: 0.5, big_r: 1.0 }, PolarOptions::with_h(0.1)).unwrap();
        let total: f64 = (0..m.tris.len()).map(|t| m.tri_area(t)).sum();
        let inner: f64 = (0..m.tris.len()).filter(|&t| m.in_d[t]).map(|t| m.tri_area(t)).sum();
        let n = (TAU / 0.1).ceil();
        let polygon = |r: f64| 0.5 * n * r * r * (TAU / n).sin();
        assert!((total - polygon(1.0)).abs() < 1e-12);
        assert!((inner - polygon(0.5)).abs() < 1e-12);
        let regions = m.node_regions();
        for (p, reg) in m.nodes.iter().zip(&regions) {
            if *reg == NodeRegion::Interface {
                assert!((p.norm() - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn drop_mesh_has_vertex_node_and_straight_edges() {
        let m = build_polar_mesh(
            FemGeometry::DropInDisk { alpha: PI / 2.0, r0: 0.3, big_r: 1.0 },
            PolarOptions::with_h(0.05),
        )
        .unwrap();
        let regions = m.node_regions();
        assert_eq!(regions[0], NodeRegion::Interface);
        let mut on_edges = 0;
        for (p, reg) in m.nodes.iter().zip(&regions) {
            if *reg == NodeRegion::Interface && p.norm() < 0.2 && p.norm() > 0.0 {
                assert!((p.y.atan2(p.x).abs() - PI / 4.0).abs() < 1e-12);
                on_edges += 1;
            }
        }
        assert!(on_edges > 20, "{on_edges}");
        let smallest = m.nodes.iter().skip(1).map(|p| p.norm()).fold(f64::MAX, f64::min);
        assert!(smallest > 0.0018 && smallest <= 0.0025 + 1e-15, "{smallest}");
    }

    #[test]
    fn text_round_trip() {
        let m = build_polar_mesh(FemGeometry::DiskInDisk { r: 0.5, big_r: 1.0 }, PolarOptions::with_h(0.08)).unwrap();
        let back = parse_mesh(&m.to_text()).unwrap();
        assert_eq!(back.tris, m.tris);
        assert_eq!(back.in_d, m.in_d);
        assert_eq!(back.dirichlet, m.dirichlet);
        for (a, b) in back.nodes.iter().zip(&m.nodes) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn parser_rejects_bad_input() {
        assert!(parse_mesh("").is_err());
        assert!(parse_mesh("3 1\n0 0 1 0\n1 0 1 0\n0 1 1 0\n0 1 5 1\n").is_err());
        assert!(parse_mesh("3 1\n0 0 1 0\n1 0 1 0\n0 1 1 0\n0 1 2 1\n").is_ok());
        assert!(parse_mesh("3 1\n0 0 0 0\n1 0 1 0\n0 1 1 0\n0 1 2 1\n").is_err());
        assert!(parse_mesh("3 1\n0 0 1 0\n1 0 1 0\n2 0 1 0\n0 1 2 1\n").is_err());
        assert!(parse_mesh("3 1\n0 0 1 0\n1 0 1 0\n0 1 1 0\n0 1 2 1\nextra\n").is_err());
        let err = parse_mesh("3 1\n0 0 1 0\nx 0 1 0\n0 1 1 0\n0 1 2 1\n").unwrap_err();
        assert_eq!(err, Error::Parse { line: 3, reason: "invalid coordinate \"x\"".into() });
    }

    #[test]
    fn too_coarse_is_rejected() {
        let err = build_polar_mesh(FemGeometry::DiskInDisk { r: 0.5, big_r: 1.0 }, PolarOptions::with_h(0.45));
        assert!(matches!(err, Err(Error::MeshGenerationFailure(_))));
    }
}
