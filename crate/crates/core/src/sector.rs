//! Petrov–Galerkin solver for the folded sector system
//!
//! ```text
//! w_rr + w_r / r +       w_tt / r^2 = f
//! v_rr + v_r / r + A^2 * v_tt / r^2 = g      on 0 < r < rho, |t| < alpha/2
//! w = v = 0 at r = rho,  v = w and v_t = -(k/A) w_t on t = ±alpha/2
//! ```
//!
//! Trial pairs satisfy `v = w` on the edges, test pairs satisfy `phi = A k psi`
//! there; both constraints are built into the basis by sharing one degree of
//! freedom per edge node. Elements are bilinear on the polar `(r, t)` grid, so
//! every radial integral (including the `1/r` ones) is done exactly.

use faer::prelude::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use serde::Serialize;

use crate::dispersion::{critical_contrasts, CornerAngle};
use crate::error::{Error, Result};
use crate::quad::GaussLegendre;

pub type Source<'a> = &'a (dyn Fn(f64, f64) -> f64 + Sync);

/// Tensor grid in `(r, theta)`; the innermost radius is `h^2`.
#[derive(Debug, Clone, Serialize)]
pub struct SectorGrid {
    pub rho: f64,
    pub alpha: f64,
    pub r: Vec<f64>,
    pub theta: Vec<f64>,
}

impl SectorGrid {
    pub fn new(alpha: CornerAngle, rho: f64, h: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidParameter(format!("rho = {rho} must be positive")));
        }
        if !(h > 0.0 && h <= 0.25 * rho) {
            return Err(Error::InvalidParameter(format!("h = {h} must lie in (0, rho/4]")));
        }
        let a = alpha.radians();
        let r_in = h * h;
        let nr = ((rho - r_in) / h).ceil() as usize;
        let nt = ((a / h).ceil() as usize).max(4);
        let r = (0..=nr).map(|i| r_in + (rho - r_in) * i as f64 / nr as f64).collect();
        let theta = (0..=nt).map(|j| -0.5 * a + a * j as f64 / nt as f64).collect();
        Ok(SectorGrid { rho, alpha: a, r, theta })
    }

    pub fn nr(&self) -> usize {
        self.r.len() - 1
    }

    pub fn nt(&self) -> usize {
        self.theta.len() - 1
    }

    pub fn node_count(&self) -> usize {
        self.r.len() * self.theta.len()
    }

    pub fn id(&self, i: usize, j: usize) -> usize {
        i * self.theta.len() + j
    }

    fn on_edge(&self, j: usize) -> bool {
        j == 0 || j == self.nt()
    }
}

/// `int N_a' N_b' r dr` and `int N_a N_b / r dr` on `[r0, r1]` for the two
/// linear hats.
fn radial_blocks(r0: f64, r1: f64, gl: &GaussLegendre) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
    let hr = r1 - r0;
    let s = 0.5 * (r0 + r1) / hr;
    let kr = [[s, -s], [-s, s]];
    let inv = if r0 < hr {
        let l = (r1 / r0).ln();
        let sq = 0.5 * (r1 * r1 - r0 * r0);
        let h2 = hr * hr;
        let m00 = (r1 * r1 * l - 2.0 * r1 * hr + sq) / h2;
        let m11 = (sq - 2.0 * r0 * hr + r0 * r0 * l) / h2;
        let m01 = (-sq + (r0 + r1) * hr - r0 * r1 * l) / h2;
        [[m00, m01], [m01, m11]]
    } else {
        let mut m = [[0.0; 2]; 2];
        for (x, wt) in gl.mapped(r0, r1) {
            let n = [(r1 - x) / hr, (x - r0) / hr];
            for a in 0..2 {
                for b in 0..2 {
                    m[a][b] += wt * n[a] * n[b] / x;
                }
            }
        }
        m
    };
    (kr, inv)
}

fn angular_blocks(t0: f64, t1: f64) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
    let ht = t1 - t0;
    let m = [[ht / 3.0, ht / 6.0], [ht / 6.0, ht / 3.0]];
    let k = [[1.0 / ht, -1.0 / ht], [-1.0 / ht, 1.0 / ht]];
    (m, k)
}

/// Element matrix `int (u_r phi_r + c u_t phi_t / r^2) r dr dt` on cell
/// `(i, j)`, local order `(i,j), (i,j+1), (i+1,j), (i+1,j+1)`.
fn element_matrix(grid: &SectorGrid, i: usize, j: usize, c: f64, gl: &GaussLegendre) -> [[f64; 4]; 4] {
    let (kr, inv) = radial_blocks(grid.r[i], grid.r[i + 1], gl);
    let (mt, kt) = angular_blocks(grid.theta[j], grid.theta[j + 1]);
    let mut e = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            let (ra, ta) = (a / 2, a % 2);
            let (rb, tb) = (b / 2, b % 2);
            e[a][b] = kr[ra][rb] * mt[ta][tb] + c * inv[ra][rb] * kt[ta][tb];
        }
    }
    e
}

fn cell_nodes(grid: &SectorGrid, i: usize, j: usize) -> [usize; 4] {
    [grid.id(i, j), grid.id(i, j + 1), grid.id(i + 1, j), grid.id(i + 1, j + 1)]
}

/// Bilinear interpolation weights of the four cell nodes at `(r, t)`.
fn shape(grid: &SectorGrid, i: usize, j: usize, r: f64, t: f64) -> ([f64; 4], [f64; 4], [f64; 4]) {
    let (r0, r1) = (grid.r[i], grid.r[i + 1]);
    let (t0, t1) = (grid.theta[j], grid.theta[j + 1]);
    let (hr, ht) = (r1 - r0, t1 - t0);
    let nr = [(r1 - r) / hr, (r - r0) / hr];
    let dnr = [-1.0 / hr, 1.0 / hr];
    let nt = [(t1 - t) / ht, (t - t0) / ht];
    let dnt = [-1.0 / ht, 1.0 / ht];
    let mut v = [0.0; 4];
    let mut dr = [0.0; 4];
    let mut dt = [0.0; 4];
    for a in 0..4 {
        let (ra, ta) = (a / 2, a % 2);
        v[a] = nr[ra] * nt[ta];
        dr[a] = dnr[ra] * nt[ta];
        dt[a] = nr[ra] * dnt[ta];
    }
    (v, dr, dt)
}

/// Solution of the folded system, stored on the full tensor grid.
#[derive(Debug, Clone, Serialize)]
pub struct SectorSolution {
    pub k: f64,
    pub a: f64,
    pub h: f64,
    pub grid: SectorGrid,
    pub w: Vec<f64>,
    pub v: Vec<f64>,
    pub energy_w: f64,
    pub energy_v: f64,
    pub unknowns: usize,
}

impl SectorSolution {
    /// `(int |grad w|^2 + |grad v|^2)^(1/2)`.
    pub fn energy_norm(&self) -> f64 {
        (self.energy_w * self.energy_w + self.energy_v * self.energy_v).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.w.iter().chain(&self.v).fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest `|v - w|` over the edge nodes; zero by construction.
    pub fn edge_coupling_defect(&self) -> f64 {
        let g = &self.grid;
        let mut m: f64 = 0.0;
        for i in 0..g.r.len() {
            for j in [0, g.nt()] {
                let n = g.id(i, j);
                m = m.max((self.w[n] - self.v[n]).abs());
            }
        }
        m
    }

    /// Energy-norm error against exact gradients `(d/dr, d/dt)` of `w` and `v`.
    pub fn energy_error<W, V>(&self, grad_w: W, grad_v: V) -> f64
    where
        W: Fn(f64, f64) -> (f64, f64),
        V: Fn(f64, f64) -> (f64, f64),
    {
        let g = &self.grid;
        let gl = GaussLegendre::new(4);
        let mut total = 0.0;
        for i in 0..g.nr() {
            for j in 0..g.nt() {
                let nodes = cell_nodes(g, i, j);
                for (r, wr) in gl.mapped(g.r[i], g.r[i + 1]) {
                    for (t, wt) in gl.mapped(g.theta[j], g.theta[j + 1]) {
                        let (_, dr, dt) = shape(g, i, j, r, t);
                        let (mut wr_h, mut wt_h, mut vr_h, mut vt_h) = (0.0, 0.0, 0.0, 0.0);
                        for a in 0..4 {
                            wr_h += dr[a] * self.w[nodes[a]];
                            wt_h += dt[a] * self.w[nodes[a]];
                            vr_h += dr[a] * self.v[nodes[a]];
                            vt_h += dt[a] * self.v[nodes[a]];
                        }
                        let (ew_r, ew_t) = grad_w(r, t);
                        let (ev_r, ev_t) = grad_v(r, t);
                        let e = (wr_h - ew_r).powi(2)
                            + (wt_h - ew_t).powi(2) / (r * r)
                            + (vr_h - ev_r).powi(2)
                            + (vt_h - ev_t).powi(2) / (r * r);
                        total += wr * wt * e * r;
                    }
                }
            }
        }
        total.sqrt()
    }
}

/// `(int_sector f^2)^(1/2)` with the polar measure.
pub fn source_norm(f: Source<'_>, alpha: CornerAngle, rho: f64) -> f64 {
    let gl = GaussLegendre::new(12);
    let a = alpha.radians();
    let r_panels = 16;
    let mut total = 0.0;
    for p in 0..r_panels {
        // geometric panels toward the vertex keep 1/r sources integrable
        let r0 = rho * 2f64.powi(-(r_panels - p) as i32);
        let r0 = if p == 0 { 0.0 } else { r0 };
        let r1 = rho * 2f64.powi(-(r_panels - p - 1) as i32);
        for (r, wr) in gl.mapped(r0, r1) {
            for (t, wt) in gl.mapped(-0.5 * a, 0.5 * a) {
                total += wr * wt * f(r, t).powi(2) * r;
            }
        }
    }
    total.sqrt()
}

fn check_contrast(k: f64, alpha: CornerAngle) -> Result<()> {
    if !k.is_finite() {
        return Err(Error::InvalidParameter(format!("k = {k}")));
    }
    let crit = critical_contrasts(alpha);
    if crit.contains_k(k) {
        return Err(Error::CriticalContrast { k, k_plus: crit.k_plus, k_minus: crit.k_minus });
    }
    Ok(())
}

/// Solves the folded system with homogeneous Dirichlet data at `r = rho`.
pub fn sector_system_solve(
    f: Source<'_>,
    g: Source<'_>,
    k: f64,
    alpha: CornerAngle,
    rho: f64,
    h: f64,
) -> Result<SectorSolution> {
    sector_solve_with_boundary(f, g, None, k, alpha, rho, h)
}

/// As [`sector_system_solve`], with optional Dirichlet traces `(w(rho, t), v(rho, t))`.
/// The traces must agree at the two edge angles.
pub fn sector_solve_with_boundary(
    f: Source<'_>,
    g: Source<'_>,
    dirichlet: Option<(&dyn Fn(f64) -> f64, &dyn Fn(f64) -> f64)>,
    k: f64,
    alpha: CornerAngle,
    rho: f64,
    h: f64,
) -> Result<SectorSolution> {
    check_contrast(k, alpha)?;
    let grid = SectorGrid::new(alpha, rho, h)?;
    let a = alpha.fold_ratio();
    let nn = grid.node_count();
    let (nr, nt) = (grid.nr(), grid.nt());

    // Trial: field index -> column; test: field index -> (row, coefficient).
    // Field index is node for w and nn + node for v.
    let mut trial: Vec<Option<usize>> = vec![None; 2 * nn];
    let mut test: Vec<Option<(usize, f64)>> = vec![None; 2 * nn];
    let mut known = vec![0.0; 2 * nn];
    let mut cols = 0;
    let mut rows = 0;
    for i in 0..nr {
        for j in 0..=nt {
            let n = grid.id(i, j);
            trial[n] = Some(cols);
            if grid.on_edge(j) {
                trial[nn + n] = Some(cols);
            }
            cols += 1;
            test[nn + n] = Some((rows, 1.0));
            if grid.on_edge(j) {
                test[n] = Some((rows, a * k));
            }
            rows += 1;
        }
    }
    for i in 0..nr {
        for j in 1..nt {
            let n = grid.id(i, j);
            trial[nn + n] = Some(cols);
            cols += 1;
            test[n] = Some((rows, 1.0));
            rows += 1;
        }
    }
    debug_assert_eq!(rows, cols);
    if let Some((bw, bv)) = dirichlet {
        for j in 0..=nt {
            let n = grid.id(nr, j);
            let t = grid.theta[j];
            known[n] = bw(t);
            known[nn + n] = bv(t);
        }
    }

    let gl_r = GaussLegendre::new(10);
    let gl_load = GaussLegendre::new(4);
    let mut trips = Vec::with_capacity(64 * nr * nt);
    let mut rhs = vec![0.0; rows];
    for i in 0..nr {
        for j in 0..nt {
            let nodes = cell_nodes(&grid, i, j);
            for (field, c) in [(0usize, 1.0), (1usize, a * a)] {
                let e = element_matrix(&grid, i, j, c, &gl_r);
                let off = field * nn;
                for p in 0..4 {
                    let Some((row, tc)) = test[off + nodes[p]] else { continue };
                    for q in 0..4 {
                        let fj = off + nodes[q];
                        let val = tc * e[p][q];
                        match trial[fj] {
                            Some(col) => trips.push(Triplet::new(row, col, val)),
                            None => rhs[row] -= val * known[fj],
                        }
                    }
                }
            }
            for (r, wr) in gl_load.mapped(grid.r[i], grid.r[i + 1]) {
                for (t, wt) in gl_load.mapped(grid.theta[j], grid.theta[j + 1]) {
                    let (sv, _, _) = shape(&grid, i, j, r, t);
                    let fw = f(r, t) * wr * wt * r;
                    let gw = g(r, t) * wr * wt * r;
                    for p in 0..4 {
                        if let Some((row, tc)) = test[nodes[p]] {
                            rhs[row] -= tc * fw * sv[p];
                        }
                        if let Some((row, tc)) = test[nn + nodes[p]] {
                            rhs[row] -= tc * gw * sv[p];
                        }
                    }
                }
            }
        }
    }

    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(rows, cols, &trips)
        .map_err(|e| Error::SolveFailure(format!("{e:?}")))?;
    let lu = mat.sp_lu().map_err(|e| Error::SolveFailure(format!("{e:?}")))?;
    let b = Mat::from_fn(rows, 1, |i, _| rhs[i]);
    let x = lu.solve(&b);
    let mut w = vec![0.0; nn];
    let mut v = vec![0.0; nn];
    for n in 0..nn {
        w[n] = trial[n].map_or(known[n], |c| x[(c, 0)]);
        v[n] = trial[nn + n].map_or(known[nn + n], |c| x[(c, 0)]);
    }
    if w.iter().chain(&v).any(|z| !z.is_finite()) {
        return Err(Error::SolveFailure("non-finite solution".into()));
    }
    let energy_w = discrete_energy(&grid, &w, &gl_r);
    let energy_v = discrete_energy(&grid, &v, &gl_r);
    Ok(SectorSolution { k, a, h, grid, w, v, energy_w, energy_v, unknowns: cols })
}

fn discrete_energy(grid: &SectorGrid, u: &[f64], gl: &GaussLegendre) -> f64 {
    let mut total = 0.0;
    for i in 0..grid.nr() {
        for j in 0..grid.nt() {
            let nodes = cell_nodes(grid, i, j);
            let e = element_matrix(grid, i, j, 1.0, gl);
            for p in 0..4 {
                for q in 0..4 {
                    total += u[nodes[p]] * e[p][q] * u[nodes[q]];
                }
            }
        }
    }
    total.max(0.0).sqrt()
}

/// Manufactured pair `w = v = (rho - r) r cos(2 pi t / alpha)` with its sources.
#[derive(Debug, Clone, Copy)]
pub struct Manufactured {
    pub rho: f64,
    pub alpha: f64,
    pub a: f64,
}

impl Manufactured {
    pub fn new(alpha: CornerAngle, rho: f64) -> Self {
        Manufactured { rho, alpha: alpha.radians(), a: alpha.fold_ratio() }
    }

    fn c(&self) -> f64 {
        std::f64::consts::TAU / self.alpha
    }

    pub fn value(&self, r: f64, t: f64) -> f64 {
        (self.rho - r) * r * (self.c() * t).cos()
    }

    /// `(d/dr, d/dt)`.
    pub fn gradient(&self, r: f64, t: f64) -> (f64, f64) {
        let c = self.c();
        ((self.rho - 2.0 * r) * (c * t).cos(), -c * (self.rho - r) * r * (c * t).sin())
    }

    fn source(&self, r: f64, t: f64, ang: f64) -> f64 {
        let c = self.c();
        let q = self.rho / r;
        (c * t).cos() * (-4.0 + q - ang * c * c * (q - 1.0))
    }

    pub fn f(&self, r: f64, t: f64) -> f64 {
        self.source(r, t, 1.0)
    }

    pub fn g(&self, r: f64, t: f64) -> f64 {
        self.source(r, t, self.a * self.a)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub unknowns: usize,
    pub error: f64,
    pub ratio: Option<f64>,
    /// `||(w, v)|| / (||f|| + ||g||)`.
    pub stability: f64,
}

/// Manufactured-solution study over `levels` successive halvings of `h0`.
pub fn manufactured_study(k: f64, alpha: CornerAngle, rho: f64, h0: f64, levels: usize) -> Result<Vec<ConvergenceRow>> {
    let m = Manufactured::new(alpha, rho);
    let f = |r: f64, t: f64| m.f(r, t);
    let g = |r: f64, t: f64| m.g(r, t);
    let data = source_norm(&f, alpha, rho) + source_norm(&g, alpha, rho);
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels);
    for l in 0..levels {
        let h = h0 / 2f64.powi(l as i32);
        let sol = sector_system_solve(&f, &g, k, alpha, rho, h)?;
        let error = sol.energy_error(|r, t| m.gradient(r, t), |r, t| m.gradient(r, t));
        let ratio = rows.last().map(|p| p.error / error);
        rows.push(ConvergenceRow { h, unknowns: sol.unknowns, error, ratio, stability: sol.energy_norm() / data });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::{angular_profile, solve_dispersion_real};
    use std::f64::consts::PI;

    fn right() -> CornerAngle {
        CornerAngle::new(PI / 2.0).unwrap()
    }

    #[test]
    fn radial_integrals_match_quadrature() {
        let gl = GaussLegendre::new(30);
        for (r0, r1) in [(1e-4, 0.05), (0.01, 0.02), (0.5, 0.55)] {
            let (_, inv) = radial_blocks(r0, r1, &GaussLegendre::new(10));
            let hr = r1 - r0;
            let n = |a: usize, x: f64| if a == 0 { (r1 - x) / hr } else { (x - r0) / hr };
            for a in 0..2 {
                for b in 0..2 {
                    let sub = 40;
                    let exact = gl.integrate_composite(r0, r1, sub, |x| n(a, x) * n(b, x) / x);
                    assert!((inv[a][b] - exact).abs() < 1e-12 * exact.abs().max(1.0), "{r0} {r1} {a}{b}");
                }
            }
        }
    }

    #[test]
    fn zero_data_gives_zero() {
        let z = |_: f64, _: f64| 0.0;
        let sol = sector_system_solve(&z, &z, -5.0, right(), 1.0, 0.1).unwrap();
        assert!(sol.max_abs() <= 1e-10);
        assert_eq!(sol.edge_coupling_defect(), 0.0);
    }

    #[test]
    fn manufactured_converges() {
        for k in [-5.0, -0.2, 2.0] {
            let rows = manufactured_study(k, right(), 1.0, 0.1, 3).unwrap();
            for row in &rows[1..] {
                assert!(row.ratio.unwrap() >= 1.5, "k = {k}: {rows:?}");
            }
            let s: Vec<f64> = rows.iter().map(|r| r.stability).collect();
            let (lo, hi) = s.iter().fold((f64::MAX, 0f64), |(a, b), &x| (a.min(x), b.max(x)));
            assert!(hi / lo < 1.2, "{s:?}");
        }
    }

    #[test]
    fn critical_contrast_rejected() {
        let z = |_: f64, _: f64| 0.0;
        assert!(matches!(
            sector_system_solve(&z, &z, -1.0, right(), 1.0, 0.1),
            Err(Error::CriticalContrast { .. })
        ));
    }

    #[test]
    fn folded_corner_solution_is_reproduced() {
        let alpha = right();
        let a = alpha.fold_ratio();
        for k in [-5.0, -0.2] {
            let root = solve_dispersion_real(k, alpha).unwrap();
            let prof = angular_profile(&root, k, alpha).unwrap();
            let eta = root.value;
            // fix the arbitrary complex phase of the null vector
            let c = prof.eval(0.0);
            let c = if c.norm() > 1e-3 { c } else { prof.eval(0.3) };
            let phase = c.conj() / c.norm();
            let phi_in = |t: f64| (prof.eval_branch(t, true) * phase).re;
            // outer branch in s = theta + alpha/2 without wrapping, so that the
            // edge t = -alpha/2 maps to s = 2 pi
            let phi_out = |t: f64| {
                let s = PI - t / a + 0.25 * PI;
                ((prof.a2 * (prof.eta * s).cos() + prof.b2 * (prof.eta * s).sin()) * phase).re
            };
            let bw = |t: f64| phi_in(t);
            let bv = |t: f64| phi_out(t);
            let z = |_: f64, _: f64| 0.0;
            for h in [0.05, 0.025] {
                let sol = sector_solve_with_boundary(&z, &z, Some((&bw, &bv)), k, alpha, 1.0, h).unwrap();
                let g = &sol.grid;
                let mut err: f64 = 0.0;
                for i in 0..g.r.len() {
                    for j in 0..g.theta.len() {
                        let n = g.id(i, j);
                        let rr = g.r[i].powf(eta);
                        err = err.max((sol.w[n] - rr * phi_in(g.theta[j])).abs());
                        err = err.max((sol.v[n] - rr * phi_out(g.theta[j])).abs());
                    }
                }
                assert!(err <= 10.0 * h, "k = {k}, h = {h}: {err}");
            }
        }
    }
}
