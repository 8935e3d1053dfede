//! Singular Weyl sequences built from black-hole waves at a corner.
//!
//! `u_eps = s_eps * chi1(r / eps) * chi2(r) * Re(r^{i xi} phi(theta))`, with
//! `chi1` switching on over `[eps, 2 eps]`, `chi2` switching off over
//! `[r0, 2 r0]`, and `s_eps` normalizing the Dirichlet energy to one. The
//! residual `||(beta - T_D) u_eps||` is measured with the FEM realization of
//! `T_D` on a drop whose vertex sits at the origin.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::{
    angular_profile, convert_contrast, profile_weighted_mean, solve_dispersion_imag, Contrast, CornerAngle,
    ProfileCoeffs,
};
use crate::error::{Error, Result};
use crate::fem::{apply_td, build_fem_context, FemContext, FemGeometry, PolarOptions};
use crate::quad::{smoothstep, smoothstep_deriv, GaussLegendre};

/// Which real part defines the field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RealPart {
    /// `Re(r^{i xi} phi(theta))`.
    #[default]
    FullProduct,
    /// `cos(xi ln r) Re(phi(theta))`.
    RadialOnly,
}

#[derive(Debug, Clone, Copy)]
pub struct WeylField {
    pub k: f64,
    pub xi: f64,
    pub profile: ProfileCoeffs,
    pub epsilon: f64,
    pub r0: f64,
    pub s_eps: f64,
    pub real_part: RealPart,
    /// `|int a(theta) phi(theta) d theta|`.
    pub mean_defect: f64,
}

/// Quadrature resolution for the polar integrals: Gauss points per panel and
/// panel width in `ln r`.
#[derive(Debug, Clone, Copy)]
pub struct PolarQuadrature {
    pub points: usize,
    pub log_panel: f64,
    pub angular_panels: usize,
}

impl Default for PolarQuadrature {
    fn default() -> Self {
        PolarQuadrature { points: 10, log_panel: 0.25, angular_panels: 4 }
    }
}

impl PolarQuadrature {
    pub fn doubled(self) -> Self {
        PolarQuadrature { points: self.points, log_panel: 0.5 * self.log_panel, angular_panels: 2 * self.angular_panels }
    }

    /// `int int F(r, theta, inside) r dr dtheta` over `r_a <= r <= r_b`, with
    /// radial breakpoints at `cuts`; the integrand is evaluated in `t = ln r`.
    fn integrate<F>(&self, r_a: f64, r_b: f64, cuts: &[f64], alpha: f64, f: F) -> f64
    where
        F: Fn(f64, f64, bool) -> f64,
    {
        let gl = GaussLegendre::new(self.points);
        let mut knots: Vec<f64> = std::iter::once(r_a)
            .chain(cuts.iter().copied().filter(|&c| c > r_a && c < r_b))
            .chain(std::iter::once(r_b))
            .map(f64::ln)
            .collect();
        knots.dedup();
        let mut angular = Vec::new();
        let pieces = [(-0.5 * alpha, 0.5 * alpha, true), (0.5 * alpha, TAU - 0.5 * alpha, false)];
        for (lo, hi, inside) in pieces {
            let n = self.angular_panels;
            for p in 0..n {
                let a = lo + (hi - lo) * p as f64 / n as f64;
                let b = lo + (hi - lo) * (p + 1) as f64 / n as f64;
                for (t, w) in gl.mapped(a, b) {
                    angular.push((t, w, inside));
                }
            }
        }
        let mut total = 0.0;
        for seg in knots.windows(2) {
            let panels = (((seg[1] - seg[0]) / self.log_panel).ceil() as usize).max(1);
            let width = (seg[1] - seg[0]) / panels as f64;
            for p in 0..panels {
                let a = seg[0] + width * p as f64;
                for (t, wt) in gl.mapped(a, a + width) {
                    let r = t.exp();
                    // dr = r dt, so r dr = r^2 dt
                    let jac = r * r * wt;
                    total += jac * angular.iter().map(|&(th, w, ins)| w * f(r, th, ins)).sum::<f64>();
                }
            }
        }
        total
    }
}

fn chi1(s: f64) -> (f64, f64) {
    (smoothstep(s - 1.0), smoothstep_deriv(s - 1.0))
}

fn chi2(r: f64, r0: f64) -> (f64, f64) {
    let t = (r - r0) / r0;
    (1.0 - smoothstep(t), -smoothstep_deriv(t) / r0)
}

impl WeylField {
    fn alpha(&self) -> f64 {
        self.profile.alpha
    }

    /// Uncut singular field and its polar derivatives `(U, U_r, U_theta)`.
    fn singular(&self, r: f64, theta: f64, inside: bool) -> (f64, f64, f64) {
        let phi = self.profile.eval_branch(theta, inside);
        let dphi = self.profile.deriv_branch(theta, inside);
        let lr = r.ln();
        match self.real_part {
            RealPart::FullProduct => {
                let e = Complex64::new(0.0, self.xi * lr).exp();
                let u = (e * phi).re;
                let ur = (e * phi * Complex64::new(0.0, self.xi / r)).re;
                let ut = (e * dphi).re;
                (u, ur, ut)
            }
            RealPart::RadialOnly => {
                let c = (self.xi * lr).cos();
                let dc = -(self.xi * lr).sin() * self.xi / r;
                (c * phi.re, dc * phi.re, c * dphi.re)
            }
        }
    }

    fn cutoff(&self, r: f64) -> (f64, f64) {
        let (c1, d1) = chi1(r / self.epsilon);
        let (c2, d2) = chi2(r, self.r0);
        (c1 * c2, d1 / self.epsilon * c2 + c1 * d2)
    }

    /// Unnormalized cut-off field and polar derivatives.
    fn raw(&self, r: f64, theta: f64, inside: bool) -> (f64, f64, f64) {
        if r <= self.epsilon || r >= 2.0 * self.r0 {
            return (0.0, 0.0, 0.0);
        }
        let (u, ur, ut) = self.singular(r, theta, inside);
        let (c, dc) = self.cutoff(r);
        (c * u, dc * u + c * ur, c * ut)
    }

    pub fn value(&self, r: f64, theta: f64) -> f64 {
        let inside = self.profile.in_sector(theta);
        self.s_eps * self.raw(r, theta, inside).0
    }

    pub fn value_at(&self, x: f64, y: f64) -> f64 {
        self.value(x.hypot(y), y.atan2(x))
    }

    /// Cartesian gradient.
    pub fn gradient(&self, r: f64, theta: f64) -> (f64, f64) {
        let inside = self.profile.in_sector(theta);
        let (_, ur, ut) = self.raw(r, theta, inside);
        let (s, c) = theta.sin_cos();
        let (gr, gt) = (self.s_eps * ur, self.s_eps * ut / r);
        (gr * c - gt * s, gr * s + gt * c)
    }

    fn cuts(&self) -> [f64; 4] {
        [self.epsilon, 2.0 * self.epsilon, self.r0, 2.0 * self.r0]
    }

    /// `int |grad u_eps|^2` by polar quadrature.
    pub fn energy(&self, quad: PolarQuadrature) -> f64 {
        let alpha = self.alpha();
        self.s_eps * self.s_eps * raw_energy(self, quad, alpha)
    }

    /// `int u_eps * test`, for weak-convergence checks.
    pub fn pair_with<F: Fn(f64, f64) -> f64>(&self, test: F, quad: PolarQuadrature) -> f64 {
        let cuts = self.cuts();
        quad.integrate(self.epsilon, 2.0 * self.r0, &cuts, self.alpha(), |r, th, ins| {
            let (s, c) = th.sin_cos();
            self.s_eps * self.raw(r, th, ins).0 * test(r * c, r * s)
        })
    }

    pub fn l2_norm(&self, quad: PolarQuadrature) -> f64 {
        let cuts = self.cuts();
        let v = quad.integrate(self.epsilon, 2.0 * self.r0, &cuts, self.alpha(), |r, th, ins| {
            self.raw(r, th, ins).0.powi(2)
        });
        self.s_eps * v.sqrt()
    }
}

fn raw_energy(f: &WeylField, quad: PolarQuadrature, alpha: f64) -> f64 {
    let cuts = f.cuts();
    quad.integrate(f.epsilon, 2.0 * f.r0, &cuts, alpha, |r, th, ins| {
        let (_, ur, ut) = f.raw(r, th, ins);
        ur * ur + ut * ut / (r * r)
    })
}

/// Builds the normalized field for contrast `k` inside the critical interval.
pub fn build_weyl_field(k: f64, alpha: CornerAngle, epsilon: f64, r0: f64, real_part: RealPart) -> Result<WeylField> {
    if !(epsilon > 0.0 && 4.0 * epsilon < r0) {
        return Err(Error::InvalidParameter(format!("need 0 < 4 eps < r0, got eps = {epsilon}, r0 = {r0}")));
    }
    let root = solve_dispersion_imag(k, alpha)?;
    let profile = angular_profile(&root, k, alpha)?;
    let mean_defect = profile_weighted_mean(&profile, k, alpha).norm();
    let mut field = WeylField { k, xi: root.value, profile, epsilon, r0, s_eps: 1.0, real_part, mean_defect };
    let e = raw_energy(&field, PolarQuadrature::default(), alpha.radians());
    if !(e > 0.0) {
        return Err(Error::InvalidParameter("field has zero energy".into()));
    }
    field.s_eps = 1.0 / e.sqrt();
    Ok(field)
}

/// `m_eps = int_{eps < r < r0} |grad Re(r^{i xi} phi)|^2`, refined until two
/// successive resolutions agree to `1e-9` relative. Needs only `0 < eps < r0`.
pub fn m_eps(k: f64, alpha: CornerAngle, epsilon: f64, r0: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < r0) {
        return Err(Error::InvalidParameter(format!("need 0 < eps < r0, got eps = {epsilon}, r0 = {r0}")));
    }
    let root = solve_dispersion_imag(k, alpha)?;
    let profile = angular_profile(&root, k, alpha)?;
    let field = WeylField {
        k,
        xi: root.value,
        profile,
        epsilon,
        r0,
        s_eps: 1.0,
        real_part: RealPart::default(),
        mean_defect: 0.0,
    };
    Ok(field.m_eps())
}

impl WeylField {
    pub fn m_eps(&self) -> f64 {
        let alpha = self.alpha();
        let eval = |quad: PolarQuadrature| {
            quad.integrate(self.epsilon, self.r0, &[], alpha, |r, th, ins| {
                let (_, ur, ut) = self.singular(r, th, ins);
                ur * ur + ut * ut / (r * r)
            })
        };
        let mut quad = PolarQuadrature::default();
        let mut prev = eval(quad);
        for _ in 0..6 {
            quad = quad.doubled();
            let next = eval(quad);
            if (next - prev).abs() <= 1e-9 * next.abs() {
                return next;
            }
            prev = next;
        }
        prev
    }
}

/// Straight-edge length of the drop used for the sweeps.
pub const DROP_R0: f64 = 0.8;
/// Radius of `Omega`.
pub const OMEGA_RADIUS: f64 = 2.0;
/// Outer cut-off scale `r0` of the fields.
pub const CUTOFF_R0: f64 = 0.3;

/// Drop-in-disk context resolving every `eps >= eps_min`. `geometry_alpha = pi`
/// gives the flat control.
pub fn weyl_context(geometry_alpha: f64, eps_min: f64, h: f64) -> Result<FemContext> {
    let opts = PolarOptions {
        h,
        dtheta: Some(0.05),
        log_step: Some(0.035),
        r_min: Some(eps_min / 8.0),
    };
    build_fem_context(FemGeometry::DropInDisk { alpha: geometry_alpha, r0: DROP_R0, big_r: OMEGA_RADIUS }, opts)
}

/// Largest edge length over the triangles meeting the annulus
/// `eps <= r <= 2 eps`.
pub fn annulus_element_size(ctx: &FemContext, epsilon: f64) -> f64 {
    let mesh = &ctx.mesh;
    let mut size: f64 = 0.0;
    for tri in &mesh.tris {
        let p = tri.map(|i| mesh.nodes[i]);
        let rs = p.map(|q| q.norm());
        let lo = rs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = rs.iter().copied().fold(0.0, f64::max);
        if hi < epsilon || lo > 2.0 * epsilon {
            continue;
        }
        for a in 0..3 {
            size = size.max((p[a] - p[(a + 1) % 3]).norm());
        }
    }
    size
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResidualReport {
    pub residual: f64,
    /// `(u^T K_Omega u)^(1/2)` of the interpolated field.
    pub fem_norm: f64,
}

/// `||(beta - T_D) u_eps||` in the `H^1_0(Omega)` seminorm, with `u_eps`
/// interpolated at the mesh nodes.
pub fn weyl_residual(field: &WeylField, ctx: &FemContext, beta: f64) -> Result<ResidualReport> {
    let size = annulus_element_size(ctx, field.epsilon);
    let limit = 0.25 * field.epsilon;
    if size > limit {
        return Err(Error::MeshTooCoarse { size, limit });
    }
    let u: Vec<f64> = ctx.mesh.nodes.iter().map(|p| field.value_at(p.x, p.y)).collect();
    let tu = apply_td(ctx, &u)?;
    let z: Vec<f64> = u.iter().zip(&tu).map(|(a, b)| beta * a - b).collect();
    Ok(ResidualReport {
        residual: ctx.omega_product(&z, &z).max(0.0).sqrt(),
        fem_norm: ctx.omega_product(&u, &u).max(0.0).sqrt(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayRow {
    pub eps: f64,
    pub m_eps: f64,
    pub s_eps: f64,
    pub residual: f64,
    pub l2_norm: f64,
    pub fem_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub k: f64,
    pub beta: f64,
    pub xi: f64,
    pub rows: Vec<DecayRow>,
    /// Least-squares `c` in `r_eps ~ c (ln 1/eps)^{-1/2}`.
    pub fitted_constant: f64,
    /// Slope of `ln r_eps` against `ln ln(1/eps)`.
    pub fitted_log_rate: f64,
}

impl DecayReport {
    pub fn residuals_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].residual < w[0].residual)
    }

    /// `max / min` of `s_eps (ln 1/eps)^{1/2}` over the sweep.
    pub fn normalization_spread(&self) -> f64 {
        let v: Vec<f64> = self.rows.iter().map(|r| r.s_eps * (1.0 / r.eps).ln().sqrt()).collect();
        let hi = v.iter().copied().fold(0.0, f64::max);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        hi / lo
    }
}

/// Residuals along a decreasing list of `eps` on one FEM context. `beta`
/// defaults to `1/(1-k)`.
pub fn weyl_sweep(
    k: f64,
    alpha: CornerAngle,
    eps_list: &[f64],
    r0: f64,
    ctx: &FemContext,
    beta: Option<f64>,
) -> Result<DecayReport> {
    if eps_list.is_empty() || eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("eps list must be non-empty and decreasing".into()));
    }
    let xi = solve_dispersion_imag(k, alpha)?.value;
    let beta = match beta {
        Some(b) => b,
        None => convert_contrast(Contrast::K(k))?.beta,
    };
    let rows = eps_list
        .par_iter()
        .map(|&eps| {
            let field = build_weyl_field(k, alpha, eps, r0, RealPart::default())?;
            let res = weyl_residual(&field, ctx, beta)?;
            Ok(DecayRow {
                eps,
                m_eps: field.m_eps(),
                s_eps: field.s_eps,
                residual: res.residual,
                l2_norm: field.l2_norm(PolarQuadrature::default()),
                fem_norm: res.fem_norm,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| (1.0 / r.eps).ln().powf(-0.5)).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.residual).collect();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let fitted_constant = sxy / sxx;
    let lx: Vec<f64> = rows.iter().map(|r| (1.0 / r.eps).ln().ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let fitted_log_rate = if rows.len() >= 2 {
        let n = rows.len() as f64;
        let mx = lx.iter().sum::<f64>() / n;
        let my = ly.iter().sum::<f64>() / n;
        let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
        num / den
    } else {
        f64::NAN
    };
    Ok(DecayReport { k, beta, xi, rows, fitted_constant, fitted_log_rate })
}

/// `2^{-j}` for `j` in `from..=to`.
pub fn dyadic_eps(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|j| 2f64.powi(-j)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn right() -> CornerAngle {
        CornerAngle::new(PI / 2.0).unwrap()
    }

    #[test]
    fn supports_and_normalization() {
        let f = build_weyl_field(-2.0, right(), 2f64.powi(-6), 0.3, RealPart::default()).unwrap();
        assert_eq!(f.value(0.5 * f.epsilon, 0.1), 0.0);
        assert_eq!(f.value(3.0 * f.r0, 0.1), 0.0);
        assert_eq!(f.value(1.0, 0.2), 0.0);
        let fine = PolarQuadrature { points: 16, log_panel: 0.05, angular_panels: 16 };
        assert!((f.energy(fine) - 1.0).abs() < 1e-3);
        assert!(f.mean_defect < 1e-10);
    }

    #[test]
    fn plateau_matches_the_uncut_field() {
        let f = build_weyl_field(-2.0, right(), 2f64.powi(-7), 0.3, RealPart::default()).unwrap();
        let r: f64 = 0.1;
        for th in [-0.5, 0.1, 2.0] {
            let phi = f.profile.eval(th);
            let expect = f.s_eps * (Complex64::new(0.0, f.xi * r.ln()).exp() * phi).re;
            assert!((f.value(r, th) - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn conventions_agree_for_real_profiles() {
        let a = build_weyl_field(-2.0, right(), 0.01, 0.3, RealPart::FullProduct).unwrap();
        let b = build_weyl_field(-2.0, right(), 0.01, 0.3, RealPart::RadialOnly).unwrap();
        assert!(a.profile.max_imag(64) < 1e-12);
        for (r, th) in [(0.05, 0.3), (0.2, 3.0)] {
            assert!((a.value(r, th) - b.value(r, th)).abs() < 1e-12);
        }
    }

    #[test]
    fn m_eps_grows_logarithmically() {
        let r0 = 0.3;
        let vals: Vec<(f64, f64)> = (3..=10)
            .map(|j| {
                let eps = 2f64.powi(-j);
                (eps, m_eps(-2.0, right(), eps, r0).unwrap())
            })
            .collect();
        for w in vals.windows(2) {
            assert!(w[1].1 > w[0].1);
        }
        let ratio = |(eps, m): (f64, f64)| m / (r0 / eps).ln();
        let last = ratio(vals[vals.len() - 1]);
        let prev = ratio(vals[vals.len() - 2]);
        assert!((last / prev - 1.0).abs() < 0.05, "{vals:?}");
    }

    #[test]
    fn m_eps_is_converged() {
        let f = build_weyl_field(-2.0, right(), 2f64.powi(-8), 0.3, RealPart::default()).unwrap();
        let a = f.m_eps();
        let alpha = f.alpha();
        let b = PolarQuadrature { points: 16, log_panel: 0.02, angular_panels: 32 }.integrate(
            f.epsilon,
            f.r0,
            &[],
            alpha,
            |r, th, ins| {
                let (_, ur, ut) = f.singular(r, th, ins);
                ur * ur + ut * ut / (r * r)
            },
        );
        assert!((a - b).abs() < 1e-6 * b);
    }

    #[test]
    fn weak_convergence_proxy() {
        let tests: [fn(f64, f64) -> f64; 3] = [|_, _| 1.0, |x, _| x, |x, y| (x + 2.0 * y).cos()];
        for t in tests {
            let vals: Vec<f64> = [4, 6, 8]
                .iter()
                .map(|&j| {
                    let f = build_weyl_field(-2.0, right(), 2f64.powi(-j), 0.3, RealPart::default()).unwrap();
                    f.pair_with(t, PolarQuadrature::default()).abs()
                })
                .collect();
            assert!(vals[2] < vals[0], "{vals:?}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(build_weyl_field(-2.0, right(), 0.1, 0.3, RealPart::default()).is_err());
        assert!(matches!(
            build_weyl_field(-5.0, right(), 0.01, 0.3, RealPart::default()),
            Err(Error::NoImaginaryRoot { .. })
        ));
    }
}
