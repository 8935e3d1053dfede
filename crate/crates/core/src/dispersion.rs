//! Corner singularity exponents of the two-phase transmission problem.
//!
//! A corner of opening `alpha` separates a sector of conductivity `k`
//! (`|theta| < alpha/2`) from a background of conductivity 1. Separable
//! solutions `r^eta phi(theta)` exist when `eta` solves the dispersion relation
//! `2k/(k^2+1) = F(eta, alpha)`; for contrasts inside the critical interval the
//! exponent becomes purely imaginary (`eta = i xi`) and `F` is replaced by the
//! hyperbolic `F~(xi, alpha)`.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::adaptive_gk;

/// Below this magnitude `F` and `F~` are evaluated from their Taylor series.
pub const SERIES_THRESHOLD: f64 = 1e-4;

const BISECTION_MAX_ITER: usize = 200;
const REAL_BRACKET: (f64, f64) = (1e-12, 1.0 - 1e-12);
const IMAG_BRACKET: (f64, f64) = (1e-12, 60.0);

/// Interior opening angle of the corner, strictly inside `(0, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct CornerAngle(f64);

impl CornerAngle {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha > 0.0 && alpha < PI {
            Ok(Self(alpha))
        } else {
            Err(Error::InvalidAngle(alpha))
        }
    }

    #[inline]
    pub fn radians(self) -> f64 {
        self.0
    }

    /// Opening of the exterior sector, `2 pi - alpha`.
    #[inline]
    pub fn exterior(self) -> f64 {
        TAU - self.0
    }

    /// Folding ratio `alpha / (2 pi - alpha)`, in `(0, 1)`.
    #[inline]
    pub fn fold_ratio(self) -> f64 {
        self.0 / self.exterior()
    }
}

impl TryFrom<f64> for CornerAngle {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CornerAngle> for f64 {
    fn from(a: CornerAngle) -> f64 {
        a.0
    }
}

/// One of the three equivalent ways to specify a material contrast.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Contrast {
    /// Conductivity ratio inclusion / background.
    K(f64),
    /// Spectral parameter of the boundary integral operator.
    Lambda(f64),
    /// Spectral parameter of the variational operator.
    Beta(f64),
}

/// The linked scalars `(k, lambda, beta)` with
/// `lambda = (k+1)/(2(k-1))` and `beta = 1/2 - lambda = 1/(1-k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastTriple {
    pub k: f64,
    pub lambda: f64,
    pub beta: f64,
}

impl ContrastTriple {
    /// `2k/(k^2+1)`, the level the dispersion functions must reach.
    pub fn level(&self) -> f64 {
        dispersion_level(self.k)
    }
}

pub fn dispersion_level(k: f64) -> f64 {
    2.0 * k / (k * k + 1.0)
}

pub fn convert_contrast(input: Contrast) -> Result<ContrastTriple> {
    let k = match input {
        Contrast::K(k) => k,
        Contrast::Lambda(l) => {
            if !l.is_finite() {
                return Err(Error::InvalidParameter(format!("lambda = {l} is not finite")));
            }
            if l == 0.5 {
                return Err(Error::InvalidParameter(
                    "lambda = 1/2 corresponds to an infinite contrast".into(),
                ));
            }
            (2.0 * l + 1.0) / (2.0 * l - 1.0)
        }
        Contrast::Beta(b) => {
            if !b.is_finite() {
                return Err(Error::InvalidParameter(format!("beta = {b} is not finite")));
            }
            if b == 0.0 {
                return Err(Error::InvalidParameter(
                    "beta = 0 corresponds to an infinite contrast".into(),
                ));
            }
            1.0 - 1.0 / b
        }
    };
    if !k.is_finite() {
        return Err(Error::InvalidParameter(format!("k = {k} is not finite")));
    }
    if k == 1.0 {
        return Err(Error::DegenerateContrast(k));
    }
    let lambda = (k + 1.0) / (2.0 * (k - 1.0));
    let beta = 1.0 / (1.0 - k);
    Ok(ContrastTriple { k, lambda, beta })
}

/// Critical contrasts and the matching ends of the critical interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalSet {
    pub k_plus: f64,
    pub k_minus: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
}

impl CriticalSet {
    /// True when `k` lies in the closed interval `[k_plus, k_minus]`.
    pub fn contains_k(&self, k: f64) -> bool {
        k >= self.k_plus && k <= self.k_minus
    }

    /// True when `k` lies in the open interval `(k_plus, k_minus)`.
    pub fn contains_k_open(&self, k: f64) -> bool {
        k > self.k_plus && k < self.k_minus
    }
}

pub fn critical_contrasts(alpha: CornerAngle) -> CriticalSet {
    let a = alpha.radians();
    let b = alpha.exterior();
    let lambda_plus = 0.5 * (1.0 - a / PI);
    CriticalSet {
        k_plus: -b / a,
        k_minus: -a / b,
        lambda_minus: -lambda_plus,
        lambda_plus,
    }
}

/// Which sign convention to use for the real dispersion function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignConvention {
    /// `sin(a eta) sin(b eta) / (cos(a eta) cos(b eta) - 1)`; increasing from
    /// `F(0)` < 0 to `F(1) = 1`.
    #[default]
    Consistent,
    /// The opposite sign, `sin sin / (1 - cos cos)`; kept for comparison.
    Verbatim,
}

/// Taylor expansion of `F = N/D` in `t = eta^2` (use `t = -xi^2` for the
/// hyperbolic branch), with `N = sin(a eta) sin(b eta)` and
/// `D = cos(a eta) cos(b eta) - 1`, both divided by `eta^2`.
fn series_value(a: f64, b: f64, t: f64) -> f64 {
    let a2 = a * a;
    let b2 = b * b;
    let num = a * b * (1.0 - (a2 + b2) * t / 6.0 + ((a2 * a2 + b2 * b2) / 120.0 + a2 * b2 / 36.0) * t * t);
    let den = -(a2 + b2) / 2.0
        + ((a2 * a2 + b2 * b2) / 24.0 + a2 * b2 / 4.0) * t
        - ((a2 * a2 * a2 + b2 * b2 * b2) / 720.0 + a2 * b2 * (a2 + b2) / 48.0) * t * t;
    num / den
}

/// Real dispersion function `F(eta, alpha)` on `[0, 1]`.
pub fn eval_f(eta: f64, alpha: CornerAngle) -> f64 {
    eval_f_with(eta, alpha, SignConvention::Consistent)
}

pub fn eval_f_with(eta: f64, alpha: CornerAngle, convention: SignConvention) -> f64 {
    let a = alpha.radians();
    let b = alpha.exterior();
    let value = if eta.abs() < SERIES_THRESHOLD {
        series_value(a, b, eta * eta)
    } else {
        // cos x cos y - 1 = -(sin^2((x-y)/2) + sin^2((x+y)/2)), no cancellation.
        let num = (a * eta).sin() * (b * eta).sin();
        let half_diff = (0.5 * (b - a) * eta).sin();
        let half_sum = (PI * eta).sin();
        // 1 - cos x cos y >= |sin x sin y|, so |F| <= 1; clamp rounding overshoot.
        (-num / (half_diff * half_diff + half_sum * half_sum)).clamp(-1.0, 1.0)
    };
    match convention {
        SignConvention::Consistent => value,
        SignConvention::Verbatim => -value,
    }
}

/// `F~(xi, alpha) + 1`, evaluated without cancellation.
///
/// `F~` tends to -1 exponentially fast, so beyond moderate `xi` the sum
/// `-1 + gap` rounds to -1 in double precision; the gap itself stays
/// representable and strictly decreasing.
pub fn ftilde_gap(xi: f64, alpha: CornerAngle) -> f64 {
    let a = alpha.radians();
    let b = alpha.exterior();
    let xi = xi.abs();
    if xi < SERIES_THRESHOLD {
        return 1.0 + series_value(a, b, -xi * xi);
    }
    // F~ + 1 = 2 e^{-2a xi} (1 - e^{-(b-a) xi})^2 / den, den as in `eval_ftilde`.
    let epi = -(-TAU * xi).exp_m1();
    let ed = -(-(b - a) * xi).exp_m1();
    let decay = (-2.0 * a * xi).exp();
    2.0 * decay * ed * ed / (epi * epi + decay * ed * ed)
}

/// Hyperbolic dispersion function `F~(xi, alpha)` for `xi >= 0`.
pub fn eval_ftilde(xi: f64, alpha: CornerAngle) -> f64 {
    let a = alpha.radians();
    let b = alpha.exterior();
    let xi = xi.abs();
    if xi < SERIES_THRESHOLD {
        return series_value(a, b, -xi * xi);
    }
    // Scaled by exp(-2 pi xi) so that no term overflows:
    // F~ = -(1-e^{-2a xi})(1-e^{-2b xi}) / ((1-e^{-2 pi xi})^2 + e^{-2a xi}(1-e^{-(b-a) xi})^2)
    let ea = -(-2.0 * a * xi).exp_m1();
    let eb = -(-2.0 * b * xi).exp_m1();
    let epi = -(-TAU * xi).exp_m1();
    let ed = -(-(b - a) * xi).exp_m1();
    (-(ea * eb) / (epi * epi + (-2.0 * a * xi).exp() * ed * ed)).max(-1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RootKind {
    Real,
    Imaginary,
}

/// Singular exponent: `eta` in `(0, 1)` or `eta = i xi` with `xi > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionRoot {
    pub kind: RootKind,
    pub value: f64,
}

impl DispersionRoot {
    pub fn eta(&self) -> Complex64 {
        match self.kind {
            RootKind::Real => Complex64::new(self.value, 0.0),
            RootKind::Imaginary => Complex64::new(0.0, self.value),
        }
    }

    /// `|F(root) - 2k/(k^2+1)|` for the branch the root belongs to.
    pub fn residual(&self, k: f64, alpha: CornerAngle) -> f64 {
        let f = match self.kind {
            RootKind::Real => eval_f(self.value, alpha),
            RootKind::Imaginary => eval_ftilde(self.value, alpha),
        };
        (f - dispersion_level(k)).abs()
    }
}

fn bisect<F: Fn(f64) -> f64>(g: F, mut lo: f64, mut hi: f64) -> f64 {
    let mut g_lo = g(lo);
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g_mid = g(mid);
        if g_mid == 0.0 {
            return mid;
        }
        if (g_mid > 0.0) == (g_lo > 0.0) {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Real exponent `eta` in `(0, 1)` solving `F(eta, alpha) = 2k/(k^2+1)`.
pub fn solve_dispersion_real(k: f64, alpha: CornerAngle) -> Result<DispersionRoot> {
    if k == 1.0 {
        return Err(Error::DegenerateContrast(k));
    }
    if !k.is_finite() {
        return Err(Error::InvalidParameter(format!("k = {k} is not finite")));
    }
    let level = dispersion_level(k);
    let floor = eval_f(0.0, alpha);
    if level <= floor {
        return Err(Error::NoRealRoot { k, level, floor });
    }
    let (lo, hi) = REAL_BRACKET;
    // F is strictly increasing, so the root is unique.
    let eta = bisect(|eta| eval_f(eta, alpha) - level, lo, hi);
    Ok(DispersionRoot { kind: RootKind::Real, value: eta })
}

/// Imaginary exponent `xi > 0` solving `F~(xi, alpha) = 2k/(k^2+1)`.
pub fn solve_dispersion_imag(k: f64, alpha: CornerAngle) -> Result<DispersionRoot> {
    let crit = critical_contrasts(alpha);
    if k == -1.0 {
        return Err(Error::DegenerateContrast(k));
    }
    if !crit.contains_k_open(k) {
        return Err(Error::NoImaginaryRoot { k, k_plus: crit.k_plus, k_minus: crit.k_minus });
    }
    let level = dispersion_level(k);
    let (lo, mut hi) = IMAG_BRACKET;
    // F~ decreases towards -1; widen the bracket for levels extremely close to -1.
    while eval_ftilde(hi, alpha) > level {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::DegenerateContrast(k));
        }
    }
    let xi = bisect(|xi| eval_ftilde(xi, alpha) - level, lo, hi);
    Ok(DispersionRoot { kind: RootKind::Imaginary, value: xi })
}

/// Solves whichever branch exists for `k`; `None` when `k = -1` or `k = 1`
/// or `k` is exactly critical.
pub fn solve_dispersion(k: f64, alpha: CornerAngle) -> Option<DispersionRoot> {
    solve_dispersion_real(k, alpha)
        .or_else(|_| solve_dispersion_imag(k, alpha))
        .ok()
}

/// The 4x4 transmission system for the coefficients `(a1, b1, a2, b2)`.
///
/// Rows: continuity at `theta = -alpha/2`, continuity at `alpha/2`, flux
/// continuity at `-alpha/2`, flux continuity at `alpha/2`.
pub fn dispersion_matrix(eta: Complex64, k: f64, alpha: CornerAngle) -> Matrix4<Complex64> {
    let a = alpha.radians();
    let c2 = (eta * TAU).cos();
    let s2 = (eta * TAU).sin();
    let ca = (eta * a).cos();
    let sa = (eta * a).sin();
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let kc = Complex64::new(k, 0.0);
    Matrix4::new(
        one, zero, -c2, -s2, //
        ca, sa, -ca, -sa, //
        zero, kc, s2, -c2, //
        -kc * sa, kc * ca, sa, -ca,
    )
}

/// Determinant after scaling every row to unit Euclidean norm.
pub fn scaled_determinant(m: &Matrix4<Complex64>) -> Complex64 {
    let mut s = *m;
    for i in 0..4 {
        let n = s.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n > 0.0 {
            for j in 0..4 {
                s[(i, j)] /= n;
            }
        }
    }
    s.determinant()
}

/// Angular profile `phi(theta)` of a separable corner solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileCoeffs {
    pub a1: Complex64,
    pub b1: Complex64,
    pub a2: Complex64,
    pub b2: Complex64,
    pub eta: Complex64,
    pub alpha: f64,
}

impl ProfileCoeffs {
    pub fn as_vector(&self) -> [Complex64; 4] {
        [self.a1, self.b1, self.a2, self.b2]
    }

    /// Reduces `theta` to the fundamental window `[-alpha/2, 2 pi - alpha/2)`.
    fn wrap(&self, theta: f64) -> f64 {
        let lo = -0.5 * self.alpha;
        lo + (theta - lo).rem_euclid(TAU)
    }

    /// True when `theta` lies in the inclusion sector `|theta| < alpha/2`.
    pub fn in_sector(&self, theta: f64) -> bool {
        self.wrap(theta) < 0.5 * self.alpha
    }

    fn coeffs_for(&self, inside: bool) -> (Complex64, Complex64) {
        if inside {
            (self.a1, self.b1)
        } else {
            (self.a2, self.b2)
        }
    }

    /// Value of the branch selected by `inside`, continued to any `theta` in the window.
    pub fn eval_branch(&self, theta: f64, inside: bool) -> Complex64 {
        let t = self.wrap(theta);
        let (a, b) = self.coeffs_for(inside);
        let arg = self.eta * (t + 0.5 * self.alpha);
        a * arg.cos() + b * arg.sin()
    }

    pub fn deriv_branch(&self, theta: f64, inside: bool) -> Complex64 {
        let t = self.wrap(theta);
        let (a, b) = self.coeffs_for(inside);
        let arg = self.eta * (t + 0.5 * self.alpha);
        self.eta * (-a * arg.sin() + b * arg.cos())
    }

    pub fn eval(&self, theta: f64) -> Complex64 {
        self.eval_branch(theta, self.in_sector(theta))
    }

    pub fn deriv(&self, theta: f64) -> Complex64 {
        self.deriv_branch(theta, self.in_sector(theta))
    }

    /// Largest imaginary part of `phi` over a sample of angles.
    pub fn max_imag(&self, samples: usize) -> f64 {
        (0..samples)
            .map(|i| {
                let t = -0.5 * self.alpha + TAU * (i as f64 + 0.5) / samples as f64;
                self.eval(t).im.abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Relative size below which a second singular value counts as zero.
const NULL_SPACE_TOL: f64 = 1e-12;

/// Null vector of the transmission system at a dispersion root.
pub fn angular_profile(root: &DispersionRoot, k: f64, alpha: CornerAngle) -> Result<ProfileCoeffs> {
    let eta = root.eta();
    let m = dispersion_matrix(eta, k, alpha);
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let (imin, smin) = svd
        .singular_values
        .iter()
        .copied()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("four singular values");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if smin > 1e-6 * smax {
        return Err(Error::NotSingular(smin / smax));
    }
    let mut v: [Complex64; 4] = std::array::from_fn(|j| v_t[(imin, j)].conj());

    // A second vanishing singular value means a two-dimensional null space
    // (the homogeneous medium at eta = 1). Return its member with a1 = 0,
    // i.e. the profile that vanishes at theta = -alpha/2.
    let second = (0..4)
        .filter(|&i| i != imin)
        .min_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]))
        .expect("four singular values");
    if svd.singular_values[second] <= NULL_SPACE_TOL * smax {
        let u: [Complex64; 4] = std::array::from_fn(|j| v_t[(second, j)].conj());
        let (c1, c2) = (u[0], -v[0]);
        let mut z: [Complex64; 4] = std::array::from_fn(|j| c1 * v[j] + c2 * u[j]);
        let n = z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if n > 0.0 {
            z.iter_mut().for_each(|c| *c /= n);
            v = z;
        }
    } else {
        v = inverse_iteration(&m, v);
    }

    // Rotate the global phase so that phi is real-valued. In the real basis
    // (a, i b) for imaginary exponents, (a, b) for real ones, the null vector
    // is real up to a common complex factor.
    let basis: [Complex64; 4] = match root.kind {
        RootKind::Real => [Complex64::new(1.0, 0.0); 4],
        RootKind::Imaginary => [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
        ],
    };
    let pivot = (0..4)
        .max_by(|&i, &j| v[i].norm().total_cmp(&v[j].norm()))
        .expect("four components");
    let w = v[pivot] * basis[pivot];
    let phase = w.conj() / w.norm();
    for (z, e) in v.iter_mut().zip(basis) {
        *z = e * (*z * phase * e.conj()).re;
    }
    let n = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|c| *c /= n);
    Ok(ProfileCoeffs { a1: v[0], b1: v[1], a2: v[2], b2: v[3], eta, alpha: alpha.radians() })
}

/// Polishes an approximate null vector. For large `xi` the entries grow like
/// `cosh(2 pi xi)` and the singular vector alone loses several digits.
fn inverse_iteration(m: &Matrix4<Complex64>, mut v: [Complex64; 4]) -> [Complex64; 4] {
    let lu = m.lu();
    let residual = |v: &[Complex64; 4]| (m * Vector4::from(*v)).norm();
    let mut best = residual(&v);
    for _ in 0..3 {
        let Some(x) = lu.solve(&Vector4::from(v)) else { break };
        let n = x.norm();
        if !n.is_finite() || n == 0.0 {
            break;
        }
        let w: [Complex64; 4] = std::array::from_fn(|j| x[j] / n);
        let r = residual(&w);
        if r >= best {
            break;
        }
        best = r;
        v = w;
    }
    v
}

/// `int_0^{2 pi} a(theta) f(theta) d theta` with `a = k` on `|theta| < alpha/2`
/// and 1 elsewhere, by adaptive quadrature on each smooth piece.
pub fn weighted_mean<F: Fn(f64, bool) -> Complex64>(f: F, k: f64, alpha: CornerAngle) -> Complex64 {
    let a = alpha.radians();
    let piece = |lo: f64, hi: f64, inside: bool| {
        let re = adaptive_gk(|t| f(t, inside).re, lo, hi, 1e-15, 1e-14, 500);
        let im = adaptive_gk(|t| f(t, inside).im, lo, hi, 1e-15, 1e-14, 500);
        Complex64::new(re, im)
    };
    piece(-0.5 * a, 0.5 * a, true) * k + piece(0.5 * a, TAU - 0.5 * a, false)
}

/// `int a(theta) phi(theta) d theta`; vanishes for imaginary-exponent profiles.
pub fn profile_weighted_mean(profile: &ProfileCoeffs, k: f64, alpha: CornerAngle) -> Complex64 {
    weighted_mean(|t, inside| profile.eval_branch(t, inside), k, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn right() -> CornerAngle {
        CornerAngle::new(PI / 2.0).unwrap()
    }

    #[test]
    fn angle_validation() {
        assert!(CornerAngle::new(0.0).is_err());
        assert!(CornerAngle::new(PI).is_err());
        assert!(CornerAngle::new(f64::NAN).is_err());
        assert!(CornerAngle::new(1.0).is_ok());
    }

    #[test]
    fn contrast_examples() {
        let t = convert_contrast(Contrast::K(-3.0)).unwrap();
        assert!((t.lambda - 0.25).abs() < 1e-15 && (t.beta - 0.25).abs() < 1e-15);
        let t = convert_contrast(Contrast::K(-1.0)).unwrap();
        assert_eq!(t.lambda, 0.0);
        assert_eq!(t.beta, 0.5);
        let t = convert_contrast(Contrast::K(0.0)).unwrap();
        assert_eq!(t.lambda, -0.5);
        assert_eq!(t.beta, 1.0);
        assert_eq!(convert_contrast(Contrast::K(1.0)), Err(Error::DegenerateContrast(1.0)));
    }

    #[test]
    fn contrast_roundtrip_through_lambda_and_beta() {
        for &k in &[-7.5, -2.0, -0.3, 0.4, 3.0, 12.0] {
            let t = convert_contrast(Contrast::K(k)).unwrap();
            let tl = convert_contrast(Contrast::Lambda(t.lambda)).unwrap();
            let tb = convert_contrast(Contrast::Beta(t.beta)).unwrap();
            assert!((tl.k - k).abs() <= 1e-14 * k.abs().max(1.0));
            assert!((tb.k - k).abs() <= 1e-14 * k.abs().max(1.0));
            assert!((t.beta - (0.5 - t.lambda)).abs() <= 1e-14);
        }
    }

    #[test]
    fn critical_examples() {
        let c = critical_contrasts(right());
        assert!((c.k_plus + 3.0).abs() < 1e-14);
        assert!((c.k_minus + 1.0 / 3.0).abs() < 1e-14);
        assert!((c.lambda_plus - 0.25).abs() < 1e-15);
        assert_eq!(c.lambda_minus, -c.lambda_plus);
        let c = critical_contrasts(CornerAngle::new(PI / 3.0).unwrap());
        assert!((c.k_plus + 5.0).abs() < 1e-13);
        assert!((c.k_minus + 0.2).abs() < 1e-14);
        assert!((c.lambda_plus - 1.0 / 3.0).abs() < 1e-15);
        let c = critical_contrasts(CornerAngle::new(PI - 1e-9).unwrap());
        assert!((c.k_plus + 1.0).abs() < 1e-7 && (c.k_minus + 1.0).abs() < 1e-7);
        assert!(c.lambda_plus.abs() < 1e-7);
    }

    #[test]
    fn f_anchor_values() {
        assert!((eval_f(0.0, right()) + 0.6).abs() < 1e-14);
        assert!((eval_f(0.5, right()) + 1.0 / 3.0).abs() < 1e-14);
        for &a in &[0.3, 1.0, 2.0, 3.0] {
            let alpha = CornerAngle::new(a).unwrap();
            assert!((eval_f(1.0, alpha) - 1.0).abs() < 1e-13);
        }
        assert!((eval_f_with(0.5, right(), SignConvention::Verbatim) - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn series_crossover_is_continuous() {
        for &a in &[0.2, PI / 2.0, 3.0] {
            let alpha = CornerAngle::new(a).unwrap();
            let below = eval_f(SERIES_THRESHOLD * (1.0 - 1e-9), alpha);
            let above = eval_f(SERIES_THRESHOLD * (1.0 + 1e-9), alpha);
            assert!((below - above).abs() < 1e-12, "{below} {above}");
            let below = eval_ftilde(SERIES_THRESHOLD * (1.0 - 1e-9), alpha);
            let above = eval_ftilde(SERIES_THRESHOLD * (1.0 + 1e-9), alpha);
            assert!((below - above).abs() < 1e-12, "{below} {above}");
        }
    }

    #[test]
    fn ftilde_anchor_values() {
        assert!((eval_ftilde(0.0, right()) + 0.6).abs() < 1e-14);
        // F~(50) + 1 is about 1e-68: the gap is checked in its own representation.
        let far = eval_ftilde(50.0, right());
        assert!(far >= -1.0 && far < -1.0 + 1e-8);
        let gap = ftilde_gap(50.0, right());
        assert!(gap > 0.0 && gap < 1e-8);
        let mid = eval_ftilde(0.5, right());
        assert!(mid > -1.0 && mid < -0.6);
    }

    #[test]
    fn ftilde_matches_textbook_form_where_representable() {
        // Direct hyperbolic evaluation as an independent route.
        let alpha = right();
        let (a, b) = (alpha.radians(), alpha.exterior());
        for &xi in &[0.01, 0.3, 1.0, 4.0] {
            let direct = (a * xi).sinh() * (b * xi).sinh() / (1.0 - (a * xi).cosh() * (b * xi).cosh());
            assert!((direct - eval_ftilde(xi, alpha)).abs() < 1e-12);
        }
    }

    #[test]
    fn gap_matches_direct_sum_where_resolvable() {
        for &a in &[0.2, PI / 2.0, 3.0] {
            let alpha = CornerAngle::new(a).unwrap();
            for &xi in &[1e-5, 0.05, 0.4, 1.3, 3.0] {
                let direct = 1.0 + eval_ftilde(xi, alpha);
                assert!((direct - ftilde_gap(xi, alpha)).abs() < 1e-13, "{a} {xi}");
            }
        }
    }

    #[test]
    fn real_root_closed_form() {
        let k = -3.0 - 2.0 * 2f64.sqrt();
        let root = solve_dispersion_real(k, right()).unwrap();
        assert!((root.value - 0.5).abs() < 1e-10);
        assert!(root.residual(k, right()) < 1e-12);
        let det = scaled_determinant(&dispersion_matrix(root.eta(), k, right()));
        assert!(det.norm() <= 1e-9, "{det}");
        let p = angular_profile(&root, k, right()).unwrap();
        assert!(p.max_imag(64) < 1e-12);
        let lo = p.deriv_branch(0.25 * PI, true) * k;
        let hi = p.deriv_branch(0.25 * PI, false);
        assert!((lo - hi).norm() < 1e-10);
    }

    #[test]
    fn real_root_errors() {
        assert!(matches!(solve_dispersion_real(-1.0, right()), Err(Error::NoRealRoot { .. })));
        assert_eq!(solve_dispersion_real(1.0, right()), Err(Error::DegenerateContrast(1.0)));
    }

    #[test]
    fn imaginary_root_errors() {
        assert_eq!(solve_dispersion_imag(-1.0, right()), Err(Error::DegenerateContrast(-1.0)));
        assert!(matches!(solve_dispersion_imag(-5.0, right()), Err(Error::NoImaginaryRoot { .. })));
    }

    #[test]
    fn determinant_vanishes_for_homogeneous_medium() {
        let m = dispersion_matrix(Complex64::new(1.0, 0.0), 1.0, right());
        assert!(m.determinant().norm() < 1e-12);
        let p = angular_profile(&DispersionRoot { kind: RootKind::Real, value: 1.0 }, 1.0, right())
            .unwrap();
        let v = p.as_vector();
        let cos = (v[1] + v[3]).norm() / (2f64.sqrt() * v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt());
        assert!(cos > 1.0 - 1e-8, "{v:?}");
    }

    #[test]
    fn determinant_nonzero_off_root() {
        let m = dispersion_matrix(Complex64::new(0.3, 0.0), 5.0, right());
        assert!(m.determinant().norm() > 1e-6);
    }

    #[test]
    fn not_singular_is_reported() {
        let fake = DispersionRoot { kind: RootKind::Real, value: 0.3 };
        assert!(matches!(angular_profile(&fake, 5.0, right()), Err(Error::NotSingular(_))));
    }

    #[test]
    fn constant_profile_weighted_mean() {
        let alpha = right();
        let k = -2.0;
        let m = weighted_mean(|_, _| Complex64::new(1.0, 0.0), k, alpha);
        assert!((m.re - (k * PI / 2.0 + 1.5 * PI)).abs() < 1e-12);
        assert!(m.im.abs() < 1e-15);
    }
}
