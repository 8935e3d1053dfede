//! Explicit inf-sup certificates `(p, q = 1, d)` for the folded sector system.
//!
//! With test functions `phi = (Akp + d) w + (Akq - d) v`, `psi = p w + q v`,
//! the integrand of the bilinear form becomes the quadratic form
//!
//! ```text
//! e = (Akp+d) x1^2 + (Akq-d+p) x1 x3 + q x3^2
//!   + (Akp+d) x2^2 + (Akq-d+A^2 p) x2 x4 + A^2 q x4^2
//! ```
//!
//! in the polar gradient components of `w` and `v`, and it is positive
//! definite exactly when both discriminants below are negative.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dispersion::{critical_contrasts, CornerAngle};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CertificateBranch {
    /// `-A < k < 0`, `lambda > lambda_+`; `d = -Ak`.
    AboveInterval,
    /// `k < -1/A`, `lambda < lambda_-`; `d = A^2 + kA`.
    BelowInterval,
    /// `k >= 0`: the system is elliptic anyway; `d = A^2 + kA` still gives
    /// negative discriminants.
    Classical,
    /// Hand-picked parameters.
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoercivityCertificate {
    pub k: f64,
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
    pub d: f64,
    pub a: f64,
    pub disc1: f64,
    pub disc2: f64,
    /// Roots `(f_-, f_+)` of the first discriminant as a polynomial in `p`.
    pub f_interval: Option<(f64, f64)>,
    /// Roots `(g_-, g_+)` of the second discriminant.
    pub g_interval: Option<(f64, f64)>,
    pub branch: CertificateBranch,
}

/// `A = alpha / (2 pi - alpha)`.
pub fn fold_ratio(alpha: CornerAngle) -> f64 {
    alpha.fold_ratio()
}

pub fn discriminants(k: f64, a: f64, p: f64, d: f64) -> (f64, f64) {
    let ak = a * k;
    let lead = ak * p + d;
    let disc1 = (ak - d + p).powi(2) - 4.0 * lead;
    let disc2 = (ak - d + a * a * p).powi(2) - 4.0 * a * a * lead;
    (disc1, disc2)
}

/// `(f_-, f_+)` and `(g_-, g_+)` for a given `d`, or `None` where a square
/// root argument is negative (non-real roots).
pub fn root_intervals(k: f64, a: f64, d: f64) -> (Option<(f64, f64)>, Option<(f64, f64)>) {
    let mid = d + a * k;
    let rf = d * (1.0 + a * k);
    let rg = d * (1.0 + k / a);
    let f = (rf >= 0.0).then(|| {
        let s = 2.0 * rf.sqrt();
        (mid - s, mid + s)
    });
    let g = (rg >= 0.0).then(|| {
        let s = 2.0 * a * rg.sqrt();
        ((mid - s) / (a * a), (mid + s) / (a * a))
    });
    (f, g)
}

impl CoercivityCertificate {
    /// Certificate with explicitly chosen `p` and `d` (no validity check).
    pub fn custom(k: f64, alpha: CornerAngle, p: f64, d: f64) -> Self {
        let a = alpha.fold_ratio();
        let (disc1, disc2) = discriminants(k, a, p, d);
        let (f_interval, g_interval) = root_intervals(k, a, d);
        CoercivityCertificate {
            k,
            alpha: alpha.radians(),
            p,
            q: 1.0,
            d,
            a,
            disc1,
            disc2,
            f_interval,
            g_interval,
            branch: CertificateBranch::Custom,
        }
    }

    /// `A k p + d`, the coefficient that must stay positive.
    pub fn lead(&self) -> f64 {
        self.a * self.k * self.p + self.d
    }

    pub fn is_valid(&self) -> bool {
        self.disc1 < 0.0 && self.disc2 < 0.0 && self.lead() > 0.0
    }

    /// The two 2x2 blocks of the quadratic form, in `(x1, x3)` and `(x2, x4)`.
    pub fn blocks(&self) -> [[[f64; 2]; 2]; 2] {
        let ak = self.a * self.k;
        let lead = self.lead();
        let b1 = 0.5 * (ak * self.q - self.d + self.p);
        let b2 = 0.5 * (ak * self.q - self.d + self.a * self.a * self.p);
        [[[lead, b1], [b1, self.q]], [[lead, b2], [b2, self.a * self.a * self.q]]]
    }

    /// Evaluates the quadratic form at `x = (x1, x2, x3, x4)`.
    pub fn form(&self, x: [f64; 4]) -> f64 {
        let [m1, m2] = self.blocks();
        let q = |m: [[f64; 2]; 2], u: f64, v: f64| m[0][0] * u * u + 2.0 * m[0][1] * u * v + m[1][1] * v * v;
        q(m1, x[0], x[2]) + q(m2, x[1], x[3])
    }
}

/// Certificate from the explicit choice of `d` in the two cases of the proof,
/// with `p` at the midpoint of `(f_-, f_+) ∩ (g_-, g_+)`.
pub fn coercivity_certificate(k: f64, alpha: CornerAngle) -> Result<CoercivityCertificate> {
    if !k.is_finite() {
        return Err(Error::InvalidParameter(format!("k = {k}")));
    }
    let crit = critical_contrasts(alpha);
    if crit.contains_k(k) {
        return Err(Error::CriticalContrast { k, k_plus: crit.k_plus, k_minus: crit.k_minus });
    }
    let a = alpha.fold_ratio();
    let (d, branch) = if k >= 0.0 {
        (a * a + k * a, CertificateBranch::Classical)
    } else if k > -a {
        (-a * k, CertificateBranch::AboveInterval)
    } else {
        (a * a + k * a, CertificateBranch::BelowInterval)
    };
    let (f, g) = root_intervals(k, a, d);
    let (f, g) = match (f, g) {
        (Some(f), Some(g)) => (f, g),
        _ => return Err(Error::CriticalContrast { k, k_plus: crit.k_plus, k_minus: crit.k_minus }),
    };
    let lo = f.0.max(g.0);
    let hi = f.1.min(g.1);
    if !(lo < hi) {
        return Err(Error::CriticalContrast { k, k_plus: crit.k_plus, k_minus: crit.k_minus });
    }
    let mut c = CoercivityCertificate::custom(k, alpha, 0.5 * (lo + hi), d);
    c.branch = branch;
    Ok(c)
}

#[derive(Debug, Clone, Serialize)]
pub struct FormCheck {
    pub samples: usize,
    /// Smallest `e(x) / |x|^2` over the samples.
    pub min_ratio: f64,
    pub min_eig_block1: f64,
    pub min_eig_block2: f64,
    pub disc1: f64,
    pub disc2: f64,
    pub passed: bool,
}

fn min_eig(m: [[f64; 2]; 2]) -> f64 {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    0.5 * tr - disc
}

/// Samples the quadratic form at random unit 4-vectors and checks both 2x2
/// blocks for positive definiteness.
pub fn certificate_form_check(cert: &CoercivityCertificate, samples: usize, seed: u64) -> FormCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_ratio = f64::INFINITY;
    for _ in 0..samples {
        let mut x = [0.0; 4];
        for v in x.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let n2: f64 = x.iter().map(|v| v * v).sum();
        if n2 == 0.0 {
            continue;
        }
        min_ratio = min_ratio.min(cert.form(x) / n2);
    }
    let [b1, b2] = cert.blocks();
    let (e1, e2) = (min_eig(b1), min_eig(b2));
    let passed = min_ratio > 0.0 && e1 > 0.0 && e2 > 0.0;
    FormCheck {
        samples,
        min_ratio,
        min_eig_block1: e1,
        min_eig_block2: e2,
        disc1: cert.disc1,
        disc2: cert.disc2,
        passed,
    }
}
