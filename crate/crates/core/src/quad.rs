//! Quadrature helpers shared by the spectral and variational code.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Composite rule over `panels` equal sub-intervals of `[a, b]`.
    pub fn integrate_composite<F: FnMut(f64) -> f64>(
        &self,
        a: f64,
        b: f64,
        panels: usize,
        mut f: F,
    ) -> f64 {
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|p| {
                let lo = a + h * p as f64;
                self.integrate(lo, lo + h, &mut f)
            })
            .sum()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, w * half))
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

const GK_XK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod_15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut kronrod = fc * GK_WK[7];
    let mut gauss = fc * GK_WG[3];
    for j in 0..7 {
        let dx = half * GK_XK[j];
        let s = f(mid - dx) + f(mid + dx);
        kronrod += GK_WK[j] * s;
        if j % 2 == 1 {
            gauss += GK_WG[j / 2] * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Globally adaptive Gauss–Kronrod (7/15) integration.
///
/// Subdivides the interval with the largest error estimate until the summed
/// estimate drops below `max(abs_tol, rel_tol * |I|)` or `max_intervals` is hit.
pub fn adaptive_gk<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> f64 {
    let (v, e) = gauss_kronrod_15(&mut f, a, b);
    let mut pieces = vec![(a, b, v, e)];
    loop {
        let total: f64 = pieces.iter().map(|p| p.2).sum();
        let err: f64 = pieces.iter().map(|p| p.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) || pieces.len() >= max_intervals {
            return total;
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = pieces.swap_remove(idx);
        let m = 0.5 * (lo + hi);
        let (v1, e1) = gauss_kronrod_15(&mut f, lo, m);
        let (v2, e2) = gauss_kronrod_15(&mut f, m, hi);
        pieces.push((lo, m, v1, e1));
        pieces.push((m, hi, v2, e2));
    }
}

/// Quintic smoothstep: 0 below 0, 1 above 1, C² with vanishing first and
/// second derivatives at both ends.
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    }
}

pub fn smoothstep_deriv(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        30.0 * t * t * (1.0 - t) * (1.0 - t)
    }
}

pub fn smoothstep_deriv2(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let gl = GaussLegendre::new(8);
        // degree 15 is the limit for 8 points
        let v = gl.integrate(0.0, 2.0, |x| x.powi(15));
        assert!((v - 2f64.powi(16) / 16.0).abs() < 1e-9);
        let w: f64 = gl.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn high_order_rule_integrates_cosine() {
        let gl = GaussLegendre::new(40);
        let v = gl.integrate(0.0, PI, f64::sin);
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let v = adaptive_gk(|x| x.sqrt().ln(), 0.0, 1.0, 1e-12, 1e-12, 2000);
        assert!((v + 0.5).abs() < 1e-9, "{v}");
    }

    #[test]
    fn smoothstep_is_c2() {
        assert_eq!(smoothstep(0.0), 0.0);
        assert_eq!(smoothstep(1.0), 1.0);
        assert!((smoothstep(0.5) - 0.5).abs() < 1e-15);
        let h = 1e-6;
        for &t in &[0.2, 0.5, 0.9] {
            let fd = (smoothstep(t + h) - smoothstep(t - h)) / (2.0 * h);
            assert!((fd - smoothstep_deriv(t)).abs() < 1e-8);
            let fd2 = (smoothstep_deriv(t + h) - smoothstep_deriv(t - h)) / (2.0 * h);
            assert!((fd2 - smoothstep_deriv2(t)).abs() < 1e-6);
        }
    }
}
