//! Nyström discretization of the single layer and Neumann–Poincaré operators
//! on a boundary mesh, their spectra, and the transmission solver.

use std::f64::consts::{PI, TAU};

use nalgebra::{Cholesky, DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::critical_contrasts;
use crate::error::{Error, Result};
use crate::geometry::{BoundaryMesh, Point};

/// Eigenvalues whose imaginary part exceeds this are flagged in reports.
pub const IMAG_FLAG: f64 = 1e-4;
const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelMode {
    FreeSpace,
    /// Dirichlet Green function of the disk of this radius centered at the origin.
    DiskPoisson(f64),
}

impl KernelMode {
    fn check(&self, mesh: &BoundaryMesh) -> Result<()> {
        if let KernelMode::DiskPoisson(r) = *self {
            let reach = mesh.nodes.iter().map(|p| p.norm()).fold(0.0, f64::max);
            if !(r > 0.0) || reach >= r {
                return Err(Error::InvalidParameter(format!(
                    "curve reaches radius {reach}, not strictly inside the disk of radius {r}"
                )));
            }
        }
        Ok(())
    }
}

/// `G(x, y) = ln|x - y| / (2 pi)` plus the image correction in Poisson mode.
pub fn green(x: Point, y: Point, mode: KernelMode) -> f64 {
    let free = (x - y).norm().ln() / TAU;
    free + image_correction(x, y, mode)
}

fn image_correction(x: Point, y: Point, mode: KernelMode) -> f64 {
    match mode {
        KernelMode::FreeSpace => 0.0,
        KernelMode::DiskPoisson(r) => {
            // |y| |x - y*| with y* = R^2 y / |y|^2, written to stay finite at y = 0
            let q = x * y.norm_squared() - y * (r * r);
            let ny = y.norm();
            let prod = if ny > 0.0 { q.norm() / ny } else { r * r };
            -(prod / r).ln() / TAU
        }
    }
}

/// Gradient of `G(., y)` at `x`.
pub fn green_gradient(x: Point, y: Point, mode: KernelMode) -> Point {
    let d = x - y;
    let mut g = d / (TAU * d.norm_squared());
    if let KernelMode::DiskPoisson(r) = mode {
        let ny2 = y.norm_squared();
        if ny2 > 0.0 {
            let e = x - y * (r * r / ny2);
            g -= e / (TAU * e.norm_squared());
        }
    }
    g
}

/// Kernel of the adjoint NP operator, differentiated in the normal at `x`.
/// `curvature` is used for the diagonal limit when `x == y`.
pub fn np_kernel(x: Point, y: Point, nu_x: Point, curvature: f64, mode: KernelMode) -> f64 {
    let d = x - y;
    let r2 = d.norm_squared();
    let free = if r2 == 0.0 {
        curvature / (2.0 * TAU)
    } else {
        d.dot(&nu_x) / (TAU * r2)
    };
    match mode {
        KernelMode::DiskPoisson(r) if y.norm_squared() > 0.0 => {
            let e = x - y * (r * r / y.norm_squared());
            free - e.dot(&nu_x) / (TAU * e.norm_squared())
        }
        _ => free,
    }
}

/// Dense Nyström matrix with the mesh weights folded into its columns.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    pub matrix: DMatrix<f64>,
    pub weights: Vec<f64>,
    pub mode: KernelMode,
}

impl DenseOperator {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }
}

fn assemble_rows<F>(n: usize, entry: F) -> DMatrix<f64>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| entry(i, j)).collect())
        .collect();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

pub fn assemble_np_matrix(mesh: &BoundaryMesh, mode: KernelMode) -> Result<DenseOperator> {
    mode.check(mesh)?;
    let n = mesh.len();
    let cut = corner_cutoff(mesh);
    let matrix = assemble_rows(n, |i, j| {
        // couplings between the nodes straddling the vertex are dropped: their
        // log-spacing is too coarse to resolve the wedge kernel
        if (i < cut && j >= n - cut) || (j < cut && i >= n - cut) {
            return 0.0;
        }
        np_kernel(mesh.nodes[i], mesh.nodes[j], mesh.normals[i], mesh.curvature[i], mode) * mesh.weights[j]
    });
    Ok(DenseOperator { matrix, weights: mesh.weights.clone(), mode })
}

/// Number of nodes on each side of the vertex whose cross-vertex couplings
/// are removed: `ceil(q) - 1`, at least one, on graded meshes.
pub fn corner_cutoff(mesh: &BoundaryMesh) -> usize {
    if mesh.is_graded() {
        (mesh.grading.ceil() as usize).saturating_sub(1).max(1)
    } else {
        0
    }
}

/// Kress weights `R_d` for `int ln(4 sin^2((s - sigma)/2)) f(sigma) dsigma`
/// on `n` equispaced nodes, indexed by the node offset `d`.
fn kress_weights(n: usize) -> Vec<f64> {
    let nf = n as f64;
    let half = n / 2;
    (0..n)
        .map(|d| {
            let t = TAU * d as f64 / nf;
            let sum: f64 = (1..half).map(|m| (m as f64 * t).cos() / m as f64).sum();
            -4.0 * PI / nf * sum - 4.0 * PI / (nf * nf) * (half as f64 * t).cos()
        })
        .collect()
}

/// Single layer with the logarithmic singularity integrated by Kress product
/// quadrature in the computational parameter.
pub fn assemble_single_layer(mesh: &BoundaryMesh, mode: KernelMode) -> Result<DenseOperator> {
    mode.check(mesh)?;
    let n = mesh.len();
    let rw = kress_weights(n);
    let h = TAU / n as f64;
    let matrix = assemble_rows(n, |i, j| {
        let (x, y) = (mesh.nodes[i], mesh.nodes[j]);
        let smooth = if i == j {
            mesh.speed[i].ln()
        } else {
            let ds = mesh.s[i] - mesh.s[j];
            (x - y).norm().ln() - 0.5 * (4.0 * (0.5 * ds).sin().powi(2)).ln()
        };
        let d = (i + n - j) % n;
        let log_part = (0.5 * rw[d] + h * smooth) * mesh.speed[j] / TAU;
        log_part + image_correction(x, y, mode) * mesh.weights[j]
    });
    Ok(DenseOperator { matrix, weights: mesh.weights.clone(), mode })
}

/// Columns `e_j - (w_j / w_last) e_last`: a basis of the discretely mean-zero
/// subspace `sum w_i phi_i = 0`.
fn mean_zero_basis(weights: &[f64]) -> DMatrix<f64> {
    let n = weights.len();
    let last = weights[n - 1];
    DMatrix::from_fn(n, n - 1, |i, j| {
        if i == j {
            1.0
        } else if i == n - 1 {
            -weights[j] / last
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowCounts {
    pub delta: f64,
    pub delta_out: f64,
    /// Eigenvalues with `|lambda| < puncture` are left out of `inside`.
    pub puncture: f64,
    pub inside: usize,
    /// Count in `(lambda_- + delta, lambda_+ - delta)` with no puncture.
    pub inside_literal: usize,
    pub outside: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub n: usize,
    /// Real parts, ascending.
    pub eigenvalues: Vec<f64>,
    /// Imaginary parts in the same order.
    pub imag: Vec<f64>,
    pub residual_imag: f64,
    pub flagged: usize,
    pub interval: Option<(f64, f64)>,
    pub counts: Option<WindowCounts>,
}

impl SpectralReport {
    fn from_complex(n: usize, mut vals: Vec<Complex64>) -> Self {
        vals.sort_by(|a, b| a.re.total_cmp(&b.re));
        let residual_imag = vals.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        let flagged = vals.iter().filter(|z| z.im.abs() > IMAG_FLAG).count();
        SpectralReport {
            n,
            eigenvalues: vals.iter().map(|z| z.re).collect(),
            imag: vals.iter().map(|z| z.im).collect(),
            residual_imag,
            flagged,
            interval: None,
            counts: None,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Attach the reference interval `[lambda_-, lambda_+]` and window counts.
    pub fn with_counts(mut self, interval: (f64, f64), delta: f64, delta_out: f64, puncture: f64) -> Self {
        let (lo, hi) = interval;
        let inside_literal = self
            .eigenvalues
            .iter()
            .filter(|&&v| v > lo + delta && v < hi - delta)
            .count();
        let inside = self
            .eigenvalues
            .iter()
            .filter(|&&v| v > lo + delta && v < hi - delta && v.abs() >= puncture)
            .count();
        let outside = self
            .eigenvalues
            .iter()
            .filter(|&&v| v < lo - delta_out || v > hi + delta_out)
            .count();
        self.interval = Some(interval);
        self.counts = Some(WindowCounts { delta, delta_out, puncture, inside, inside_literal, outside });
        self
    }
}

/// Restricts `K` to the mean-zero subspace in free space; in Poisson mode the
/// full space is used and the constant density contributes the eigenvalue 1/2.
fn restricted(k: &DenseOperator) -> DMatrix<f64> {
    match k.mode {
        KernelMode::DiskPoisson(_) => k.matrix.clone(),
        KernelMode::FreeSpace => {
            let n = k.dim();
            let b = mean_zero_basis(&k.weights);
            (&k.matrix * b).rows(0, n - 1).into_owned()
        }
    }
}

pub fn np_spectrum(k: &DenseOperator) -> Result<SpectralReport> {
    let a = restricted(k);
    let schur = Schur::try_new(a, 1e-14, 100_000)
        .ok_or_else(|| Error::EigensolveFailure("Schur iteration did not converge".into()))?;
    let vals: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    if vals.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::EigensolveFailure("non-finite eigenvalue".into()));
    }
    Ok(SpectralReport::from_complex(k.dim(), vals))
}

/// Eigenvalues of `K*` as a self-adjoint operator in `<phi, psi>_S = -<S phi, psi>`:
/// the generalized symmetric problem `(-W S K) x = lambda (-W S) x`.
pub fn np_spectrum_symmetrized(k: &DenseOperator, s: &DenseOperator) -> Result<SpectralReport> {
    if k.dim() != s.dim() || k.mode != s.mode {
        return Err(Error::InvalidParameter("K and S come from different meshes or modes".into()));
    }
    let n = k.dim();
    let w = DMatrix::from_diagonal(&DVector::from_column_slice(&k.weights));
    let ws = -(&w * &s.matrix);
    let mut h = &ws * &k.matrix;
    h = (&h + h.transpose()) * 0.5;
    let mut m = (&ws + ws.transpose()) * 0.5;
    if k.mode == KernelMode::FreeSpace {
        let b = mean_zero_basis(&k.weights);
        h = b.transpose() * h * &b;
        m = b.transpose() * m * &b;
    }
    let chol = Cholesky::new(m)
        .ok_or_else(|| Error::EigensolveFailure("S inner product is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(l.nrows(), l.nrows()))
        .ok_or_else(|| Error::EigensolveFailure("singular Cholesky factor".into()))?;
    let c = &linv * h * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(c, 1e-15, 100_000)
        .ok_or_else(|| Error::EigensolveFailure("symmetric eigensolver did not converge".into()))?;
    let vals = eig.eigenvalues.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    Ok(SpectralReport::from_complex(n, vals))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyWindow {
    pub delta: f64,
    pub delta_out: f64,
    pub puncture: f64,
}

impl Default for StudyWindow {
    fn default() -> Self {
        StudyWindow { delta: 0.02, delta_out: 1e-3, puncture: 0.02 }
    }
}

/// Spectra of `K*` on graded meshes of increasing size, with counts of
/// eigenvalues inside and outside the critical interval of the corner.
/// Smooth curves are accepted as controls; their reference interval is the
/// one supplied by `control_alpha`.
pub fn essential_spectrum_study(
    curve: &crate::geometry::BoundaryCurve,
    n_list: &[usize],
    grading: f64,
    window: StudyWindow,
    control_alpha: Option<f64>,
) -> Result<Vec<SpectralReport>> {
    let alpha = match (curve.corner(), control_alpha) {
        (Some(a), _) => a,
        (None, Some(a)) => crate::dispersion::CornerAngle::new(a)?,
        (None, None) => {
            return Err(Error::InvalidParameter("essential spectrum study needs a corner curve".into()))
        }
    };
    let crit = critical_contrasts(alpha);
    let interval = (crit.lambda_minus, crit.lambda_plus);
    n_list
        .iter()
        .map(|&n| {
            let mesh = crate::geometry::graded_mesh(curve, n, grading)?;
            let k = assemble_np_matrix(&mesh, KernelMode::FreeSpace)?;
            Ok(np_spectrum(&k)?.with_counts(interval, window.delta, window.delta_out, window.puncture))
        })
        .collect()
}

/// Harmonic background field `H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HarmonicSource {
    /// `H(x) = a . x`.
    Uniform { a: [f64; 2] },
    /// `H(x) = strength ln|x - z| / (2 pi)`, with `z` outside the domain.
    Point { z: [f64; 2], strength: f64 },
    /// `H = c Re (x1 + i x2)^n + d Im (x1 + i x2)^n`.
    Polynomial { n: u32, c: f64, d: f64 },
}

impl HarmonicSource {
    pub fn value(&self, x: Point) -> f64 {
        match *self {
            HarmonicSource::Uniform { a } => a[0] * x.x + a[1] * x.y,
            HarmonicSource::Point { z, strength } => {
                strength * (x - Point::new(z[0], z[1])).norm().ln() / TAU
            }
            HarmonicSource::Polynomial { n, c, d } => {
                let w = Complex64::new(x.x, x.y).powu(n);
                c * w.re + d * w.im
            }
        }
    }

    pub fn gradient(&self, x: Point) -> Point {
        match *self {
            HarmonicSource::Uniform { a } => Point::new(a[0], a[1]),
            HarmonicSource::Point { z, strength } => {
                let d = x - Point::new(z[0], z[1]);
                d * (strength / (TAU * d.norm_squared()))
            }
            HarmonicSource::Polynomial { n, c, d } => {
                if n == 0 {
                    return Point::zeros();
                }
                let w = Complex64::new(x.x, x.y).powu(n - 1) * n as f64;
                Point::new(c * w.re + d * w.im, -c * w.im + d * w.re)
            }
        }
    }
}

/// A single layer potential `S phi` evaluated off the boundary from a density
/// upsampled by trigonometric interpolation in the computational parameter.
#[derive(Debug, Clone)]
pub struct LayerPotential {
    points: Vec<Point>,
    /// Fine density times `|dp/ds|` times the fine step.
    strengths: Vec<f64>,
    mode: KernelMode,
}

impl LayerPotential {
    pub fn new(mesh: &BoundaryMesh, density: &[f64], mode: KernelMode, upsample: usize) -> Self {
        let n = mesh.len();
        let m = n * upsample.max(1);
        let shifted = mesh.is_graded();
        // samples of psi(s) = phi(s) |dp/ds| on the node grid
        let psi: Vec<f64> = density.iter().zip(&mesh.speed).map(|(p, v)| p * v).collect();
        let half = n / 2;
        let coeffs: Vec<Complex64> = (0..=half)
            .map(|f| {
                psi.iter()
                    .enumerate()
                    .map(|(j, &v)| v * Complex64::from_polar(1.0, -(f as f64) * TAU * j as f64 / n as f64))
                    .sum::<Complex64>()
                    / n as f64
            })
            .collect();
        let offset = if shifted { 0.5 } else { 0.0 };
        let h = TAU / n as f64;
        let fine_h = TAU / m as f64;
        let (points, strengths): (Vec<Point>, Vec<f64>) = (0..m)
            .into_par_iter()
            .map(|q| {
                let s = fine_h * (q as f64 + offset);
                // position relative to the coarse grid, in units of h
                let u = s / h - offset;
                let mut val = coeffs[0].re;
                for (f, c) in coeffs.iter().enumerate().skip(1) {
                    let e = Complex64::from_polar(1.0, f as f64 * TAU * u / n as f64);
                    let weight = if 2 * f == n { 1.0 } else { 2.0 };
                    val += weight * (c * e).re;
                }
                let (p, _) = mesh.eval_s(s);
                (p, val * fine_h)
            })
            .unzip();
        LayerPotential { points, strengths, mode }
    }

    pub fn value(&self, x: Point) -> f64 {
        self.points
            .iter()
            .zip(&self.strengths)
            .map(|(&y, &w)| green(x, y, self.mode) * w)
            .sum()
    }

    pub fn gradient(&self, x: Point) -> Point {
        self.points
            .iter()
            .zip(&self.strengths)
            .map(|(&y, &w)| green_gradient(x, y, self.mode) * w)
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct TransmissionSolution {
    pub lambda: f64,
    pub density: Vec<f64>,
    pub source: HarmonicSource,
    pub condition: f64,
    pub potential: LayerPotential,
}

impl TransmissionSolution {
    /// `u = S phi + H`.
    pub fn field(&self, x: Point) -> f64 {
        self.potential.value(x) + self.source.value(x)
    }

    pub fn field_gradient(&self, x: Point) -> Point {
        self.potential.gradient(x) + self.source.gradient(x)
    }

    /// Largest `|k d_nu u^- - d_nu u^+|` over the mesh nodes, relative to the
    /// largest exterior flux, with one-sided values Richardson-extrapolated
    /// from offsets `offset` and `offset/2`.
    pub fn flux_residual(&self, mesh: &BoundaryMesh, k: f64, offset: f64) -> f64 {
        let one_sided = |x: Point, nu: Point, sign: f64| {
            let f = |e: f64| self.field_gradient(x + nu * (sign * e)).dot(&nu);
            2.0 * f(0.5 * offset) - f(offset)
        };
        let (mut worst, mut scale) = (0.0f64, 0.0f64);
        for i in 0..mesh.len() {
            let (x, nu) = (mesh.nodes[i], mesh.normals[i]);
            let inner = one_sided(x, nu, -1.0);
            let outer = one_sided(x, nu, 1.0);
            worst = worst.max((k * inner - outer).abs());
            scale = scale.max(outer.abs());
        }
        worst / scale.max(1e-300)
    }
}

/// Solves `(lambda - K*) phi = d_nu H` in free space and returns `u = S phi + H`.
pub fn transmission_solve(
    mesh: &BoundaryMesh,
    lambda: f64,
    source: HarmonicSource,
    upsample: usize,
) -> Result<TransmissionSolution> {
    if !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda = {lambda}")));
    }
    let k = assemble_np_matrix(mesh, KernelMode::FreeSpace)?;
    let n = mesh.len();
    let a = DMatrix::identity(n, n) * lambda - &k.matrix;
    let sv = a.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > CONDITION_LIMIT {
        return Err(Error::NearSingularSystem(condition));
    }
    let rhs = DVector::from_iterator(
        n,
        (0..n).map(|i| source.gradient(mesh.nodes[i]).dot(&mesh.normals[i])),
    );
    let phi = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SolveFailure("LU factorization is singular".into()))?;
    let density: Vec<f64> = phi.iter().copied().collect();
    let potential = LayerPotential::new(mesh, &density, KernelMode::FreeSpace, upsample);
    Ok(TransmissionSolution { lambda, density, source, condition, potential })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_corner_domain, build_smooth_domain, graded_mesh, SmoothShape};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn disk_mesh(n: usize) -> BoundaryMesh {
        let c = build_smooth_domain(SmoothShape::Disk { r: 1.0 }).unwrap();
        graded_mesh(&c, n, 1.0).unwrap()
    }

    fn ellipse_mesh(n: usize) -> BoundaryMesh {
        let c = build_smooth_domain(SmoothShape::Ellipse { a: 2.0, b: 1.0 }).unwrap();
        graded_mesh(&c, n, 1.0).unwrap()
    }

    #[test]
    fn kernel_on_circle_is_constant() {
        let m = disk_mesh(32);
        for i in [0, 5, 17] {
            for j in [1, 9, 30] {
                let v = np_kernel(m.nodes[i], m.nodes[j], m.normals[i], 1.0, KernelMode::FreeSpace);
                assert!((v - 1.0 / (4.0 * PI)).abs() < 1e-13);
            }
        }
        let v = np_kernel(m.nodes[3], m.nodes[3], m.normals[3], 1.0, KernelMode::FreeSpace);
        assert!((v - 1.0 / (4.0 * PI)).abs() < 1e-15);
        let on_line = np_kernel(
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
            0.0,
            KernelMode::FreeSpace,
        );
        assert_eq!(on_line, 0.0);
    }

    #[test]
    fn disk_np_matrix_row_sums_and_mean_zero() {
        let m = disk_mesh(128);
        let k = assemble_np_matrix(&m, KernelMode::FreeSpace).unwrap();
        for i in 0..128 {
            let s: f64 = k.matrix.row(i).iter().sum();
            assert!((s - 0.5).abs() < 1e-6, "row {i}: {s}");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut v = DVector::from_fn(128, |_, _| rng.random_range(-1.0..1.0));
        let mean = v.iter().sum::<f64>() / 128.0;
        v.add_scalar_mut(-mean);
        assert!(k.apply(&v).norm() <= 1e-3 * v.norm());
    }

    #[test]
    fn single_layer_on_disk() {
        let m = disk_mesh(128);
        let s = assemble_single_layer(&m, KernelMode::FreeSpace).unwrap();
        let ones = DVector::from_element(128, 1.0);
        assert!(s.apply(&ones).amax() < 1e-12);
        // S e^{i n theta} = -e^{i n theta} / (2n) on the unit circle
        let v = DVector::from_fn(128, |i, _| (3.0 * TAU * i as f64 / 128.0).cos());
        let sv = s.apply(&v);
        assert!((sv + &v / 6.0).amax() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut phi = DVector::from_fn(128, |_, _| rng.random_range(-1.0..1.0));
        let mean = phi.iter().sum::<f64>() / 128.0;
        phi.add_scalar_mut(-mean);
        let w = DVector::from_column_slice(&s.weights);
        assert!(-phi.dot(&w.component_mul(&s.apply(&phi))) > 0.0);
    }

    #[test]
    fn single_layer_symmetry_on_ellipse() {
        let m = ellipse_mesh(96);
        let s = assemble_single_layer(&m, KernelMode::FreeSpace).unwrap();
        let big = s.matrix.amax();
        for i in 0..96 {
            for j in 0..96 {
                let a = s.matrix[(i, j)] * s.weights[i];
                let b = s.matrix[(j, i)] * s.weights[j];
                assert!((a - b).abs() <= 1e-9 * big);
            }
        }
    }

    #[test]
    fn disk_spectrum_vanishes() {
        let m = disk_mesh(256);
        let k = assemble_np_matrix(&m, KernelMode::FreeSpace).unwrap();
        let rep = np_spectrum(&k).unwrap();
        assert_eq!(rep.eigenvalues.len(), 255);
        assert!(rep.max_abs() <= 1e-3);
    }

    #[test]
    fn ellipse_spectrum_matches_closed_form() {
        let m = ellipse_mesh(128);
        let k = assemble_np_matrix(&m, KernelMode::FreeSpace).unwrap();
        let rep = np_spectrum(&k).unwrap();
        let top = rep.eigenvalues.last().unwrap();
        let bottom = rep.eigenvalues[0];
        assert!((top - 1.0 / 6.0).abs() < 1e-10, "{top}");
        assert!((bottom + 1.0 / 6.0).abs() < 1e-10);
        let s = assemble_single_layer(&m, KernelMode::FreeSpace).unwrap();
        let sym = np_spectrum_symmetrized(&k, &s).unwrap();
        assert!((sym.eigenvalues.last().unwrap() - 1.0 / 6.0).abs() < 1e-9);
    }

    #[test]
    fn concentric_disk_poisson_spectrum() {
        let c = build_smooth_domain(SmoothShape::Disk { r: 0.5 }).unwrap();
        let m = graded_mesh(&c, 64, 1.0).unwrap();
        let k = assemble_np_matrix(&m, KernelMode::DiskPoisson(1.0)).unwrap();
        let rep = np_spectrum(&k).unwrap();
        let mut v = rep.eigenvalues.clone();
        v.reverse();
        assert!((v[0] - 0.5).abs() < 1e-10);
        assert!((v[1] - 0.125).abs() < 1e-10 && (v[2] - 0.125).abs() < 1e-10);
        assert!((v[3] - 1.0 / 32.0).abs() < 1e-10);
        let s = assemble_single_layer(&m, KernelMode::DiskPoisson(1.0)).unwrap();
        let sym = np_spectrum_symmetrized(&k, &s).unwrap();
        assert!((sym.eigenvalues.last().unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn poisson_mode_rejects_large_curves() {
        let m = disk_mesh(32);
        assert!(assemble_np_matrix(&m, KernelMode::DiskPoisson(1.0)).is_err());
    }

    #[test]
    fn uniform_field_in_disk() {
        let m = disk_mesh(128);
        let k = 2.0;
        let lambda = (k + 1.0) / (2.0 * (k - 1.0));
        let sol = transmission_solve(&m, lambda, HarmonicSource::Uniform { a: [1.0, 0.0] }, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let r = rng.random_range(0.0..0.8);
            let t = rng.random_range(0.0..TAU);
            let x = Point::new(r * t.cos(), r * t.sin());
            assert!((sol.field(x) - 2.0 / (1.0 + k) * x.x).abs() < 1e-4);
        }
        assert!(sol.flux_residual(&m, k, 0.01) < 1e-4);
    }

    #[test]
    fn near_eigenvalue_is_rejected() {
        let m = disk_mesh(64);
        let err = transmission_solve(&m, 0.0, HarmonicSource::Uniform { a: [1.0, 0.0] }, 4).unwrap_err();
        assert!(matches!(err, Error::NearSingularSystem(_)));
    }

    #[test]
    fn corner_spectrum_fills_critical_interval() {
        let c = build_corner_domain(PI / 2.0, 0.3).unwrap();
        let reps = essential_spectrum_study(&c, &[64, 128, 256], 3.0, StudyWindow::default(), None).unwrap();
        let inside: Vec<usize> = reps.iter().map(|r| r.counts.as_ref().unwrap().inside).collect();
        assert!(inside.windows(2).all(|w| w[1] > w[0]), "{inside:?}");
        for r in &reps {
            assert!(r.max_abs() < 0.25 + 0.01, "{}", r.max_abs());
            assert_eq!(r.counts.as_ref().unwrap().outside, 0);
            assert!(r.residual_imag < IMAG_FLAG);
        }
    }

    #[test]
    fn smooth_curve_needs_reference_angle() {
        let c = build_smooth_domain(SmoothShape::Disk { r: 1.0 }).unwrap();
        assert!(essential_spectrum_study(&c, &[64], 1.0, StudyWindow::default(), None).is_err());
    }
}
