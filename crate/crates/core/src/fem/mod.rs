//! P1 finite elements for the Poincaré variational operator `T_D` on
//! `H^1_0(Omega)`, defined by `(T_D u, v)_Omega = (grad u, grad v)_D`.

pub mod mesh;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use rayon::prelude::*;
use serde::Serialize;

use crate::bem::SpectralReport;
use crate::error::{Error, Result};
pub use mesh::{build_polar_mesh, parse_mesh, FemGeometry, FemMesh, NodeRegion, PolarOptions};

/// Eigenvalues within this distance of 0 or 1 count as trivial.
pub const TRIVIAL_TOL: f64 = 1e-8;

/// Element stiffness of the P1 triangle with vertices `p`.
fn element_stiffness(p: [crate::geometry::Point; 3]) -> [[f64; 3]; 3] {
    let area2 = (p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[1].y - p[0].y) * (p[2].x - p[0].x);
    // gradients of barycentric coordinates times 2|T|
    let g = [
        (p[1].y - p[2].y, p[2].x - p[1].x),
        (p[2].y - p[0].y, p[0].x - p[2].x),
        (p[0].y - p[1].y, p[1].x - p[0].x),
    ];
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = (g[a].0 * g[b].0 + g[a].1 * g[b].1) / (2.0 * area2);
        }
    }
    k
}

/// Assembles the stiffness over the triangles selected by `keep`, restricted
/// to the degrees of freedom numbered by `dof`.
fn assemble(mesh: &FemMesh, dof: &[Option<usize>], n: usize, keep: impl Fn(usize) -> bool + Sync) -> CscMatrix<f64> {
    let triplets = (0..mesh.tris.len())
        .into_par_iter()
        .filter(|&t| keep(t))
        .fold(Vec::new, |mut acc, t| {
            let tri = mesh.tris[t];
            let k = element_stiffness(tri.map(|v| mesh.nodes[v]));
            for a in 0..3 {
                for b in 0..3 {
                    if let (Some(i), Some(j)) = (dof[tri[a]], dof[tri[b]]) {
                        acc.push((i, j, k[a][b]));
                    }
                }
            }
            acc
        })
        .reduce(Vec::new, |mut a, mut b| {
            a.append(&mut b);
            a
        });
    let mut coo = CooMatrix::new(n, n);
    for (i, j, v) in triplets {
        coo.push(i, j, v);
    }
    CscMatrix::from(&coo)
}

fn number(select: impl Iterator<Item = bool>) -> (Vec<Option<usize>>, Vec<usize>) {
    let mut map = Vec::new();
    let mut list = Vec::new();
    for (i, s) in select.enumerate() {
        if s {
            map.push(Some(list.len()));
            list.push(i);
        } else {
            map.push(None);
        }
    }
    (map, list)
}

pub struct FemContext {
    pub mesh: FemMesh,
    /// Mesh node of each interior degree of freedom.
    pub dofs: Vec<usize>,
    pub dof_of: Vec<Option<usize>>,
    pub k_omega: CscMatrix<f64>,
    pub k_d: CscMatrix<f64>,
    pub regions: Vec<NodeRegion>,
    chol: CscCholesky<f64>,
}

impl std::fmt::Debug for FemContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FemContext")
            .field("nodes", &self.mesh.nodes.len())
            .field("triangles", &self.mesh.tris.len())
            .field("dofs", &self.dofs.len())
            .finish()
    }
}

pub fn build_fem_context(geom: FemGeometry, opts: PolarOptions) -> Result<FemContext> {
    FemContext::from_mesh(build_polar_mesh(geom, opts)?)
}

impl FemContext {
    pub fn from_mesh(mesh: FemMesh) -> Result<Self> {
        mesh.validate()?;
        let (dof_of, dofs) = number(mesh.dirichlet.iter().map(|&d| !d));
        let n = dofs.len();
        if n == 0 {
            return Err(Error::MeshGenerationFailure("no interior degrees of freedom".into()));
        }
        let k_omega = assemble(&mesh, &dof_of, n, |_| true);
        let k_d = assemble(&mesh, &dof_of, n, |t| mesh.in_d[t]);
        let chol = CscCholesky::factor(&k_omega)
            .map_err(|e| Error::MeshGenerationFailure(format!("stiffness not positive definite: {e:?}")))?;
        let regions = mesh.node_regions();
        Ok(FemContext { mesh, dofs, dof_of, k_omega, k_d, regions, chol })
    }

    pub fn dof_count(&self) -> usize {
        self.dofs.len()
    }

    /// Restricts a nodal field to the interior degrees of freedom.
    pub fn restrict(&self, u: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.dofs.len(), self.dofs.iter().map(|&i| u[i]))
    }

    /// Extends a dof vector by zero on the Dirichlet boundary.
    pub fn extend(&self, x: &DVector<f64>) -> Vec<f64> {
        let mut u = vec![0.0; self.mesh.nodes.len()];
        for (k, &i) in self.dofs.iter().enumerate() {
            u[i] = x[k];
        }
        u
    }

    /// `u^T K_Omega v` on nodal fields.
    pub fn omega_product(&self, u: &[f64], v: &[f64]) -> f64 {
        self.restrict(u).dot(&(&self.k_omega * &self.restrict(v)))
    }

    /// `u^T K_D v` on nodal fields.
    pub fn d_product(&self, u: &[f64], v: &[f64]) -> f64 {
        self.restrict(u).dot(&(&self.k_d * &self.restrict(v)))
    }

    /// Solves `K_Omega x = b` on the interior degrees of freedom.
    pub fn solve_omega(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let x = self.chol.solve(b);
        let x = x.column(0).into_owned();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolveFailure("non-finite solution".into()));
        }
        Ok(x)
    }

    fn sub(&self, m: &CscMatrix<f64>, rows: &[usize], cols: &[usize]) -> CscMatrix<f64> {
        let mut rmap = vec![None; self.dofs.len()];
        for (k, &i) in rows.iter().enumerate() {
            rmap[i] = Some(k);
        }
        let mut cmap = vec![None; self.dofs.len()];
        for (k, &j) in cols.iter().enumerate() {
            cmap[j] = Some(k);
        }
        let mut coo = CooMatrix::new(rows.len(), cols.len());
        for (i, j, &v) in m.triplet_iter() {
            if let (Some(a), Some(b)) = (rmap[i], cmap[j]) {
                coo.push(a, b, v);
            }
        }
        CscMatrix::from(&coo)
    }

    /// Schur complement of `m` onto `gamma`, eliminating `inner`.
    fn condense(&self, m: &CscMatrix<f64>, gamma: &[usize], inner: &[usize]) -> Result<DMatrix<f64>> {
        let gg: DMatrix<f64> = DMatrix::from(&CooMatrix::from(&self.sub(m, gamma, gamma)));
        if inner.is_empty() {
            return Ok(gg);
        }
        let ii = self.sub(m, inner, inner);
        let ig = self.sub(m, inner, gamma);
        let chol = CscCholesky::factor(&ii)
            .map_err(|e| Error::EigensolveFailure(format!("condensation block not definite: {e:?}")))?;
        let ig_dense: DMatrix<f64> = DMatrix::from(&CooMatrix::from(&ig));
        let x = chol.solve(&ig_dense);
        let gi = ig.transpose();
        let correction: DMatrix<f64> = &gi * &x;
        Ok(gg - correction)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TdSpectrum {
    /// Nontrivial eigenvalues, farthest from 1/2 first.
    pub nontrivial: Vec<f64>,
    /// Every computed eigenvalue of the condensed pencil, ascending.
    pub condensed: Vec<f64>,
    /// Multiplicity of the eigenvalue 0 (fields constant on `D` and harmonic outside).
    pub zero_cluster: usize,
    /// Multiplicity of the eigenvalue 1 (fields in `H^1_0(D)`).
    pub one_cluster: usize,
    pub interface_size: usize,
}

impl TdSpectrum {
    pub fn min(&self) -> f64 {
        self.condensed.first().copied().unwrap_or(0.0).min(0.0)
    }

    pub fn max(&self) -> f64 {
        self.condensed.last().copied().unwrap_or(1.0).max(1.0)
    }
}

/// Spectrum of the pencil `K_D u = beta K_Omega u`.
///
/// Away from 0 and 1 it coincides with `S_D x = beta (S_D + S_E) x`, where
/// `S_D`, `S_E` are the Schur complements of the inside and outside
/// stiffness onto the interface nodes; the rest of the spectrum is the
/// eigenvalue 1 on fields vanishing off `D` and 0 on fields harmonic outside
/// `D` with zero trace on the interface.
pub fn td_spectrum(ctx: &FemContext, count: Option<usize>) -> Result<TdSpectrum> {
    let mut gamma = Vec::new();
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    for (k, &node) in ctx.dofs.iter().enumerate() {
        match ctx.regions[node] {
            NodeRegion::Interface => gamma.push(k),
            NodeRegion::Inside => inside.push(k),
            NodeRegion::Exterior => outside.push(k),
        }
    }
    if gamma.is_empty() {
        return Err(Error::EigensolveFailure("mesh has no interface nodes".into()));
    }
    let k_e = &ctx.k_omega - &ctx.k_d;
    let s_d = ctx.condense(&ctx.k_d, &gamma, &inside)?;
    let s_e = ctx.condense(&k_e, &gamma, &outside)?;
    let s_d = (&s_d + s_d.transpose()) * 0.5;
    let m = &s_d + (&s_e + s_e.transpose()) * 0.5;
    let chol = nalgebra::Cholesky::new(m)
        .ok_or_else(|| Error::EigensolveFailure("interface pencil not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(l.nrows(), l.nrows()))
        .ok_or_else(|| Error::EigensolveFailure("singular interface factor".into()))?;
    let c = &linv * s_d * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(c, 1e-15, 100_000)
        .ok_or_else(|| Error::EigensolveFailure("symmetric eigensolver did not converge".into()))?;
    let mut condensed: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    condensed.sort_by(f64::total_cmp);
    let zeros = condensed.iter().filter(|&&b| b.abs() < TRIVIAL_TOL).count();
    let ones = condensed.iter().filter(|&&b| (1.0 - b).abs() < TRIVIAL_TOL).count();
    let mut nontrivial: Vec<f64> = condensed
        .iter()
        .copied()
        .filter(|&b| b.abs() >= TRIVIAL_TOL && (1.0 - b).abs() >= TRIVIAL_TOL)
        .collect();
    nontrivial.sort_by(|a, b| (b - 0.5).abs().total_cmp(&(a - 0.5).abs()));
    if let Some(c) = count {
        nontrivial.truncate(c);
    }
    Ok(TdSpectrum {
        nontrivial,
        condensed,
        zero_cluster: zeros + outside.len(),
        one_cluster: ones + inside.len(),
        interface_size: gamma.len(),
    })
}

/// `T_D u`: solves `K_Omega t = K_D u`. `u` is a nodal field vanishing on the
/// outer boundary.
pub fn apply_td(ctx: &FemContext, u: &[f64]) -> Result<Vec<f64>> {
    if u.len() != ctx.mesh.nodes.len() {
        return Err(Error::InvalidParameter("field length does not match the mesh".into()));
    }
    if ctx.mesh.dirichlet.iter().zip(u).any(|(&d, &v)| d && v != 0.0) {
        return Err(Error::InvalidParameter("field must vanish on the outer boundary".into()));
    }
    let rhs = &ctx.k_d * &ctx.restrict(u);
    Ok(ctx.extend(&ctx.solve_omega(&rhs)?))
}

/// The field equal to 1 on `D` and discrete-harmonic in `Omega \ D`.
pub fn constant_on_d(ctx: &FemContext) -> Result<Vec<f64>> {
    let mut u = vec![0.0; ctx.mesh.nodes.len()];
    let mut outside = Vec::new();
    for (k, &node) in ctx.dofs.iter().enumerate() {
        match ctx.regions[node] {
            NodeRegion::Exterior => outside.push(k),
            _ => u[node] = 1.0,
        }
    }
    if outside.is_empty() {
        return Ok(u);
    }
    let x = ctx.restrict(&u);
    let k_e = &ctx.k_omega - &ctx.k_d;
    let rhs_full = &k_e * &x;
    let rhs = DVector::from_iterator(outside.len(), outside.iter().map(|&k| -rhs_full[k]));
    let ee = ctx.sub(&k_e, &outside, &outside);
    let chol = CscCholesky::factor(&ee)
        .map_err(|e| Error::SolveFailure(format!("exterior block not definite: {e:?}")))?;
    let y = chol.solve(&rhs);
    for (idx, &k) in outside.iter().enumerate() {
        u[ctx.dofs[k]] = y[(idx, 0)];
    }
    Ok(u)
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrespondenceRow {
    pub beta: f64,
    pub lambda_fem: f64,
    pub lambda_bem: f64,
    pub mismatch: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrespondenceTable {
    pub rows: Vec<CorrespondenceRow>,
    pub max_mismatch: f64,
}

/// Pairs the leading nontrivial `beta` with the nearest BEM eigenvalue under
/// `lambda = 1/2 - beta`. The BEM eigenvalue 1/2 (constant density, matching
/// the trivial `beta = 0`) is skipped.
pub fn spectral_correspondence(fem: &TdSpectrum, bem: &SpectralReport, count: usize) -> CorrespondenceTable {
    let candidates: Vec<f64> = bem
        .eigenvalues
        .iter()
        .copied()
        .filter(|l| (l - 0.5).abs() > 1e-6)
        .collect();
    let rows: Vec<CorrespondenceRow> = fem
        .nontrivial
        .iter()
        .take(count)
        .map(|&beta| {
            let lambda_fem = 0.5 - beta;
            let lambda_bem = candidates
                .iter()
                .copied()
                .min_by(|a, b| (a - lambda_fem).abs().total_cmp(&(b - lambda_fem).abs()))
                .unwrap_or(f64::NAN);
            CorrespondenceRow { beta, lambda_fem, lambda_bem, mismatch: (lambda_bem - lambda_fem).abs() }
        })
        .collect();
    let max_mismatch = rows.iter().map(|r| r.mismatch).fold(0.0, f64::max);
    CorrespondenceTable { rows, max_mismatch }
}

/// Eigenvalues `beta_n = (1 - rho^{2n}) / 2`, `n >= 1`, of `T_D` for concentric
/// disks with radius ratio `rho`, each of multiplicity two.
pub fn concentric_disk_betas(rho: f64, modes: usize) -> Vec<f64> {
    (1..=modes).map(|n| 0.5 * (1.0 - rho.powi(2 * n as i32))).collect()
}
