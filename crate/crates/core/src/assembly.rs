//! Nitsche assembly of the Poisson problem on a constrained Q1 space, Jacobi PCG
//! and spectral measurements.
//!
//! The forms are
//!
//! ```text
//! a(u, v) = ∫_Ω ∇u·∇v + ∫_∂Ω (τ u v - u ∂_n v - v ∂_n u)
//! b(v)    = ∫_Ω v f    + ∫_∂Ω (τ v g - ∂_n v g)
//! ```
//!
//! Constrained dofs are substituted cell by cell, so the assembled system lives
//! on the well-posed free dofs only.

use nalgebra::{DMatrix, Matrix3, Matrix4x3, SymmetricEigen};
use rayon::prelude::*;

use crate::benchmarks::Benchmark;
use crate::error::{Error, Result};
use crate::fe_space::{q1_basis, q1_grad, FeSpace};
use crate::geometry::{CellRule, CutQuadrature};
use crate::mesh::ForestMesh;
use crate::quadrature::{tensor_rule, QuadRule};

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries in input order, so the result does not depend on
    /// how the triplets were produced as long as their order is fixed.
    pub fn from_triplets(n: usize, mut trips: Vec<(usize, usize, f64)>) -> Self {
        trips.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0; n + 1];
        let mut col = Vec::with_capacity(trips.len());
        let mut val: Vec<f64> = Vec::with_capacity(trips.len());
        let mut last = None;
        for (i, j, v) in trips {
            if last == Some((i, j)) {
                *val.last_mut().unwrap() += v;
            } else {
                col.push(j);
                val.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, col, val }
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.val[k] * x[self.col[k]];
            }
            y[i] = s;
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.col[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.val[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.val.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A - Aᵀ|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                worst = worst.max((self.val[k] - self.get(self.col[k], i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                d[(i, self.col[k])] += self.val[k];
            }
        }
        d
    }
}

/// Nitsche penalty policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TauPolicy {
    /// `τ = β / h_T` on every cut cell.
    Aggregated { beta: f64 },
    /// `τ = β λ_T^max` from the per-cell generalized eigenproblem.
    Standard { beta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakFormConfig {
    pub tau: TauPolicy,
    /// Points per direction of the quadrature rules.
    pub order: usize,
}

impl WeakFormConfig {
    pub fn aggregated() -> Self {
        Self { tau: TauPolicy::Aggregated { beta: 25.0 }, order: 3 }
    }

    pub fn standard() -> Self {
        Self { tau: TauPolicy::Standard { beta: 2.0 }, order: 3 }
    }

    pub fn validate(&self) -> Result<()> {
        let beta = match self.tau {
            TauPolicy::Aggregated { beta } | TauPolicy::Standard { beta } => beta,
        };
        if !(beta > 0.0) {
            return Err(Error::Parameter(format!("beta must be positive, got {beta}")));
        }
        if !(1..=5).contains(&self.order) {
            return Err(Error::Parameter(format!("quadrature order {} outside 1..=5", self.order)));
        }
        Ok(())
    }
}

/// Reduced system on the well-posed free dofs.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub a: CsrMatrix,
    pub b: Vec<f64>,
    /// Mass matrix `∫_Ω φ_i φ_j` of the reduced basis.
    pub m: CsrMatrix,
    /// Reduced index → global dof.
    pub free_dofs: Vec<usize>,
    pub tau_max: f64,
}

impl LinearSystem {
    pub fn n(&self) -> usize {
        self.b.len()
    }
}

fn with_interior<T>(mesh: &ForestMesh, cut: &CutQuadrature, i: usize, f: impl FnOnce(&QuadRule) -> T) -> T {
    match &cut.cells[i] {
        CellRule::Cut { interior, .. } => f(interior),
        _ => {
            let (lo, hi) = mesh.cell_bounds(i);
            f(&tensor_rule(cut.order, lo, hi).expect("validated order"))
        }
    }
}

struct CellContribution {
    a: [[f64; 4]; 4],
    m: [[f64; 4]; 4],
    rhs: [f64; 4],
    tau: f64,
}

/// Largest eigenvalue of `B μ = λ K μ` on functions with zero mean nodal value
/// (constants lie in the kernel of both forms).
pub fn tau_eigenvalue(k: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> Result<f64> {
    // Orthonormal basis of the complement of (1,1,1,1).
    let q = Matrix4x3::new(
        0.5, 0.5, 0.5, //
        -0.5, 0.5, -0.5, //
        0.5, -0.5, -0.5, //
        -0.5, -0.5, 0.5,
    );
    let km = nalgebra::Matrix4::from_fn(|i, j| k[i][j]);
    let bm = nalgebra::Matrix4::from_fn(|i, j| b[i][j]);
    let mut kt: Matrix3<f64> = q.transpose() * km * q;
    let bt: Matrix3<f64> = q.transpose() * bm * q;
    let chol = match kt.cholesky() {
        Some(c) => c,
        None => {
            let tr = kt.trace().abs().max(f64::MIN_POSITIVE);
            for d in 0..3 {
                kt[(d, d)] += 1e-14 * tr;
            }
            kt.cholesky()
                .ok_or_else(|| Error::Numerical("singular stiffness in the penalty eigenproblem".into()))?
        }
    };
    let l = chol.l();
    let linv = l
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let c = linv * bt * linv.transpose();
    let c = 0.5 * (c + c.transpose());
    let lmax = SymmetricEigen::new(c).eigenvalues.max();
    if lmax < -1e-12 * c.norm() || !lmax.is_finite() {
        return Err(Error::Numerical(format!("penalty eigenvalue {lmax} is invalid")));
    }
    Ok(lmax.max(0.0))
}

fn cell_contribution(
    mesh: &ForestMesh,
    cut: &CutQuadrature,
    i: usize,
    cfg: &WeakFormConfig,
    problem: &Benchmark,
) -> Result<CellContribution> {
    let (lo, hi) = mesh.cell_bounds(i);
    let mut a = [[0.0; 4]; 4];
    let mut m = [[0.0; 4]; 4];
    let mut rhs = [0.0; 4];
    with_interior(mesh, cut, i, |rule| {
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let phi = q1_basis(lo, hi, *p);
            let g = q1_grad(lo, hi, *p);
            let f = problem.f(*p);
            for r in 0..4 {
                rhs[r] += w * phi[r] * f;
                for c in 0..4 {
                    a[r][c] += w * (g[r][0] * g[c][0] + g[r][1] * g[c][1]);
                    m[r][c] += w * phi[r] * phi[c];
                }
            }
        }
    });
    let mut tau = 0.0;
    if let Some(bd) = cut.boundary_rule(i) {
        tau = match cfg.tau {
            TauPolicy::Aggregated { beta } => beta / mesh.cell_h(i),
            TauPolicy::Standard { beta } => {
                let mut bm = [[0.0; 4]; 4];
                for ((p, w), n) in bd.points.iter().zip(&bd.weights).zip(&bd.normals) {
                    let g = q1_grad(lo, hi, *p);
                    let dn: [f64; 4] = std::array::from_fn(|k| g[k][0] * n[0] + g[k][1] * n[1]);
                    for r in 0..4 {
                        for c in 0..4 {
                            bm[r][c] += w * dn[r] * dn[c];
                        }
                    }
                }
                beta * tau_eigenvalue(&a, &bm)?
            }
        };
        for ((p, w), n) in bd.points.iter().zip(&bd.weights).zip(&bd.normals) {
            let phi = q1_basis(lo, hi, *p);
            let g = q1_grad(lo, hi, *p);
            let dn: [f64; 4] = std::array::from_fn(|k| g[k][0] * n[0] + g[k][1] * n[1]);
            let gv = problem.g(*p);
            for r in 0..4 {
                rhs[r] += w * (tau * phi[r] * gv - dn[r] * gv);
                for c in 0..4 {
                    a[r][c] += w * (tau * phi[r] * phi[c] - phi[r] * dn[c] - phi[c] * dn[r]);
                }
            }
        }
    }
    Ok(CellContribution { a, m, rhs, tau })
}

/// Assembles the reduced Nitsche system of `problem` on `space`.
pub fn assemble(
    mesh: &ForestMesh,
    space: &FeSpace,
    cut: &CutQuadrature,
    cfg: &WeakFormConfig,
    problem: &Benchmark,
) -> Result<LinearSystem> {
    let cells: Vec<usize> = (0..mesh.len()).filter(|&i| space.dofs.cell_dofs[i].is_some()).collect();
    assemble_cells(mesh, space, cut, cfg, problem, &cells)
}

/// Assembles the contributions of `cells` only, in the reduced numbering of
/// the whole space.
pub fn assemble_cells(
    mesh: &ForestMesh,
    space: &FeSpace,
    cut: &CutQuadrature,
    cfg: &WeakFormConfig,
    problem: &Benchmark,
    cells: &[usize],
) -> Result<LinearSystem> {
    cfg.validate()?;
    let cs = &space.constraints;
    if let Some(&c) = cells.iter().find(|&&c| space.dofs.cell_dofs[c].is_none()) {
        return Err(Error::Parameter(format!("cell {c} is not active")));
    }
    let contributions = cells
        .par_iter()
        .map(|&i| cell_contribution(mesh, cut, i, cfg, problem).map(|c| (i, c)))
        .collect::<Result<Vec<_>>>()?;
    let n = cs.n_free();
    let mut ta = Vec::new();
    let mut tm = Vec::new();
    let mut b = vec![0.0; n];
    let mut tau_max: f64 = 0.0;
    for (i, c) in contributions {
        tau_max = tau_max.max(c.tau);
        let dofs = space.dofs.cell_dofs[i].expect("active");
        let exp: Vec<Vec<(usize, f64)>> = dofs.iter().map(|&d| cs.expand(d)).collect();
        for r in 0..4 {
            for &(ri, rw) in &exp[r] {
                b[ri] += rw * c.rhs[r];
                for col in 0..4 {
                    for &(ci, cw) in &exp[col] {
                        ta.push((ri, ci, rw * cw * c.a[r][col]));
                        tm.push((ri, ci, rw * cw * c.m[r][col]));
                    }
                }
            }
        }
    }
    Ok(LinearSystem {
        a: CsrMatrix::from_triplets(n, ta),
        b,
        m: CsrMatrix::from_triplets(n, tm),
        free_dofs: cs.free.clone(),
        tau_max,
    })
}

/// Outcome of a PCG solve.
#[derive(Clone, Debug, PartialEq)]
pub struct PcgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub rel_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
pub fn solve_pcg(sys: &LinearSystem, tol: f64, maxit: usize) -> Result<PcgResult> {
    solve_pcg_matrix(&sys.a, &sys.b, tol, maxit)
}

pub fn solve_pcg_matrix(a: &CsrMatrix, b: &[f64], tol: f64, maxit: usize) -> Result<PcgResult> {
    let n = a.n;
    if b.len() != n {
        return Err(Error::Parameter("right-hand side size mismatch".into()));
    }
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(PcgResult { x, iterations: 0, converged: true, rel_residual: 0.0 });
    }
    let diag = a.diagonal();
    if let Some(k) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::Solver(format!("non-positive diagonal entry {} at row {k}", diag[k])));
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    for it in 1..=maxit {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Solver(format!(
                "indefinite system: pᵀAp = {pap:e} at iteration {it}"
            )));
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        rel = dot(&r, &r).sqrt() / bnorm;
        if rel < tol {
            return Ok(PcgResult { x, iterations: it, converged: true, rel_residual: rel });
        }
        for k in 0..n {
            z[k] = r[k] / diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Ok(PcgResult { x, iterations: maxit, converged: false, rel_residual: rel })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectralMethod {
    Dense,
    Lanczos,
}

/// Extreme eigenvalues of a symmetric matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spectrum {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `λ_max / λ_min`, infinite when `λ_min ≤ 0`.
    pub kappa: f64,
    pub method: SpectralMethod,
    /// `λ_min` is not positive.
    pub singular: bool,
    /// Lanczos residual bounds did not reach the target accuracy.
    pub uncertain: bool,
}

impl Spectrum {
    fn new(lambda_min: f64, lambda_max: f64, method: SpectralMethod, uncertain: bool) -> Self {
        let singular = !(lambda_min > 0.0);
        let kappa = if singular { f64::INFINITY } else { lambda_max / lambda_min };
        Self { lambda_min, lambda_max, kappa, method, singular, uncertain }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralReport {
    pub a: Spectrum,
    pub m: Spectrum,
}

/// Dense size limit; larger matrices use Lanczos.
pub const DENSE_LIMIT: usize = 2000;
pub const LANCZOS_STEPS: usize = 200;

pub fn spectral_report(sys: &LinearSystem) -> SpectralReport {
    SpectralReport { a: spectrum(&sys.a), m: spectrum(&sys.m) }
}

pub fn spectrum(a: &CsrMatrix) -> Spectrum {
    if a.n <= DENSE_LIMIT {
        spectrum_dense(a)
    } else {
        spectrum_lanczos(a, LANCZOS_STEPS)
    }
}

pub fn spectrum_dense(a: &CsrMatrix) -> Spectrum {
    if a.n == 0 {
        return Spectrum::new(f64::NAN, f64::NAN, SpectralMethod::Dense, false);
    }
    let d = a.to_dense();
    let d = 0.5 * (&d + d.transpose());
    let ev = d.symmetric_eigenvalues();
    Spectrum::new(ev.min(), ev.max(), SpectralMethod::Dense, false)
}

/// Lanczos with full reorthogonalization from a fixed start vector.
pub fn spectrum_lanczos(a: &CsrMatrix, steps: usize) -> Spectrum {
    let n = a.n;
    if n == 0 {
        return Spectrum::new(f64::NAN, f64::NAN, SpectralMethod::Lanczos, true);
    }
    let k = steps.min(n);
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.7548776662).sin()).collect();
    let nv = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= nv);
    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut alpha = Vec::with_capacity(k);
    let mut beta: Vec<f64> = Vec::with_capacity(k);
    let mut w = vec![0.0; n];
    for j in 0..k {
        a.matvec(&basis[j], &mut w);
        let aj = dot(&w, &basis[j]);
        alpha.push(aj);
        // Two passes of classical Gram-Schmidt against the whole basis.
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&w, q);
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let bj = dot(&w, &w).sqrt();
        if j + 1 == k || bj <= 1e-14 * alpha.iter().fold(0.0f64, |m, a| m.max(a.abs())) {
            beta.push(bj);
            break;
        }
        beta.push(bj);
        basis.push(w.iter().map(|x| x / bj).collect());
    }
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let (mut imin, mut imax) = (0, 0);
    for i in 0..m {
        if eig.eigenvalues[i] < eig.eigenvalues[imin] {
            imin = i;
        }
        if eig.eigenvalues[i] > eig.eigenvalues[imax] {
            imax = i;
        }
    }
    // Residual bound |β_m s_{m,i}| of the extreme Ritz pairs.
    let last = beta[m - 1];
    let res = |i: usize| (last * eig.eigenvectors[(m - 1, i)]).abs();
    let (lmin, lmax) = (eig.eigenvalues[imin], eig.eigenvalues[imax]);
    let exhausted = m == n;
    let uncertain = !exhausted && (res(imin) > 1e-6 * lmin.abs() || res(imax) > 1e-6 * lmax.abs());
    Spectrum::new(lmin, lmax, SpectralMethod::Lanczos, uncertain)
}

/// Energy error `‖∇(u - u_h)‖` over Ω and its per-cell contributions `γ_T`.
pub fn energy_error(
    mesh: &ForestMesh,
    space: &FeSpace,
    cut: &CutQuadrature,
    free_solution: &[f64],
    problem: &Benchmark,
) -> Result<(f64, Vec<f64>)> {
    let full = space.constraints.prolongate(free_solution)?;
    let gamma: Vec<f64> = (0..mesh.len())
        .into_par_iter()
        .map(|i| {
            let Some(dofs) = space.dofs.cell_dofs[i] else { return 0.0 };
            let (lo, hi) = mesh.cell_bounds(i);
            let e2 = with_interior(mesh, cut, i, |rule| {
                let mut s = 0.0;
                for (p, w) in rule.points.iter().zip(&rule.weights) {
                    let g = q1_grad(lo, hi, *p);
                    let mut gh = [0.0; 2];
                    for k in 0..4 {
                        gh[0] += g[k][0] * full[dofs[k]];
                        gh[1] += g[k][1] * full[dofs[k]];
                    }
                    let ge = problem.grad(*p);
                    s += w * ((ge[0] - gh[0]).powi(2) + (ge[1] - gh[1]).powi(2));
                }
                s
            });
            e2.sqrt()
        })
        .collect();
    let total = gamma.iter().map(|g| g * g).sum::<f64>().sqrt();
    Ok((total, gamma))
}

/// `‖u‖_a` of the exact solution with the same quadrature.
pub fn exact_energy_norm(mesh: &ForestMesh, cut: &CutQuadrature, problem: &Benchmark) -> f64 {
    (0..mesh.len())
        .into_par_iter()
        .map(|i| {
            if matches!(cut.cells[i], CellRule::Empty) {
                return 0.0;
            }
            with_interior(mesh, cut, i, |rule| {
                rule.points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(p, w)| {
                        let g = problem.grad(*p);
                        w * (g[0] * g[0] + g[1] * g[1])
                    })
                    .sum::<f64>()
            })
        })
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{classify_cells, cut_quadrature, LevelSet};
    use crate::fe_space::SpaceKind;
    use crate::mesh::BoxDomain;

    fn interior_system(level: u32) -> (ForestMesh, FeSpace, LinearSystem) {
        let mesh = ForestMesh::new_uniform(BoxDomain::unit(), level).unwrap();
        let ls = LevelSet::circle([0.5, 0.5], 10.0).unwrap();
        let cut = cut_quadrature(&mesh, &ls, 2, 2).unwrap();
        let classes = classify_cells(&mesh, &cut, 0.25).unwrap();
        let space = FeSpace::build(&mesh, &classes, &ls, SpaceKind::Aggregated).unwrap();
        let sys = assemble(&mesh, &space, &cut, &WeakFormConfig::aggregated(), &Benchmark::Affine).unwrap();
        (mesh, space, sys)
    }

    #[test]
    fn csr_from_triplets() {
        let a = CsrMatrix::from_triplets(2, vec![(1, 1, 4.0), (0, 0, 0.5), (0, 0, 0.5), (0, 1, 2.0)]);
        assert_eq!(a.get(0, 0), 1.0);
        assert_eq!(a.get(1, 0), 0.0);
        assert_eq!(a.nnz(), 3);
        let mut y = [0.0; 2];
        a.matvec(&[1.0, 1.0], &mut y);
        assert_eq!(y, [3.0, 4.0]);
        assert_eq!(a.asymmetry(), 2.0);
    }

    #[test]
    fn interior_stiffness_is_textbook_q1() {
        // Dense oracle: the Q1 Laplacian on a square has entries 2/3, -1/6, -1/3.
        let (_, space, sys) = interior_system(2);
        let kref = [
            [2.0 / 3.0, -1.0 / 6.0, -1.0 / 6.0, -1.0 / 3.0],
            [-1.0 / 6.0, 2.0 / 3.0, -1.0 / 3.0, -1.0 / 6.0],
            [-1.0 / 6.0, -1.0 / 3.0, 2.0 / 3.0, -1.0 / 6.0],
            [-1.0 / 3.0, -1.0 / 6.0, -1.0 / 6.0, 2.0 / 3.0],
        ];
        let n = space.dofs.len();
        let mut dense = vec![vec![0.0; n]; n];
        for cd in space.dofs.cell_dofs.iter().flatten() {
            for r in 0..4 {
                for c in 0..4 {
                    dense[cd[r]][cd[c]] += kref[r][c];
                }
            }
        }
        assert_eq!(sys.n(), n);
        for i in 0..n {
            for j in 0..n {
                let (gi, gj) = (sys.free_dofs[i], sys.free_dofs[j]);
                assert!((sys.a.get(i, j) - dense[gi][gj]).abs() < 1e-13);
            }
        }
        assert!(sys.a.asymmetry() <= 1e-12 * sys.a.max_abs());
    }

    #[test]
    fn pcg_on_mass_matrix_and_zero_rhs() {
        let (_, _, sys) = interior_system(4);
        let mass = LinearSystem { a: sys.m.clone(), ..sys.clone() };
        let mut b = vec![0.0; mass.n()];
        mass.m.matvec(&vec![1.0; mass.n()], &mut b);
        let rhs_sys = LinearSystem { b, ..mass };
        let r = solve_pcg(&rhs_sys, 1e-9, 5000).unwrap();
        assert!(r.converged && r.iterations <= 30, "{} iterations", r.iterations);
        assert!(r.x.iter().all(|v| (v - 1.0).abs() < 1e-7));
        let zero = LinearSystem { b: vec![0.0; rhs_sys.n()], ..rhs_sys };
        let z = solve_pcg(&zero, 1e-9, 5000).unwrap();
        assert_eq!(z.iterations, 0);
        assert!(z.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pcg_detects_indefinite() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (1, 1, 1.0), (0, 1, 2.0), (1, 0, 2.0)]);
        assert!(matches!(solve_pcg_matrix(&a, &[1.0, -1.0], 1e-9, 10), Err(Error::Solver(_))));
    }

    #[test]
    fn spectra() {
        let d = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (1, 1, 4.0)]);
        let s = spectrum_dense(&d);
        assert_eq!(s.kappa, 4.0);
        assert_eq!(s.method, SpectralMethod::Dense);
        let l = spectrum_lanczos(&d, 200);
        assert!((l.kappa - 4.0).abs() < 1e-10);
        let sing = CsrMatrix::from_triplets(2, vec![(0, 0, 0.0), (1, 1, 4.0)]);
        assert!(spectrum_dense(&sing).kappa.is_infinite());
    }

    fn circle_system(level: u32, kind: SpaceKind) -> (ForestMesh, FeSpace, CutQuadrature, LinearSystem) {
        let mesh = ForestMesh::new_uniform(BoxDomain::unit(), level).unwrap();
        let ls = LevelSet::circle([0.52, 0.47], 0.37).unwrap();
        let cut = cut_quadrature(&mesh, &ls, 3, 4).unwrap();
        let classes = classify_cells(&mesh, &cut, 0.25).unwrap();
        let space = FeSpace::build(&mesh, &classes, &ls, kind).unwrap();
        let cfg = match kind {
            SpaceKind::Aggregated => WeakFormConfig::aggregated(),
            SpaceKind::Standard => WeakFormConfig::standard(),
        };
        let sys = assemble(&mesh, &space, &cut, &cfg, &Benchmark::Affine).unwrap();
        (mesh, space, cut, sys)
    }

    #[test]
    fn affine_solution_is_reproduced() {
        for kind in [SpaceKind::Aggregated, SpaceKind::Standard] {
            let (mesh, space, cut, sys) = circle_system(4, kind);
            assert!(sys.a.asymmetry() <= 1e-12 * sys.a.max_abs());
            let r = solve_pcg(&sys, 1e-12, 10_000).unwrap();
            assert!(r.converged, "{kind:?}");
            let (err, _) = energy_error(&mesh, &space, &cut, &r.x, &Benchmark::Affine).unwrap();
            let norm = exact_energy_norm(&mesh, &cut, &Benchmark::Affine);
            assert!(err / norm < 1e-9, "{kind:?}: {}", err / norm);
        }
    }

    #[test]
    fn affine_solution_is_reproduced_around_a_hole() {
        // Concave cut arcs where the curved-edge correction is rejected.
        let mesh = ForestMesh::new_uniform(BoxDomain::symmetric(), 4).unwrap();
        let ls = LevelSet::annulus([0.011, 0.017], 0.3, 0.9).unwrap();
        let cut = cut_quadrature(&mesh, &ls, 3, 4).unwrap();
        let classes = classify_cells(&mesh, &cut, 0.25).unwrap();
        for kind in [SpaceKind::Aggregated, SpaceKind::Standard] {
            let space = FeSpace::build(&mesh, &classes, &ls, kind).unwrap();
            let cfg = match kind {
                SpaceKind::Aggregated => WeakFormConfig::aggregated(),
                SpaceKind::Standard => WeakFormConfig::standard(),
            };
            let sys = assemble(&mesh, &space, &cut, &cfg, &Benchmark::Affine).unwrap();
            let r = solve_pcg(&sys, 1e-13, 10_000).unwrap();
            let (err, _) = energy_error(&mesh, &space, &cut, &r.x, &Benchmark::Affine).unwrap();
            let rel = err / exact_energy_norm(&mesh, &cut, &Benchmark::Affine);
            assert!(rel < 1e-10, "{kind:?}: {rel}");
        }
    }

    #[test]
    fn lanczos_agrees_with_dense() {
        let (_, _, _, sys) = circle_system(4, SpaceKind::Aggregated);
        let d = spectrum_dense(&sys.a);
        let l = spectrum_lanczos(&sys.a, 200);
        assert!((d.lambda_max - l.lambda_max).abs() < 1e-8 * d.lambda_max);
        assert!((d.lambda_min - l.lambda_min).abs() < 1e-6 * d.lambda_min);
    }

    #[test]
    fn mass_conditioning_is_mesh_independent() {
        let k: Vec<f64> = (2..=4).map(|l| spectrum_dense(&interior_system(l).2.m).kappa).collect();
        for w in k.windows(2) {
            assert!((w[1] / w[0] - 1.0).abs() < 0.05, "{k:?}");
        }
    }

    #[test]
    fn tau_eigenvalue_half_plane() {
        // Unit cell cut at x = 1/2, boundary on x = 1/2 with n = (1, 0).
        let cut_x = 0.5;
        let lo = [0.0, 0.0];
        let hi = [1.0, 1.0];
        let interior = tensor_rule(3, lo, [cut_x, 1.0]).unwrap();
        let mut k = [[0.0; 4]; 4];
        for (p, w) in interior.points.iter().zip(&interior.weights) {
            let g = q1_grad(lo, hi, *p);
            for r in 0..4 {
                for c in 0..4 {
                    k[r][c] += w * (g[r][0] * g[c][0] + g[r][1] * g[c][1]);
                }
            }
        }
        let seg = crate::quadrature::segment_rule(3, [cut_x, 0.0], [cut_x, 1.0]).unwrap();
        let mut b = [[0.0; 4]; 4];
        for (p, w) in seg.points.iter().zip(&seg.weights) {
            let g = q1_grad(lo, hi, *p);
            for r in 0..4 {
                for c in 0..4 {
                    b[r][c] += w * g[r][0] * g[c][0];
                }
            }
        }
        // Dense oracle: generalized eigenvalues of the projected pencil.
        let lmax = tau_eigenvalue(&k, &b).unwrap();
        let mut best: f64 = 0.0;
        for t in 0..2000 {
            let a = t as f64 * std::f64::consts::PI / 1000.0;
            for s in 0..50 {
                let c = s as f64 / 49.0 * 2.0 - 1.0;
                // Random directions in the 3D complement of constants.
                let v = [a.cos(), a.sin() * c, a.sin() * (1.0 - c * c).sqrt()];
                let q = [[0.5, 0.5, 0.5], [-0.5, 0.5, -0.5], [0.5, -0.5, -0.5], [-0.5, -0.5, 0.5]];
                let mu: Vec<f64> = (0..4).map(|i| (0..3).map(|j| q[i][j] * v[j]).sum()).collect();
                let quad = |m: &[[f64; 4]; 4]| -> f64 {
                    (0..4).map(|i| (0..4).map(|j| mu[i] * m[i][j] * mu[j]).sum::<f64>()).sum()
                };
                best = best.max(quad(&b) / quad(&k));
            }
        }
        assert!(lmax >= best - 1e-12 && lmax < best * 1.01, "{lmax} vs {best}");
    }
}
