//! Generalized symmetric eigensolver robust to a semidefinite mass matrix,
//! the discrete source solve, and discrete error norms.
//!
//! The eigensolver works on the inverted pencil: with `A = L L^T` it forms
//! `C = L^{-1} B L^{-T}` and reads the physical spectrum off the large end
//! of `mu`, `lambda = 1/mu`; a singular mass matrix (nonstabilized variant)
//! maps cleanly to `mu = 0`, and those modes are discarded and counted.
//! When `A` itself is semidefinite (Neumann), the pencil is shifted to
//! `(A + rho B, B)` first, which translates the spectrum by exactly `rho`
//! and keeps the constant mode at `lambda = 0` after shifting back.

use crate::forms::AssembledSystem;
use crate::linalg::{self, LinalgError};
use crate::mesh::PolygonalMesh;
use crate::polybasis::MonomialBasis2D;
use crate::quadrature::polygon_quadrature;
use crate::sparse::{pcg, SymCsr};
use crate::vemspace::{local_ops, BoundaryCondition, DofMap, SpaceError};
use crate::{Point2, Vector2};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("matrix factorization failed: {0}")]
    FactorizationFailure(#[from] LinalgError),
    #[error("iterative solver did not reach the residual target within {iterations} iterations")]
    ConvergenceFailure { iterations: usize },
    #[error("source problem requires a positive definite stiffness (Dirichlet mode)")]
    SourceNeedsDirichlet,
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// Definiteness of the stiffness matrix handed to the eigensolver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StiffnessKind {
    /// Dirichlet mode: `A` is positive definite and factored as is.
    PositiveDefinite,
    /// Neumann mode: `A` has the constants in its kernel; the pencil is
    /// shifted by `rho B` before factorization.
    SemidefiniteConstants,
}

/// Ascending finite eigenvalues with B-orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub eigenvalues: Vec<f64>,
    /// Columns are the eigenvectors, matching `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    /// Number of infinite/spurious modes dropped (`mu` below cutoff).
    pub discarded: usize,
}

impl EigenResult {
    /// Largest scaled residual `‖A x − λ B x‖ / ((‖A‖ + λ ‖B‖) ‖x‖)` over
    /// the reported pairs.
    pub fn max_scaled_residual(&self, a: &SymCsr, b: &SymCsr) -> f64 {
        let na = a.norm_inf();
        let nb = b.norm_inf();
        let mut worst = 0.0f64;
        for (i, &lam) in self.eigenvalues.iter().enumerate() {
            let x = DVector::from_column_slice(self.eigenvectors.column(i).as_slice());
            let r = a.matvec(&x) - b.matvec(&x) * lam;
            worst = worst.max(r.norm() / ((na + lam.abs() * nb) * x.norm()));
        }
        worst
    }

    /// Largest deviation of `x_i^T B x_j` from the identity.
    pub fn max_b_orthonormality_defect(&self, b: &SymCsr) -> f64 {
        let m = self.eigenvalues.len();
        let mut worst = 0.0f64;
        for i in 0..m {
            let xi = DVector::from_column_slice(self.eigenvectors.column(i).as_slice());
            let bxi = b.matvec(&xi);
            for j in 0..m {
                let xj = DVector::from_column_slice(self.eigenvectors.column(j).as_slice());
                let v = xj.dot(&bxi);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v - target).abs());
            }
        }
        worst
    }
}

/// Relative cutoff for discarding infinite modes of the inverted problem.
const MU_CUT_REL: f64 = 1e-10;
/// Pencil shift used when the stiffness is semidefinite.
const NEUMANN_SHIFT: f64 = 1.0;

/// Solves `A x = lambda B x` for the `num_eigs` smallest finite
/// eigenvalues by dense symmetric reduction of the inverted problem.
pub fn solve_gevp(
    a: &SymCsr,
    b: &SymCsr,
    num_eigs: usize,
    kind: StiffnessKind,
) -> Result<EigenResult, SolveError> {
    let n = a.n;
    assert_eq!(n, b.n, "pencil matrices must have equal order");
    assert!(num_eigs <= n, "cannot request more eigenpairs than the order");
    let b_dense = b.to_dense();
    let (a_shifted, rho) = match kind {
        StiffnessKind::PositiveDefinite => (a.to_dense(), 0.0),
        StiffnessKind::SemidefiniteConstants => {
            (a.to_dense() + &b_dense * NEUMANN_SHIFT, NEUMANN_SHIFT)
        }
    };
    let l = linalg::cholesky_lower(&a_shifted)?;

    // C = L^{-1} B L^{-T}
    let mut c = b_dense;
    linalg::solve_lower_left(&l, &mut c, false);
    linalg::solve_lower_right(&l, &mut c, true);
    // symmetrize roundoff
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }

    let (mu, y) = linalg::sym_eigh(&c)?;
    let mu_max = mu[n - 1].max(0.0);
    let mu_cut = MU_CUT_REL * mu_max;

    let keep = num_eigs.min(n);
    let mut eigenvalues = Vec::with_capacity(keep);
    let mut vectors = DMatrix::zeros(n, keep);
    let mut col = 0usize;
    for i in (0..n).rev() {
        if col >= keep || mu[i] <= mu_cut {
            break;
        }
        let lam = 1.0 / mu[i] - rho;
        // back-substitute and B-normalize: x^T B x = mu for unit y
        let mut x = DMatrix::from_column_slice(n, 1, y.column(i).as_slice());
        linalg::solve_lower_left(&l, &mut x, true);
        let scale = 1.0 / mu[i].sqrt();
        for r in 0..n {
            vectors[(r, col)] = x[(r, 0)] * scale;
        }
        eigenvalues.push(lam);
        col += 1;
    }
    let discarded = mu.iter().filter(|&&m| m <= mu_cut).count();
    vectors = vectors.columns(0, col).into_owned();
    Ok(EigenResult { eigenvalues, eigenvectors: vectors, discarded })
}

/// Order above which the source solve switches from dense Cholesky to
/// Jacobi-preconditioned CG.
const DENSE_SOURCE_LIMIT: usize = 4096;
/// Residual target of the source solve, relative to `‖rhs‖`.
const SOURCE_TOL_REL: f64 = 1e-10;

/// Solves the discrete source problem `A x = rhs` (Dirichlet only).
pub fn solve_source(
    system: &AssembledSystem,
    rhs: &DVector<f64>,
) -> Result<DVector<f64>, SolveError> {
    if system.dofmap.bc != BoundaryCondition::Dirichlet {
        return Err(SolveError::SourceNeedsDirichlet);
    }
    let n = system.a.n;
    let rhs_norm = rhs.norm();
    if rhs_norm == 0.0 {
        return Ok(DVector::zeros(n));
    }
    let x = if n <= DENSE_SOURCE_LIMIT {
        let l = linalg::cholesky_lower(&system.a.to_dense())?;
        linalg::cholesky_solve(&l, rhs)
    } else {
        let max_iter = 200 * (n as f64).sqrt() as usize + 2000;
        let (x, _iters) = pcg(&system.a, rhs, SOURCE_TOL_REL * 0.05, max_iter)
            .ok_or(SolveError::ConvergenceFailure { iterations: max_iter })?;
        x
    };
    let res = (&system.a.matvec(&x) - rhs).norm();
    if res > SOURCE_TOL_REL * rhs_norm {
        return Err(SolveError::ConvergenceFailure { iterations: 0 });
    }
    Ok(x)
}

/// L² and broken-H¹ errors of a discrete solution against exact fields;
/// the element projections `Pi^0_k u_h` and `Pi^nabla_k u_h` stand in for
/// the virtual function.
pub fn discrete_errors(
    mesh: &PolygonalMesh,
    dofmap: &DofMap,
    dofvec: &DVector<f64>,
    u_exact: impl Fn(Point2) -> f64,
    grad_exact: impl Fn(Point2) -> Vector2,
) -> Result<(f64, f64), SolveError> {
    let k = dofmap.degree;
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    for ci in 0..mesh.n_cells() {
        let cell = mesh.cell(ci);
        let ops = local_ops(&cell, k)?;
        let mut local = DVector::zeros(ops.n_dofs);
        for (i, gi) in dofmap.cell_dofs(mesh, ci).into_iter().enumerate() {
            local[i] = gi.map_or(0.0, |g| dofvec[g]);
        }
        let c0 = &ops.pi_zero_coeff * &local;
        let cg = &ops.pi_nabla_coeff * &local;
        let basis = MonomialBasis2D::for_cell(&cell, k);
        for (p, w) in polygon_quadrature(&cell.points(), 8) {
            let du = u_exact(p) - basis.eval_poly(&c0, p);
            l2 += w * du * du;
            let dg = grad_exact(p) - basis.eval_poly_grad(&cg, p);
            h1 += w * dg.norm_squared();
        }
    }
    Ok((l2.sqrt(), h1.sqrt()))
}

/// Locally optimal block preconditioned CG for the smallest eigenpairs of
/// `(A, B)` with `B` positive definite; the optional iterative path (used
/// for reference computations beyond the dense size limit). Preconditioned
/// by the inverse stiffness diagonal.
pub fn lobpcg(
    a: &SymCsr,
    b: &SymCsr,
    num_eigs: usize,
    max_iter: usize,
    tol: f64,
    seed_constant: Option<&DVector<f64>>,
) -> Result<EigenResult, SolveError> {
    let n = a.n;
    let m = (num_eigs + 4).min(n);
    let na = a.norm_inf();
    let nb = b.norm_inf();
    let diag = a.diagonal();
    let dmax = diag.iter().cloned().fold(0.0f64, f64::max);
    let precond = |r: &DMatrix<f64>| -> DMatrix<f64> {
        let mut w = r.clone();
        for i in 0..n {
            let d = diag[i].max(1e-10 * dmax);
            for j in 0..w.ncols() {
                w[(i, j)] /= d;
            }
        }
        w
    };
    let spmm = |s: &SymCsr, x: &DMatrix<f64>| -> DMatrix<f64> {
        let mut y = DMatrix::zeros(n, x.ncols());
        for j in 0..x.ncols() {
            let xj = DVector::from_column_slice(x.column(j).as_slice());
            let yj = s.matvec(&xj);
            y.column_mut(j).copy_from(&yj);
        }
        y
    };
    // deterministic pseudo-random start block
    let mut x = DMatrix::from_fn(n, m, |i, j| {
        let v = (i as u64)
            .wrapping_mul(6364136223846793005)
            .wrapping_add(j as u64 * 1442695040888963407);
        ((v >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    });
    if let Some(c) = seed_constant {
        x.column_mut(0).copy_from(c);
    }

    // B-orthonormalizes the columns of s, dropping near-dependent ones.
    let b_orthonormalize = |s: &DMatrix<f64>, bs: &DMatrix<f64>| -> DMatrix<f64> {
        let g = s.transpose() * bs;
        let sym = (&g + &g.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let emax = eig.eigenvalues.max().max(f64::MIN_POSITIVE);
        let mut cols = Vec::new();
        for i in 0..eig.eigenvalues.len() {
            if eig.eigenvalues[i] > 1e-12 * emax {
                cols.push(i);
            }
        }
        let mut t = DMatrix::zeros(s.ncols(), cols.len());
        for (jj, &i) in cols.iter().enumerate() {
            let scale = 1.0 / eig.eigenvalues[i].sqrt();
            for r in 0..s.ncols() {
                t[(r, jj)] = eig.eigenvectors[(r, i)] * scale;
            }
        }
        s * &t
    };

    let mut p: Option<DMatrix<f64>> = None;
    for _iter in 0..max_iter {
        let bx = spmm(b, &x);
        x = b_orthonormalize(&x, &bx);
        let ax = spmm(a, &x);
        let bx = spmm(b, &x);
        // Rayleigh-Ritz in span(X)
        let xtax = {
            let g = x.transpose() * &ax;
            (&g + &g.transpose()) * 0.5
        };
        let eig = xtax.symmetric_eigen();
        let mut order: Vec<usize> = (0..x.ncols()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let mut q = DMatrix::zeros(x.ncols(), x.ncols());
        let mut theta = vec![0.0; x.ncols()];
        for (jj, &i) in order.iter().enumerate() {
            q.column_mut(jj).copy_from(&eig.eigenvectors.column(i));
            theta[jj] = eig.eigenvalues[i];
        }
        x = &x * &q;
        let ax = &ax * &q;
        let bx = &bx * &q;

        // residuals
        let mut r = ax.clone();
        for j in 0..x.ncols() {
            let mut col = r.column_mut(j);
            col.axpy(-theta[j], &bx.column(j), 1.0);
        }
        let mut converged = 0;
        for j in 0..num_eigs.min(x.ncols()) {
            let rn = r.column(j).norm();
            if rn <= tol * (na + theta[j].abs() * nb) {
                converged += 1;
            }
        }
        if converged >= num_eigs {
            let keep = num_eigs;
            let mut vectors = DMatrix::zeros(n, keep);
            let mut values = Vec::with_capacity(keep);
            for j in 0..keep {
                // B-normalize
                let xj = x.column(j).into_owned();
                let bxj = bx.column(j).into_owned();
                let nrm = xj.dot(&bxj).sqrt();
                for i in 0..n {
                    vectors[(i, j)] = xj[i] / nrm;
                }
                values.push(theta[j]);
            }
            return Ok(EigenResult { eigenvalues: values, eigenvectors: vectors, discarded: 0 });
        }

        let w = precond(&r);
        // subspace basis [X, W, P]
        let total = x.ncols() + w.ncols() + p.as_ref().map_or(0, |p| p.ncols());
        let mut s = DMatrix::zeros(n, total);
        s.columns_mut(0, x.ncols()).copy_from(&x);
        s.columns_mut(x.ncols(), w.ncols()).copy_from(&w);
        if let Some(pp) = &p {
            s.columns_mut(x.ncols() + w.ncols(), pp.ncols()).copy_from(pp);
        }
        let bs = spmm(b, &s);
        let s = b_orthonormalize(&s, &bs);
        let cols = s.ncols();
        let as_ = spmm(a, &s);
        let stas = {
            let g = s.transpose() * &as_;
            (&g + &g.transpose()) * 0.5
        };
        let eig = stas.symmetric_eigen();
        let mut order: Vec<usize> = (0..cols).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let mtake = m.min(cols);
        let mut y = DMatrix::zeros(cols, mtake);
        for (jj, &i) in order.iter().take(mtake).enumerate() {
            y.column_mut(jj).copy_from(&eig.eigenvectors.column(i));
        }
        let x_new = &s * &y;
        // implicit P: new directions minus their X components
        let xty = x.transpose() * &x_new;
        let p_new = &x_new - &x * &xty;
        p = Some(p_new);
        x = x_new;
    }
    Err(SolveError::ConvergenceFailure { iterations: max_iter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn diag_csr(d: &[f64]) -> SymCsr {
        let mut t: Vec<(usize, usize, f64)> =
            d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        SymCsr::from_triplets(d.len(), &mut t)
    }

    #[test]
    fn decoupled_diagonal_pencil() {
        let a = diag_csr(&[2.0, 6.0]);
        let b = diag_csr(&[1.0, 2.0]);
        let r = solve_gevp(&a, &b, 2, StiffnessKind::PositiveDefinite).unwrap();
        assert_eq!(r.eigenvalues.len(), 2);
        assert_relative_eq!(r.eigenvalues[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(r.eigenvalues[1], 3.0, epsilon = 1e-12);
        assert_eq!(r.discarded, 0);
    }

    #[test]
    fn singular_mass_discards_infinite_mode() {
        let a = diag_csr(&[1.0, 1.0]);
        let b = diag_csr(&[1.0, 0.0]);
        let r = solve_gevp(&a, &b, 2, StiffnessKind::PositiveDefinite).unwrap();
        assert_eq!(r.eigenvalues.len(), 1);
        assert_relative_eq!(r.eigenvalues[0], 1.0, epsilon = 1e-12);
        assert_eq!(r.discarded, 1);
    }

    /// Independent oracle: cyclic Jacobi eigensolver (no LAPACK on this
    /// path) applied to the B-Cholesky reduction of the pencil.
    fn jacobi_eigenvalues(mut a: DMatrix<f64>) -> Vec<f64> {
        let n = a.nrows();
        for _sweep in 0..100 {
            let mut off = 0.0f64;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a[(p, q)] * a[(p, q)];
                }
            }
            if off.sqrt() < 1e-14 * a.norm() {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                    let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut w: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        w.sort_by(f64::total_cmp);
        w
    }

    fn random_spd_pair(n: usize, seed: u64) -> (SymCsr, SymCsr) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut make = |shift: f64| -> SymCsr {
            let m = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let spd = &m * m.transpose() + DMatrix::<f64>::identity(n, n) * shift;
            let mut t = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    t.push((i, j, spd[(i, j)]));
                }
            }
            SymCsr::from_triplets(n, &mut t)
        };
        (make(n as f64 * 0.5), make(n as f64 * 0.25))
    }

    #[test]
    fn random_pencil_matches_jacobi_oracle() {
        let n = 50;
        let (a, b) = random_spd_pair(n, 4242);
        let r = solve_gevp(&a, &b, n, StiffnessKind::PositiveDefinite).unwrap();
        assert_eq!(r.discarded, 0);
        // oracle: R^{-1} A R^{-T} with B = R R^T, eigenvalues via Jacobi
        let bd = b.to_dense();
        let rchol = bd.cholesky().unwrap();
        let rinv = rchol.l().try_inverse().unwrap();
        let std = &rinv * a.to_dense() * rinv.transpose();
        let mut oracle = jacobi_eigenvalues(std);
        oracle.sort_by(f64::total_cmp);
        for (i, &lam) in r.eigenvalues.iter().enumerate() {
            assert_relative_eq!(lam, oracle[i], max_relative = 1e-9);
        }
        assert!(r.max_scaled_residual(&a, &b) < 1e-8);
        assert!(r.max_b_orthonormality_defect(&b) < 1e-8);
    }

    #[test]
    fn semidefinite_stiffness_keeps_zero_mode() {
        // A = ring graph Laplacian (constants in kernel), B = I
        let n = 6;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            let j = (i + 1) % n;
            t.push((i, j, -1.0));
            t.push((j, i, -1.0));
        }
        let a = SymCsr::from_triplets(n, &mut t);
        let b = diag_csr(&vec![1.0; n]);
        let r = solve_gevp(&a, &b, 3, StiffnessKind::SemidefiniteConstants).unwrap();
        assert!(r.eigenvalues[0].abs() < 1e-10, "zero mode kept: {}", r.eigenvalues[0]);
        // ring Laplacian spectrum: 2 - 2 cos(2 pi k / n), double
        let exact = 2.0 - 2.0 * (std::f64::consts::TAU / n as f64).cos();
        assert_relative_eq!(r.eigenvalues[1], exact, epsilon = 1e-10);
        assert_relative_eq!(r.eigenvalues[2], exact, epsilon = 1e-10);
    }

    #[test]
    fn lobpcg_matches_dense_on_overlap() {
        let n = 120;
        // 1D stiffness/mass pencil
        let mut ta = Vec::new();
        let mut tb = Vec::new();
        for i in 0..n {
            ta.push((i, i, 2.0));
            tb.push((i, i, 4.0 / 6.0));
            if i + 1 < n {
                ta.push((i, i + 1, -1.0));
                ta.push((i + 1, i, -1.0));
                tb.push((i, i + 1, 1.0 / 6.0));
                tb.push((i + 1, i, 1.0 / 6.0));
            }
        }
        let a = SymCsr::from_triplets(n, &mut ta);
        let b = SymCsr::from_triplets(n, &mut tb);
        let dense = solve_gevp(&a, &b, 5, StiffnessKind::PositiveDefinite).unwrap();
        let iterative = lobpcg(&a, &b, 5, 2000, 1e-6, None).unwrap();
        for i in 0..5 {
            assert_relative_eq!(
                iterative.eigenvalues[i],
                dense.eigenvalues[i],
                max_relative = 1e-8
            );
        }
    }
}
