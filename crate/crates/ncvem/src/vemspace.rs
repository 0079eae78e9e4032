//! The local nonconforming virtual element space of order `k`: degree of
//! freedom layout, interpolation, and the projector matrices computed
//! exclusively from dofs.
//!
//! Degrees of freedom of a virtual function `v` on a cell `P`:
//!
//! * per edge `S`: the normalized moments `(1/|S|) ∫_S v t^j ds`,
//!   `j = 0 .. k-1`, taken in the edge's global arc-length orientation so
//!   that both adjacent cells see identical values;
//! * per cell: the normalized moments `(1/|P|) ∫_P v m_beta dP` for
//!   `|beta| <= k - 2`.
//!
//! The elliptic projector `Pi^nabla_k v` is recovered from integration by
//! parts: testing against a monomial `q` gives
//! `a^P(v, q) = -∫_P v Δq + Σ_S ∫_S v (grad q . n)`, where `Δq` hits the
//! interior moments and the edge-normal derivative (a 1D polynomial of
//! degree `k - 1`) hits the edge moments — every term is an exact linear
//! map of dofs. The constant kernel is fixed by a boundary-average
//! condition for `k = 1` and a cell-average condition for `k >= 2`,
//! appended as a bordered (Lagrange) row so the stiffness Gram stays
//! symmetric. The L² projector `Pi^0_k` then follows from the enhancement
//! property: moments of `v` against monomials of degree `k-1` and `k`
//! equal those of `Pi^nabla_k v`.

use crate::mesh::{CellView, PolygonalMesh};
use crate::polybasis::{
    dim_poly, edge_trace_coeffs, index_of, integrate_monomials, mass_gram, multi_indices,
    stiffness_gram, t_moment, MonomialBasis2D,
};
use crate::quadrature::{gauss_legendre, polygon_quadrature};
use crate::Point2;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("unsupported polynomial degree {degree} (supported: 1..=3)")]
    UnsupportedDegree { degree: usize },
    #[error("projector system on cell {cell} is numerically singular (condition {cond:.3e})")]
    SingularProjectorSystem { cell: usize, cond: f64 },
}

/// Boundary-condition mode of the global space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    /// Homogeneous Dirichlet: boundary-edge moments are removed from the
    /// space entirely.
    Dirichlet,
    Neumann,
}

impl std::str::FromStr for BoundaryCondition {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dirichlet" => Ok(BoundaryCondition::Dirichlet),
            "neumann" => Ok(BoundaryCondition::Neumann),
            other => Err(format!("unknown boundary condition `{other}`")),
        }
    }
}

/// Global numbering of edge-moment and interior-moment dofs.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub degree: usize,
    pub bc: BoundaryCondition,
    /// Per edge: global index of its first moment dof (`None` for boundary
    /// edges in Dirichlet mode).
    pub edge_base: Vec<Option<usize>>,
    /// Per cell: global index of its first interior-moment dof.
    pub cell_base: Vec<usize>,
    pub n_interior_per_cell: usize,
    pub n_dofs: usize,
    /// Marks dofs sitting on boundary edges (all false in Dirichlet mode,
    /// where such dofs do not exist).
    pub boundary_mask: Vec<bool>,
}

impl DofMap {
    /// Local-to-global map of one cell, in local dof order; `None` marks a
    /// Dirichlet-eliminated boundary dof.
    pub fn cell_dofs(&self, mesh: &PolygonalMesh, cell: usize) -> Vec<Option<usize>> {
        let k = self.degree;
        let mut out = Vec::with_capacity(local_dof_count(&mesh.cell(cell), k));
        for ce in &mesh.cell_edges[cell] {
            match self.edge_base[ce.edge] {
                Some(base) => out.extend((0..k).map(|j| Some(base + j))),
                None => out.extend(std::iter::repeat(None).take(k)),
            }
        }
        out.extend((0..self.n_interior_per_cell).map(|j| Some(self.cell_base[cell] + j)));
        out
    }
}

/// Number of local dofs of one cell: `k` per edge plus the interior
/// moments.
pub fn local_dof_count(cell: &CellView<'_>, k: usize) -> usize {
    cell.n_edges() * k + dim_poly(k as i64 - 2, 2)
}

/// Builds the global dof numbering: edge blocks first (edge-index order,
/// skipping boundary edges in Dirichlet mode), then cell interior blocks.
pub fn dof_layout(
    mesh: &PolygonalMesh,
    degree: usize,
    bc: BoundaryCondition,
) -> Result<DofMap, SpaceError> {
    if !(1..=3).contains(&degree) {
        return Err(SpaceError::UnsupportedDegree { degree });
    }
    let n_int = dim_poly(degree as i64 - 2, 2);
    let mut edge_base = Vec::with_capacity(mesh.n_edges());
    let mut next = 0usize;
    let mut boundary_mask = Vec::new();
    for e in &mesh.edges {
        if e.is_boundary() && bc == BoundaryCondition::Dirichlet {
            edge_base.push(None);
        } else {
            edge_base.push(Some(next));
            boundary_mask.extend(std::iter::repeat(e.is_boundary()).take(degree));
            next += degree;
        }
    }
    let mut cell_base = Vec::with_capacity(mesh.n_cells());
    for _ in 0..mesh.n_cells() {
        cell_base.push(next);
        boundary_mask.extend(std::iter::repeat(false).take(n_int));
        next += n_int;
    }
    Ok(DofMap {
        degree,
        bc,
        edge_base,
        cell_base,
        n_interior_per_cell: n_int,
        n_dofs: next,
        boundary_mask,
    })
}

/// Per-cell projector matrices and the exact Gram data used to build them.
///
/// Rows of `dmat` list the local dofs, columns the monomials of
/// `M_k(P)`; `pi_nabla_coeff` and `pi_zero_coeff` map a local dof vector
/// to the coefficients of the projected polynomial; `pi_nabla_dof` and
/// `pi_zero_dof` are the corresponding dof-space projectors.
#[derive(Debug, Clone)]
pub struct LocalElementOps {
    pub degree: usize,
    pub n_dofs: usize,
    pub area: f64,
    pub diameter: f64,
    /// dof values of the monomials: `dmat[i][a] = dof_i(m_a)`.
    pub dmat: DMatrix<f64>,
    /// `a^P(., m_a)` as a linear functional of the dofs.
    pub bmat: DMatrix<f64>,
    /// Exact stiffness Gram of the monomials.
    pub stiffness_gram: DMatrix<f64>,
    /// Exact mass Gram of the monomials.
    pub mass_gram: DMatrix<f64>,
    /// Exact integrals of the monomials up to degree `2k`.
    pub monomial_integrals: Vec<f64>,
    pub pi_nabla_coeff: DMatrix<f64>,
    pub pi_zero_coeff: DMatrix<f64>,
    pub pi_nabla_dof: DMatrix<f64>,
    pub pi_zero_dof: DMatrix<f64>,
}

impl LocalElementOps {
    /// dof vector of a polynomial given by coefficients in `M_k(P)`.
    pub fn dofs_of_polynomial(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        &self.dmat * coeffs
    }
}

/// Assembles the projector matrices of one cell from exact integrals only.
pub fn local_ops(cell: &CellView<'_>, degree: usize) -> Result<LocalElementOps, SpaceError> {
    if !(1..=3).contains(&degree) {
        return Err(SpaceError::UnsupportedDegree { degree });
    }
    let k = degree;
    let basis = MonomialBasis2D::for_cell(cell, k);
    let nk = basis.len();
    let n_int = dim_poly(k as i64 - 2, 2);
    let n_edges = cell.n_edges();
    let n_local = n_edges * k + n_int;
    let area = cell.area();
    let h = cell.diameter();

    let ints = integrate_monomials(cell, 2 * k);
    let gram_k = mass_gram(cell, k);
    let stiff = stiffness_gram(cell, k);
    let indices = multi_indices(k);

    let mut dmat = DMatrix::zeros(n_local, nk);
    let mut bmat = DMatrix::zeros(nk, n_local);

    for (ei, be) in cell.boundary_edges().enumerate() {
        let traces = edge_trace_coeffs(&basis, be.p0, be.p1);
        let row0 = ei * k;
        for (a, trace) in traces.iter().enumerate() {
            // edge moments of the monomial: (1/|S|) ∫_S m_a t^j ds
            for j in 0..k {
                let mut v = 0.0;
                for (m, &c) in trace.iter().enumerate() {
                    v += c * t_moment(m + j);
                }
                dmat[(row0 + j, a)] = v;
            }
            // boundary term of integration by parts:
            // ∫_S v (grad m_a . n) ds = h_S Σ_j gamma_j dof_{S,j}
            let (a1, a2) = indices[a];
            let mut gamma = vec![0.0; k];
            if a1 > 0 {
                let tc = &traces[index_of((a1 - 1, a2))];
                let c = a1 as f64 / h * be.outward_normal.x;
                for (m, &t) in tc.iter().enumerate() {
                    gamma[m] += c * t;
                }
            }
            if a2 > 0 {
                let tc = &traces[index_of((a1, a2 - 1))];
                let c = a2 as f64 / h * be.outward_normal.y;
                for (m, &t) in tc.iter().enumerate() {
                    gamma[m] += c * t;
                }
            }
            for (j, &g) in gamma.iter().enumerate() {
                bmat[(a, row0 + j)] += be.length * g;
            }
        }
    }

    let int_base = n_edges * k;
    let int_indices = multi_indices(k.saturating_sub(2));
    for (b, &(b1, b2)) in int_indices.iter().enumerate().take(n_int) {
        for (a, &(a1, a2)) in indices.iter().enumerate() {
            dmat[(int_base + b, a)] = ints[index_of((a1 + b1, a2 + b2))] / area;
        }
    }
    // volume term: -∫_P v Δm_a = -(|P|/h^2) Σ over second derivatives
    for (a, &(a1, a2)) in indices.iter().enumerate() {
        if a1 >= 2 {
            let b = index_of((a1 - 2, a2));
            bmat[(a, int_base + b)] -= (a1 * (a1 - 1)) as f64 / (h * h) * area;
        }
        if a2 >= 2 {
            let b = index_of((a1, a2 - 2));
            bmat[(a, int_base + b)] -= (a2 * (a2 - 1)) as f64 / (h * h) * area;
        }
    }

    // kernel-fixing closure row (bordered Lagrange formulation)
    let mut g_row = DVector::<f64>::zeros(nk); // on coefficients
    let mut r_row = DVector::<f64>::zeros(n_local); // on dofs
    if k == 1 {
        let perimeter: f64 = cell.boundary_edges().map(|be| be.length).sum();
        for (ei, be) in cell.boundary_edges().enumerate() {
            r_row[ei * k] = be.length / perimeter;
            let traces = edge_trace_coeffs(&basis, be.p0, be.p1);
            for (a, trace) in traces.iter().enumerate() {
                let mut v = 0.0;
                for (m, &c) in trace.iter().enumerate() {
                    v += c * t_moment(m);
                }
                g_row[a] += be.length * v / perimeter;
            }
        }
    } else {
        r_row[int_base] = 1.0;
        for a in 0..nk {
            g_row[a] = ints[a] / area;
        }
    }

    // bordered system [G g; g^T 0]
    let mut bordered = DMatrix::zeros(nk + 1, nk + 1);
    bordered.view_mut((0, 0), (nk, nk)).copy_from(&stiff);
    for a in 0..nk {
        bordered[(a, nk)] = g_row[a];
        bordered[(nk, a)] = g_row[a];
    }
    let svd = bordered.clone().svd(false, false);
    let cond = svd.singular_values.max() / svd.singular_values.min().max(f64::MIN_POSITIVE);
    if !cond.is_finite() || cond > 1e12 {
        return Err(SpaceError::SingularProjectorSystem { cell: cell.cell, cond });
    }
    let mut rhs = DMatrix::zeros(nk + 1, n_local);
    rhs.view_mut((0, 0), (nk, n_local)).copy_from(&bmat);
    for i in 0..n_local {
        rhs[(nk, i)] = r_row[i];
    }
    let lu = bordered.lu();
    let sol = lu.solve(&rhs).expect("conditioning checked above");
    let pi_nabla_coeff = sol.view((0, 0), (nk, n_local)).into_owned();

    // enhancement: low moments from dofs, top two degrees from Pi^nabla
    let h_pi = &gram_k * &pi_nabla_coeff;
    let mut cmat = DMatrix::zeros(nk, n_local);
    for (b, _) in int_indices.iter().enumerate().take(n_int) {
        cmat[(b, int_base + b)] = area;
    }
    for b in n_int..nk {
        cmat.row_mut(b).copy_from(&h_pi.row(b));
    }
    let gram_cond = {
        let svd = gram_k.clone().svd(false, false);
        svd.singular_values.max() / svd.singular_values.min().max(f64::MIN_POSITIVE)
    };
    if !gram_cond.is_finite() || gram_cond > 1e12 {
        return Err(SpaceError::SingularProjectorSystem { cell: cell.cell, cond: gram_cond });
    }
    let pi_zero_coeff = gram_k
        .clone()
        .lu()
        .solve(&cmat)
        .expect("conditioning checked above");

    let pi_nabla_dof = &dmat * &pi_nabla_coeff;
    let pi_zero_dof = &dmat * &pi_zero_coeff;

    Ok(LocalElementOps {
        degree: k,
        n_dofs: n_local,
        area,
        diameter: h,
        dmat,
        bmat,
        stiffness_gram: stiff,
        mass_gram: gram_k,
        monomial_integrals: ints,
        pi_nabla_coeff,
        pi_zero_coeff,
        pi_nabla_dof,
        pi_zero_dof,
    })
}

/// Normalized edge moments `(1/|S|) ∫_S f t^j ds` of a function, in the
/// edge's global orientation.
pub fn edge_moments_of(p0: Point2, p1: Point2, k: usize, f: impl Fn(Point2) -> f64) -> Vec<f64> {
    let mid = nalgebra::center(&p0, &p1);
    let half = (p1 - p0) * 0.5;
    let mut out = vec![0.0; k];
    for &(x, w) in gauss_legendre(10) {
        let t = 0.5 * x;
        let fv = f(mid + half * x) * w * 0.5;
        let mut tp = 1.0;
        for j in 0..k {
            out[j] += fv * tp;
            tp *= t;
        }
    }
    out
}

/// Global dof vector of the interpolant of `f`: every dof holds the
/// corresponding normalized moment of `f`. In Dirichlet mode the boundary
/// moments are simply not stored.
pub fn interpolate(
    mesh: &PolygonalMesh,
    dofmap: &DofMap,
    f: impl Fn(Point2) -> f64 + Sync,
) -> DVector<f64> {
    let k = dofmap.degree;
    let mut out = DVector::zeros(dofmap.n_dofs);
    for (ei, e) in mesh.edges.iter().enumerate() {
        if let Some(base) = dofmap.edge_base[ei] {
            let p0 = mesh.vertices[e.vertices[0]];
            let p1 = mesh.vertices[e.vertices[1]];
            for (j, m) in edge_moments_of(p0, p1, k, &f).into_iter().enumerate() {
                out[base + j] = m;
            }
        }
    }
    if dofmap.n_interior_per_cell > 0 {
        let l = k - 2;
        for ci in 0..mesh.n_cells() {
            let cell = mesh.cell(ci);
            let basis = MonomialBasis2D::for_cell(&cell, l);
            let rule = polygon_quadrature(&cell.points(), (l + 2).max(8));
            let mut acc = vec![0.0; basis.len()];
            for &(p, w) in &rule {
                let vals = basis.eval_all(p);
                let fv = f(p) * w;
                for (b, v) in vals.iter().enumerate() {
                    acc[b] += fv * v;
                }
            }
            for (b, v) in acc.into_iter().enumerate() {
                out[dofmap.cell_base[ci] + b] = v / cell.area();
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, generate_family, single_cell_mesh, Domain, MeshFamily};
    use approx::assert_relative_eq;

    fn unit_square() -> crate::mesh::PolygonalMesh {
        single_cell_mesh(&[
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ])
        .unwrap()
    }

    fn grid2x2() -> crate::mesh::PolygonalMesh {
        let mut vertices = Vec::new();
        for j in 0..3 {
            for i in 0..3 {
                vertices.push(Point2::new(i as f64 / 2.0, j as f64 / 2.0));
            }
        }
        let idx = |i: usize, j: usize| j * 3 + i;
        let mut cells = Vec::new();
        for j in 0..2 {
            for i in 0..2 {
                cells.push(vec![idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        build_mesh(vertices, cells, Domain::UnitSquare).unwrap()
    }

    #[test]
    fn dof_counts_on_2x2_grid() {
        let m = grid2x2();
        let d = dof_layout(&m, 1, BoundaryCondition::Dirichlet).unwrap();
        assert_eq!(d.n_dofs, 4);
        let d = dof_layout(&m, 2, BoundaryCondition::Dirichlet).unwrap();
        assert_eq!(d.n_dofs, 4 * 2 + 4 * 1);
        let d = dof_layout(&m, 1, BoundaryCondition::Neumann).unwrap();
        assert_eq!(d.n_dofs, 12);
        assert_eq!(d.boundary_mask.iter().filter(|&&b| b).count(), 8);
        assert!(matches!(
            dof_layout(&m, 4, BoundaryCondition::Neumann),
            Err(SpaceError::UnsupportedDegree { .. })
        ));
    }

    #[test]
    fn dof_indices_are_a_bijection() {
        let m = generate_family(MeshFamily::VoronoiCvt, 1, Domain::UnitSquare, 9).unwrap();
        for k in 1..=3 {
            for bc in [BoundaryCondition::Dirichlet, BoundaryCondition::Neumann] {
                let d = dof_layout(&m, k, bc).unwrap();
                let mut seen = vec![false; d.n_dofs];
                for ci in 0..m.n_cells() {
                    for g in d.cell_dofs(&m, ci).into_iter().flatten() {
                        seen[g] = true;
                    }
                }
                assert!(seen.iter().all(|&s| s), "k={k} {bc:?}");
            }
        }
    }

    #[test]
    fn interpolation_of_coordinate_on_square() {
        let m = unit_square();
        let d = dof_layout(&m, 1, BoundaryCondition::Neumann).unwrap();
        let v = interpolate(&m, &d, |p| p.x);
        // edges in loop order: bottom, right, top, left
        assert_relative_eq!(v[0], 0.5, epsilon = 1e-13);
        assert_relative_eq!(v[1], 1.0, epsilon = 1e-13);
        assert_relative_eq!(v[2], 0.5, epsilon = 1e-13);
        assert_relative_eq!(v[3], 0.0, epsilon = 1e-13);
    }

    #[test]
    fn interpolation_of_constant() {
        let m = grid2x2();
        for k in 1..=3 {
            let d = dof_layout(&m, k, BoundaryCondition::Neumann).unwrap();
            let v = interpolate(&m, &d, |_| 1.0);
            for ei in 0..m.n_edges() {
                let base = d.edge_base[ei].unwrap();
                assert_relative_eq!(v[base], 1.0, epsilon = 1e-13);
                for j in 1..k {
                    // normalized moments of 1: 0 for odd monomials
                    assert_relative_eq!(v[base + j], t_moment(j), epsilon = 1e-13);
                }
            }
            for ci in 0..m.n_cells() {
                if d.n_interior_per_cell > 0 {
                    assert_relative_eq!(v[d.cell_base[ci]], 1.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn square_k1_projector_by_hand() {
        let m = unit_square();
        let ops = local_ops(&m.cell(0), 1).unwrap();
        // dofs (bottom, right, top, left) = (0, 1, 0, -1) -> grad proj = 2x - 1
        let dofs = DVector::from_vec(vec![0.0, 1.0, 0.0, -1.0]);
        let c = &ops.pi_nabla_coeff * &dofs;
        assert_relative_eq!(c[0], 0.0, epsilon = 1e-13);
        assert_relative_eq!(c[1], 2.0 * 2f64.sqrt(), epsilon = 1e-13);
        assert_relative_eq!(c[2], 0.0, epsilon = 1e-13);
        // brute-force oracle: least squares fit of the projector definition
        // on the conforming representative v(x, y) = 2x - 1 (its edge means
        // are exactly these dofs), which is already in P_1.
        let basis = MonomialBasis2D::for_cell(&m.cell(0), 1);
        let rule = polygon_quadrature(&m.cell(0).points(), 6);
        let mut normal = nalgebra::DMatrix::<f64>::zeros(2, 2);
        let mut rhs = nalgebra::DVector::<f64>::zeros(2);
        for &(p, w) in &rule {
            let g = basis.grad_all(p);
            for a in 1..3 {
                for b in 1..3 {
                    normal[(a - 1, b - 1)] += w * g[a].dot(&g[b]);
                }
                // grad v = (2, 0)
                rhs[a - 1] += w * (2.0 * g[a].x);
            }
        }
        let sol = normal.lu().solve(&rhs).unwrap();
        assert_relative_eq!(sol[0], c[1], epsilon = 1e-12);
        assert_relative_eq!(sol[1], c[2], epsilon = 1e-12);
    }

    fn sample_cells() -> Vec<crate::mesh::PolygonalMesh> {
        let mut meshes = vec![unit_square()];
        // distorted pentagon
        meshes.push(
            single_cell_mesh(&[
                Point2::new(0.0, 0.0),
                Point2::new(1.2, -0.1),
                Point2::new(1.4, 0.9),
                Point2::new(0.5, 1.3),
                Point2::new(-0.2, 0.7),
            ])
            .unwrap(),
        );
        // nonconvex octagon cell
        meshes.push(
            single_cell_mesh(&[
                Point2::new(0.0, 0.0),
                Point2::new(0.5, -0.1),
                Point2::new(1.0, 0.0),
                Point2::new(0.8, 0.5),
                Point2::new(1.0, 1.0),
                Point2::new(0.5, 1.1),
                Point2::new(0.0, 1.0),
                Point2::new(0.2, 0.5),
            ])
            .unwrap(),
        );
        meshes
    }

    #[test]
    fn polynomial_preservation_and_identities() {
        for mesh in sample_cells() {
            let cell = mesh.cell(0);
            for k in 1..=3usize {
                let ops = local_ops(&cell, k).unwrap();
                let nk = dim_poly(k as i64, 2);
                // Pi^nabla reproduces every monomial from its dofs
                for a in 0..nk {
                    let mut coeffs = DVector::zeros(nk);
                    coeffs[a] = 1.0;
                    let dofs = ops.dofs_of_polynomial(&coeffs);
                    let back = &ops.pi_nabla_coeff * &dofs;
                    for b in 0..nk {
                        assert_relative_eq!(back[b], coeffs[b], epsilon = 1e-12, max_relative = 1e-11);
                    }
                    let back0 = &ops.pi_zero_coeff * &dofs;
                    for b in 0..nk {
                        assert_relative_eq!(back0[b], coeffs[b], epsilon = 1e-12, max_relative = 1e-11);
                    }
                }
                // idempotence of the dof-space projectors
                let p2 = &ops.pi_nabla_dof * &ops.pi_nabla_dof;
                let z2 = &ops.pi_zero_dof * &ops.pi_zero_dof;
                for i in 0..ops.n_dofs {
                    for j in 0..ops.n_dofs {
                        assert_relative_eq!(p2[(i, j)], ops.pi_nabla_dof[(i, j)], epsilon = 1e-12);
                        assert_relative_eq!(z2[(i, j)], ops.pi_zero_dof[(i, j)], epsilon = 1e-12);
                    }
                }
                // integration by parts consistency: G = B D
                let bd = &ops.bmat * &ops.dmat;
                for i in 0..nk {
                    for j in 0..nk {
                        assert_relative_eq!(
                            bd[(i, j)],
                            ops.stiffness_gram[(i, j)],
                            epsilon = 1e-12,
                            max_relative = 1e-11
                        );
                    }
                }
                // Pi^0 = Pi^nabla for k = 1, 2
                if k <= 2 {
                    for i in 0..nk {
                        for j in 0..ops.n_dofs {
                            assert_relative_eq!(
                                ops.pi_zero_coeff[(i, j)],
                                ops.pi_nabla_coeff[(i, j)],
                                epsilon = 1e-12,
                                max_relative = 1e-12
                            );
                        }
                    }
                }
                // unisolvency probe: D has full column rank
                let svd = ops.dmat.clone().svd(false, false);
                let smin = svd.singular_values.min();
                let smax = svd.singular_values.max();
                assert!(smin > 1e-10 * smax, "rank-deficient D at k={k}");
            }
        }
    }

    #[test]
    fn closure_conditions_hold() {
        for mesh in sample_cells() {
            let cell = mesh.cell(0);
            for k in 1..=3usize {
                let ops = local_ops(&cell, k).unwrap();
                let dofs = DVector::from_fn(ops.n_dofs, |i, _| ((i * 7 + 3) % 5) as f64 - 2.0);
                let coeffs = &ops.pi_nabla_coeff * &dofs;
                let basis = MonomialBasis2D::for_cell(&cell, k);
                if k == 1 {
                    // boundary average of (proj - v) vanishes
                    let mut proj_avg = 0.0;
                    let mut v_avg = 0.0;
                    let mut per = 0.0;
                    for (ei, be) in cell.boundary_edges().enumerate() {
                        per += be.length;
                        v_avg += be.length * dofs[ei];
                        let traces = edge_trace_coeffs(&basis, be.p0, be.p1);
                        for (a, tr) in traces.iter().enumerate() {
                            let m0: f64 =
                                tr.iter().enumerate().map(|(m, &c)| c * t_moment(m)).sum();
                            proj_avg += be.length * coeffs[a] * m0;
                        }
                    }
                    assert_relative_eq!(proj_avg / per, v_avg / per, epsilon = 1e-13);
                } else {
                    // cell average of (proj - v) vanishes
                    let proj_avg: f64 = (0..coeffs.len())
                        .map(|a| coeffs[a] * ops.monomial_integrals[a])
                        .sum::<f64>()
                        / cell.area();
                    let int_base = cell.n_edges() * k;
                    assert_relative_eq!(proj_avg, dofs[int_base], epsilon = 1e-12);
                }
                // enhancement: top-degree moments of Pi^0 v match Pi^nabla v
                let z = &ops.pi_zero_coeff * &dofs;
                let hz = &ops.mass_gram * &z;
                let hp = &ops.mass_gram * &coeffs;
                for b in dim_poly(k as i64 - 2, 2)..dim_poly(k as i64, 2) {
                    assert_relative_eq!(hz[b], hp[b], epsilon = 1e-12, max_relative = 1e-11);
                }
            }
        }
    }
}
