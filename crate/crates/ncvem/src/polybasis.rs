//! Scaled monomial bases on cells and edges, exact integration of
//! polynomials over simple (possibly nonconvex) polygons, and L²
//! projections onto polynomial spaces.
//!
//! The 2D basis attached to a cell `P` is `m_alpha(x) = ((x - x_P)/h_P)^alpha`
//! in graded lexicographic order `1, x, y, x^2, xy, y^2, ...`; the 1D basis
//! on an edge is `t^j` with `t = (arc length - midpoint)/h_S` in
//! `[-1/2, 1/2]`. Polynomial integrals over a cell never triangulate: the
//! divergence identity
//!
//! ```text
//! (2 + |alpha|) ∫_P m_alpha = ∮_{∂P} m_alpha (x - x_P) . n ds
//! ```
//!
//! reduces them to edge quadrature, which is exact on any simple polygon.

use crate::mesh::CellView;
use crate::quadrature::{self, gauss_legendre, polygon_quadrature, rule_for_degree};
use crate::{Point2, Vector2};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Coefficients in a [`MonomialBasis2D`] or [`MonomialBasis1D`].
pub type PolyCoeffs = DVector<f64>;

#[derive(Debug, Error)]
pub enum BasisError {
    #[error("monomial Gram matrix is ill conditioned (estimate {cond:.3e})")]
    IllConditionedGram { cond: f64 },
}

/// Dimension of the polynomial space of degree `l` in `nu` variables;
/// `l = -1` is the zero space.
pub fn dim_poly(l: i64, nu: u8) -> usize {
    if l < 0 {
        return 0;
    }
    let l = l as usize;
    match nu {
        1 => l + 1,
        2 => (l + 1) * (l + 2) / 2,
        _ => panic!("dim_poly supports nu in {{1, 2}}"),
    }
}

/// Multi-indices `(a1, a2)` with `|alpha| <= l` in graded lexicographic
/// order.
pub fn multi_indices(l: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(dim_poly(l as i64, 2));
    for d in 0..=l {
        for a2 in 0..=d {
            out.push((d - a2, a2));
        }
    }
    out
}

/// Position of a multi-index in the graded lexicographic ordering.
pub fn index_of(alpha: (usize, usize)) -> usize {
    let d = alpha.0 + alpha.1;
    d * (d + 1) / 2 + alpha.1
}

/// Scaled monomials of degree up to `degree` centered at `center` with
/// length scale `scale`.
#[derive(Debug, Clone, Copy)]
pub struct MonomialBasis2D {
    pub center: Point2,
    pub scale: f64,
    pub degree: usize,
}

impl MonomialBasis2D {
    pub fn for_cell(cell: &CellView<'_>, degree: usize) -> Self {
        MonomialBasis2D {
            center: cell.centroid(),
            scale: cell.diameter(),
            degree,
        }
    }

    pub fn len(&self) -> usize {
        dim_poly(self.degree as i64, 2)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Evaluates every basis member at `p`.
    pub fn eval_all(&self, p: Point2) -> DVector<f64> {
        let xi = (p.x - self.center.x) / self.scale;
        let eta = (p.y - self.center.y) / self.scale;
        let mut out = DVector::zeros(self.len());
        let mut xi_pow = vec![1.0; self.degree + 1];
        let mut eta_pow = vec![1.0; self.degree + 1];
        for i in 1..=self.degree {
            xi_pow[i] = xi_pow[i - 1] * xi;
            eta_pow[i] = eta_pow[i - 1] * eta;
        }
        for (k, (a1, a2)) in multi_indices(self.degree).into_iter().enumerate() {
            out[k] = xi_pow[a1] * eta_pow[a2];
        }
        out
    }

    /// Gradient of every basis member at `p` (rows follow the ordering).
    pub fn grad_all(&self, p: Point2) -> Vec<Vector2> {
        let lower = self.eval_all(p);
        multi_indices(self.degree)
            .into_iter()
            .map(|(a1, a2)| {
                let gx = if a1 > 0 {
                    a1 as f64 / self.scale * lower[index_of((a1 - 1, a2))]
                } else {
                    0.0
                };
                let gy = if a2 > 0 {
                    a2 as f64 / self.scale * lower[index_of((a1, a2 - 1))]
                } else {
                    0.0
                };
                Vector2::new(gx, gy)
            })
            .collect()
    }

    /// Evaluates the polynomial with the given coefficients at `p`.
    pub fn eval_poly(&self, coeffs: &DVector<f64>, p: Point2) -> f64 {
        self.eval_all(p).dot(coeffs)
    }

    /// Gradient of the polynomial with the given coefficients at `p`.
    pub fn eval_poly_grad(&self, coeffs: &DVector<f64>, p: Point2) -> Vector2 {
        let grads = self.grad_all(p);
        let mut g = Vector2::zeros();
        for (k, gi) in grads.iter().enumerate() {
            g += gi * coeffs[k];
        }
        g
    }
}

/// Scaled 1D monomials on an edge: member `j` is `t^j` with
/// `t in [-1/2, 1/2]`.
#[derive(Debug, Clone, Copy)]
pub struct MonomialBasis1D {
    pub midpoint: Point2,
    pub length: f64,
    pub degree: usize,
}

impl MonomialBasis1D {
    pub fn len(&self) -> usize {
        self.degree + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// `∫_{-1/2}^{1/2} t^m dt`.
pub fn t_moment(m: usize) -> f64 {
    if m % 2 == 1 {
        0.0
    } else {
        0.5f64.powi(m as i32) / (m as f64 + 1.0)
    }
}

/// Exact integrals `∫_P m_alpha dP` for all `|alpha| <= l`, by the
/// boundary divergence identity with Gauss–Legendre edge quadrature;
/// valid on nonconvex cells.
pub fn integrate_monomials(cell: &CellView<'_>, l: usize) -> Vec<f64> {
    let basis = MonomialBasis2D::for_cell(cell, l);
    let mut acc = vec![0.0; basis.len()];
    let rule = rule_for_degree(l + 1);
    for be in cell.boundary_edges() {
        // (x - x_P) . n is constant along a straight edge
        let d = (be.p0 - basis.center).dot(&be.outward_normal);
        let mid = nalgebra::center(&be.p0, &be.p1);
        let half = (be.p1 - be.p0) * 0.5;
        for &(x, w) in rule {
            let p = mid + half * x;
            let vals = basis.eval_all(p);
            let scale = w * 0.5 * be.length * d;
            for (k, v) in vals.iter().enumerate() {
                acc[k] += scale * v;
            }
        }
    }
    for (k, (a1, a2)) in multi_indices(l).into_iter().enumerate() {
        acc[k] /= (2 + a1 + a2) as f64;
    }
    acc
}

/// Coefficients (in powers of `t`) of the trace of every `m_alpha` on the
/// segment `p0 -> p1`; exact polynomial composition, row `k` has length
/// `|alpha| + 1`.
pub fn edge_trace_coeffs(basis: &MonomialBasis2D, p0: Point2, p1: Point2) -> Vec<Vec<f64>> {
    let mid = nalgebra::center(&p0, &p1);
    // x(t) = mid + t (p1 - p0), so the scaled coordinates are linear in t.
    let ax = (mid.x - basis.center.x) / basis.scale;
    let bx = (p1.x - p0.x) / basis.scale;
    let ay = (mid.y - basis.center.y) / basis.scale;
    let by = (p1.y - p0.y) / basis.scale;

    // powers of the two linear polynomials by convolution
    let lin_pows = |a: f64, b: f64, m: usize| -> Vec<Vec<f64>> {
        let mut pows: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        pows.push(vec![1.0]);
        for k in 1..=m {
            let prev = &pows[k - 1];
            let mut next = vec![0.0; k + 1];
            for (i, &c) in prev.iter().enumerate() {
                next[i] += c * a;
                next[i + 1] += c * b;
            }
            pows.push(next);
        }
        pows
    };
    let xp = lin_pows(ax, bx, basis.degree);
    let yp = lin_pows(ay, by, basis.degree);

    multi_indices(basis.degree)
        .into_iter()
        .map(|(a1, a2)| {
            let mut out = vec![0.0; a1 + a2 + 1];
            for (i, &cx) in xp[a1].iter().enumerate() {
                for (j, &cy) in yp[a2].iter().enumerate() {
                    out[i + j] += cx * cy;
                }
            }
            out
        })
        .collect()
}

/// `∫_S p ds` for a polynomial in the edge basis (exact closed form).
pub fn edge_integrate(length: f64, coeffs: &PolyCoeffs) -> f64 {
    length
        * coeffs
            .iter()
            .enumerate()
            .map(|(m, &c)| c * t_moment(m))
            .sum::<f64>()
}

/// Integrates `f` over the edge `p0 -> p1` with a 10-point rule.
pub fn edge_integrate_fn(p0: Point2, p1: Point2, f: impl FnMut(Point2) -> f64) -> f64 {
    quadrature::integrate_segment(p0, p1, 10, f)
}

/// L² projection of `f` onto `P_l` of the edge `p0 -> p1`; the normal
/// equations use the exact 1D monomial Gram matrix.
pub fn l2_project_edge(p0: Point2, p1: Point2, f: impl Fn(Point2) -> f64, l: usize) -> PolyCoeffs {
    let len = (p1 - p0).norm();
    let n = l + 1;
    let mut gram = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            gram[(i, j)] = len * t_moment(i + j);
        }
    }
    let mid = nalgebra::center(&p0, &p1);
    let half = (p1 - p0) * 0.5;
    let mut rhs = DVector::zeros(n);
    for &(x, w) in gauss_legendre(10) {
        let t = 0.5 * x; // t in [-1/2, 1/2]
        let p = mid + half * x;
        let fv = f(p) * w * 0.5 * len;
        let mut tp = 1.0;
        for j in 0..n {
            rhs[j] += fv * tp;
            tp *= t;
        }
    }
    gram.lu().solve(&rhs).expect("1D monomial Gram is nonsingular")
}

/// Moments `∫_P f m_alpha dP` for all `|alpha| <= l`, with a polygon rule
/// exact to degree `2 max(l, extra_degree) + 2`.
pub fn element_moments(cell: &CellView<'_>, f: impl Fn(Point2) -> f64, l: usize) -> Vec<f64> {
    let basis = MonomialBasis2D::for_cell(cell, l);
    let pts = cell.points();
    let rule = polygon_quadrature(&pts, (l + 2).max(8));
    let mut acc = vec![0.0; basis.len()];
    for &(p, w) in &rule {
        let vals = basis.eval_all(p);
        let fv = f(p) * w;
        for (k, v) in vals.iter().enumerate() {
            acc[k] += fv * v;
        }
    }
    acc
}

/// Exact mass Gram `H[a][b] = ∫_P m_a m_b` of the degree-`l` cell basis
/// (a product of scaled monomials is again a scaled monomial).
pub fn mass_gram(cell: &CellView<'_>, l: usize) -> DMatrix<f64> {
    let ints = integrate_monomials(cell, 2 * l);
    let idx = multi_indices(l);
    let n = idx.len();
    DMatrix::from_fn(n, n, |a, b| {
        let (a1, a2) = idx[a];
        let (b1, b2) = idx[b];
        ints[index_of((a1 + b1, a2 + b2))]
    })
}

/// Exact stiffness Gram `G[a][b] = ∫_P grad m_a . grad m_b`.
pub fn stiffness_gram(cell: &CellView<'_>, l: usize) -> DMatrix<f64> {
    let ints = if l >= 1 {
        integrate_monomials(cell, 2 * l - 2)
    } else {
        vec![cell.area()]
    };
    let idx = multi_indices(l);
    let n = idx.len();
    let h2 = cell.diameter() * cell.diameter();
    DMatrix::from_fn(n, n, |a, b| {
        let (a1, a2) = idx[a];
        let (b1, b2) = idx[b];
        let mut v = 0.0;
        if a1 > 0 && b1 > 0 {
            v += (a1 * b1) as f64 * ints[index_of((a1 + b1 - 2, a2 + b2))];
        }
        if a2 > 0 && b2 > 0 {
            v += (a2 * b2) as f64 * ints[index_of((a1 + b1, a2 + b2 - 2))];
        }
        v / h2
    })
}

fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let svd = m.clone().svd(false, false);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// L² projection of `f` onto `P_l(P)`; the Gram matrix comes from the exact
/// monomial integrals.
pub fn l2_project_element(
    cell: &CellView<'_>,
    f: impl Fn(Point2) -> f64,
    l: usize,
) -> Result<PolyCoeffs, BasisError> {
    let gram = mass_gram(cell, l);
    let cond = condition_estimate(&gram);
    if !cond.is_finite() || cond > 1e12 {
        return Err(BasisError::IllConditionedGram { cond });
    }
    let rhs = DVector::from_vec(element_moments(cell, f, l));
    Ok(gram.lu().solve(&rhs).expect("checked conditioning above"))
}
