//! Symmetric sparse matrices in CSR form (full pattern stored) plus a
//! Jacobi-preconditioned conjugate gradient solver for the large source
//! problems that sit beyond the dense Cholesky size limit.

use nalgebra::{DMatrix, DVector};

/// Symmetric sparse matrix; both triangles are stored so matrix-vector
/// products stay branch-free.
#[derive(Debug, Clone)]
pub struct SymCsr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SymCsr {
    /// Builds from (row, col, value) triplets, summing duplicates in sorted
    /// order so the result is independent of insertion order.
    pub fn from_triplets(n: usize, triplets: &mut Vec<(usize, usize, f64)>) -> SymCsr {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut it = triplets.iter().peekable();
        for row in 0..n {
            while let Some(&&(r, c, v)) = it.peek() {
                if r != row {
                    break;
                }
                it.next();
                if indices.len() > indptr[row] && *indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr[row + 1] = indices.len();
        }
        SymCsr { n, indptr, indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        for row in 0..self.n {
            let mut acc = 0.0;
            for k in self.indptr[row]..self.indptr[row + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            y[row] = acc;
        }
    }

    pub fn diagonal(&self) -> DVector<f64> {
        let mut d = DVector::zeros(self.n);
        for row in 0..self.n {
            for k in self.indptr[row]..self.indptr[row + 1] {
                if self.indices[k] == row {
                    d[row] = self.values[k];
                }
            }
        }
        d
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for row in 0..self.n {
            for k in self.indptr[row]..self.indptr[row + 1] {
                a[(row, self.indices[k])] = self.values[k];
            }
        }
        a
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        let mut best = 0.0f64;
        for row in 0..self.n {
            let s: f64 = (self.indptr[row]..self.indptr[row + 1])
                .map(|k| self.values[k].abs())
                .sum();
            best = best.max(s);
        }
        best
    }

    /// Trace of the matrix.
    pub fn trace(&self) -> f64 {
        let mut t = 0.0;
        for row in 0..self.n {
            for k in self.indptr[row]..self.indptr[row + 1] {
                if self.indices[k] == row {
                    t += self.values[k];
                }
            }
        }
        t
    }

    /// Largest relative asymmetry `|a_ij - a_ji| / ||A||_inf`.
    pub fn symmetry_defect(&self) -> f64 {
        let norm = self.norm_inf().max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for row in 0..self.n {
            for k in self.indptr[row]..self.indptr[row + 1] {
                let col = self.indices[k];
                if col < row {
                    continue;
                }
                let mut other = 0.0;
                for k2 in self.indptr[col]..self.indptr[col + 1] {
                    if self.indices[k2] == row {
                        other = self.values[k2];
                    }
                }
                worst = worst.max((self.values[k] - other).abs());
            }
        }
        worst / norm
    }
}

/// Jacobi-preconditioned conjugate gradients; returns the solution and the
/// iteration count, or `None` if the relative residual target was not met.
pub fn pcg(
    a: &SymCsr,
    b: &DVector<f64>,
    tol_rel: f64,
    max_iter: usize,
) -> Option<(DVector<f64>, usize)> {
    let n = a.n;
    let bnorm = b.norm();
    if bnorm == 0.0 {
        return Some((DVector::zeros(n), 0));
    }
    let diag = a.diagonal();
    let precond = |r: &DVector<f64>| -> DVector<f64> {
        DVector::from_fn(n, |i, _| r[i] / diag[i].max(f64::MIN_POSITIVE))
    };
    let mut x = DVector::zeros(n);
    let mut r = b.clone();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let mut ap = DVector::zeros(n);
    for it in 0..max_iter {
        a.matvec_into(&p, &mut ap);
        let alpha = rz / p.dot(&ap);
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        if r.norm() <= tol_rel * bnorm {
            return Some((x, it + 1));
        }
        z = precond(&r);
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = &z + &p * beta;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn triplets_sum_duplicates_deterministically() {
        let mut t1 = vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 3.0), (0, 0, 0.5)];
        let mut t2 = vec![(0, 0, 0.5), (1, 1, 3.0), (1, 0, 2.0), (0, 1, 2.0), (0, 0, 1.0)];
        let a1 = SymCsr::from_triplets(2, &mut t1);
        let a2 = SymCsr::from_triplets(2, &mut t2);
        assert_eq!(a1.values, a2.values);
        assert_relative_eq!(a1.to_dense()[(0, 0)], 1.5);
        assert_eq!(a1.symmetry_defect(), 0.0);
    }

    #[test]
    fn pcg_solves_spd_system() {
        // 1D Laplacian
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let a = SymCsr::from_triplets(n, &mut t);
        let b = DVector::from_fn(n, |i, _| (i as f64 / n as f64).sin());
        let (x, _iters) = pcg(&a, &b, 1e-12, 10 * n).unwrap();
        let r = &a.matvec(&x) - &b;
        assert!(r.norm() <= 1e-11 * b.norm());
    }
}
