//! Thin singular value decomposition by one-sided Jacobi rotations.
//!
//! Patch groups are tall and skinny (`p^2 x k` with `k` around 10), which is the
//! case one-sided Jacobi handles best: it orthogonalizes the `k` columns directly
//! and yields singular values to high relative accuracy.

use nalgebra::DMatrix;

const MAX_SWEEPS: usize = 80;

/// `a = u * diag(s) * v^T` with `r = min(m, n)` components.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    /// `m x r`, orthonormal columns.
    pub u: DMatrix<f64>,
    /// Non-increasing, non-negative.
    pub s: Vec<f64>,
    /// `n x r`, orthonormal columns.
    pub v: DMatrix<f64>,
}

impl ThinSvd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, s) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

/// Thin SVD of an arbitrary real matrix.
pub fn thin_svd(a: &DMatrix<f64>) -> ThinSvd {
    if a.nrows() >= a.ncols() {
        tall_svd(a)
    } else {
        let t = tall_svd(&a.transpose());
        ThinSvd { u: t.v, s: t.s, v: t.u }
    }
}

fn tall_svd(a: &DMatrix<f64>) -> ThinSvd {
    let (m, n) = a.shape();
    debug_assert!(m >= n);
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let cp = w.column(p);
                    let cq = w.column(q);
                    (cp.norm_squared(), cq.norm_squared(), cp.dot(&cq))
                };
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let s_max = norms[order[0]];
    let cutoff = s_max * f64::EPSILON * m as f64;

    let mut u = DMatrix::<f64>::zeros(m, n);
    let mut vs = DMatrix::<f64>::zeros(n, n);
    let mut s = vec![0.0; n];
    let mut accepted = 0;
    for (dst, &src) in order.iter().enumerate() {
        vs.set_column(dst, &v.column(src));
        if s_max > 0.0 && norms[src] > cutoff {
            s[dst] = norms[src];
            u.set_column(dst, &(w.column(src) / norms[src]));
            accepted += 1;
        }
    }
    complete_basis(&mut u, accepted);
    ThinSvd { u, s, v: vs }
}

#[inline]
fn rotate(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let a = m[(i, p)];
        let b = m[(i, q)];
        m[(i, p)] = c * a - s * b;
        m[(i, q)] = s * a + c * b;
    }
}

/// Fills columns `filled..` of `u` with unit vectors orthogonal to the earlier ones,
/// drawn from the canonical basis by Gram-Schmidt.
pub(crate) fn complete_basis(u: &mut DMatrix<f64>, filled: usize) {
    let (m, r) = u.shape();
    let mut next = filled;
    let mut candidate = 0;
    while next < r && candidate < m {
        let mut e = nalgebra::DVector::<f64>::zeros(m);
        e[candidate] = 1.0;
        candidate += 1;
        for _ in 0..2 {
            for j in 0..next {
                let proj = u.column(j).dot(&e);
                e.axpy(-proj, &u.column(j), 1.0);
            }
        }
        let norm = e.norm();
        if norm > 1e-6 {
            u.set_column(next, &(e / norm));
            next += 1;
        }
    }
    debug_assert_eq!(next, r, "canonical basis must span the column space");
}
