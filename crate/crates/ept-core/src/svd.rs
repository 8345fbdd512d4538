//! Singular value decomposition via one-sided Jacobi rotations.
//!
//! The one-sided scheme orthogonalizes the columns of the working matrix by
//! right-multiplying plane rotations; at convergence the column norms are the
//! singular values, the normalized columns form `U`, and the accumulated
//! rotations form `V`. Pairs are visited in a fixed order and signs follow a
//! fixed convention, so the factorization is fully deterministic.

use crate::error::{EptError, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 100;

/// Thin SVD `A = U diag(s) Vᵀ` with `k = min(rows, cols)` triplets sorted by
/// descending singular value.
#[derive(Debug, Clone)]
pub struct Svd<F> {
    /// Left singular vectors, `rows × k`, orthonormal columns.
    pub u: Matrix<F>,
    /// Singular values, descending, non-negative.
    pub s: Vec<F>,
    /// Right singular vectors transposed, `k × cols`, orthonormal rows.
    pub vt: Matrix<F>,
}

impl<F: Scalar> Svd<F> {
    /// `U diag(s) Vᵀ`, for testing round trips.
    pub fn reconstruct(&self) -> Matrix<F> {
        let k = self.s.len();
        let mut us = self.u.clone();
        for j in 0..k {
            for i in 0..us.rows() {
                let v = us.get(i, j) * self.s[j];
                us.set(i, j, v);
            }
        }
        us.matmul(&self.vt).expect("svd factor shapes agree")
    }
}

/// Full thin SVD of `a`.
pub fn svd<F: Scalar>(a: &Matrix<F>) -> Svd<F> {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return Svd {
            u: Matrix::zeros(rows, 0),
            s: Vec::new(),
            vt: Matrix::zeros(0, cols),
        };
    }
    if rows < cols {
        // One-sided Jacobi wants at least as many rows as columns; transpose,
        // factor, and swap the roles of U and V.
        let t = svd(&a.transpose());
        return Svd {
            u: t.vt.transpose(),
            s: t.s,
            vt: t.u.transpose(),
        };
    }

    let n = cols;
    let mut work = a.clone();
    let mut v = Matrix::<F>::identity(n);
    let tol = F::epsilon() * F::cast(8.0);

    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (app, aqq, apq) = column_moments(&work, p, q);
                if apq == F::zero() || app == F::zero() || aqq == F::zero() {
                    continue;
                }
                if apq * apq <= tol * tol * app * aqq {
                    continue;
                }
                rotated = true;
                // Rotation angle that zeroes the (p,q) inner product.
                let zeta = (aqq - app) / (F::cast(2.0) * apq);
                let t = {
                    let denom = zeta.abs() + (F::one() + zeta * zeta).sqrt();
                    let unsigned = F::one() / denom;
                    if zeta < F::zero() {
                        -unsigned
                    } else {
                        unsigned
                    }
                };
                let c = F::one() / (F::one() + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut work, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    // Column norms are the singular values; normalized columns are U.
    let mut order: Vec<usize> = (0..n).collect();
    let mut sigmas = vec![F::zero(); n];
    for (j, sigma) in sigmas.iter_mut().enumerate() {
        let mut acc = F::zero();
        for i in 0..rows {
            let x = work.get(i, j);
            acc = acc + x * x;
        }
        *sigma = acc.sqrt();
    }
    // Stable descending sort; index breaks ties deterministically.
    order.sort_by(|&i, &j| {
        sigmas[j]
            .partial_cmp(&sigmas[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });

    let mut u = Matrix::zeros(rows, n);
    let mut vt = Matrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (out_j, &src_j) in order.iter().enumerate() {
        let sigma = sigmas[src_j];
        s.push(sigma);
        if sigma > F::zero() {
            for i in 0..rows {
                u.set(i, out_j, work.get(i, src_j) / sigma);
            }
        }
        for i in 0..n {
            vt.set(out_j, i, v.get(i, src_j));
        }
        fix_sign(&mut u, &mut vt, out_j);
    }

    Svd { u, s, vt }
}

/// Rank-`r` truncation packaged as two factors: `a = U_r diag(s_r)` of shape
/// `rows × r` and `b = V_rᵀ` of shape `r × cols`, so `a·b` is the best
/// rank-`r` approximation in Frobenius norm. `r = 0` yields empty factors.
pub fn truncated_svd<F: Scalar>(m: &Matrix<F>, r: usize) -> Result<(Matrix<F>, Matrix<F>)> {
    let (rows, cols) = m.shape();
    let max = rows.min(cols);
    if r > max {
        return Err(EptError::RankOutOfRange { r, rows, cols, max });
    }
    if r == 0 {
        return Ok((Matrix::zeros(rows, 0), Matrix::zeros(0, cols)));
    }
    let f = svd(m);
    let mut a = Matrix::zeros(rows, r);
    for j in 0..r {
        for i in 0..rows {
            a.set(i, j, f.u.get(i, j) * f.s[j]);
        }
    }
    let b = f.vt.slice_rows(0, r);
    Ok((a, b))
}

fn column_moments<F: Scalar>(m: &Matrix<F>, p: usize, q: usize) -> (F, F, F) {
    let mut app = F::zero();
    let mut aqq = F::zero();
    let mut apq = F::zero();
    for i in 0..m.rows() {
        let xp = m.get(i, p);
        let xq = m.get(i, q);
        app = app + xp * xp;
        aqq = aqq + xq * xq;
        apq = apq + xp * xq;
    }
    (app, aqq, apq)
}

fn rotate_columns<F: Scalar>(m: &mut Matrix<F>, p: usize, q: usize, c: F, s: F) {
    for i in 0..m.rows() {
        let xp = m.get(i, p);
        let xq = m.get(i, q);
        m.set(i, p, c * xp - s * xq);
        m.set(i, q, s * xp + c * xq);
    }
}

/// Flip triplet `j` so the largest-magnitude entry of the left singular
/// vector is positive (first such entry on ties).
fn fix_sign<F: Scalar>(u: &mut Matrix<F>, vt: &mut Matrix<F>, j: usize) {
    let mut best = F::zero();
    let mut best_val = F::zero();
    for i in 0..u.rows() {
        let x = u.get(i, j);
        if x.abs() > best {
            best = x.abs();
            best_val = x;
        }
    }
    if best_val < F::zero() {
        for i in 0..u.rows() {
            let x = u.get(i, j);
            u.set(i, j, -x);
        }
        for i in 0..vt.cols() {
            let x = vt.get(j, i);
            vt.set(j, i, -x);
        }
    }
}
