//! One-sided (Hestenes) Jacobi SVD for small dense real matrices.

use alloc::vec::Vec;

use thiserror::Error;

use crate::matrix::RealMatrix;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SvdError {
    #[error("Jacobi SVD did not converge within {0} sweeps")]
    NoConvergence(usize),
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("tolerance must be positive")]
    BadTolerance,
}

/// `W = U · diag(σ) · Vᵀ` with `r = min(rows, cols)` components.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    /// `rows x r`, orthonormal columns.
    pub u: RealMatrix,
    /// Non-increasing, non-negative.
    pub singular_values: Vec<f64>,
    /// `cols x r`, orthonormal columns.
    pub v: RealMatrix,
}

impl SvdFactors {
    pub fn rank_capacity(&self) -> usize {
        self.singular_values.len()
    }

    /// Top-`k` factors `(U_k, Σ_k V_kᵀ)`, of shapes `rows x k` and `k x cols`.
    pub fn truncate(&self, k: usize) -> (RealMatrix, RealMatrix) {
        let k = k.min(self.rank_capacity());
        let (m, n) = (self.u.rows(), self.v.rows());
        let mut a = RealMatrix::zeros(m, k);
        let mut b = RealMatrix::zeros(k, n);
        for j in 0..k {
            for r in 0..m {
                a.set(r, j, self.u.get(r, j));
            }
            let s = self.singular_values[j];
            for c in 0..n {
                b.set(j, c, s * self.v.get(c, j));
            }
        }
        (a, b)
    }

    pub fn reconstruct(&self) -> RealMatrix {
        let (a, b) = self.truncate(self.rank_capacity());
        a.matmul(&b).expect("factor shapes agree")
    }
}

/// Runs one-sided Jacobi sweeps until every pair of columns is orthogonal to
/// relative tolerance `tol`, i.e. `|g_ij| <= tol · sqrt(g_ii · g_jj)` for the
/// Gram matrix `g` of the working columns.
pub fn jacobi_svd(w: &RealMatrix, tol: f64) -> Result<SvdFactors, SvdError> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(SvdError::BadTolerance);
    }
    if w.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(SvdError::NonFinite);
    }
    if w.rows() < w.cols() {
        let t = jacobi_svd(&w.transpose(), tol)?;
        return Ok(SvdFactors {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        });
    }

    let (m, n) = (w.rows(), w.cols());
    // Columns stored contiguously for the rotations.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|c| (0..m).map(|r| w.get(r, c)).collect()).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|c| (0..n).map(|r| if r == c { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for i in 0..n - 1 {
            for j in i + 1..n {
                let alpha = dot(&cols[i], &cols[i]);
                let beta = dot(&cols[j], &cols[j]);
                let gamma = dot(&cols[i], &cols[j]);
                if gamma == 0.0 || libm::fabs(gamma) <= tol * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = libm::copysign(1.0, zeta) / (libm::fabs(zeta) + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                rotate(&mut cols, i, j, c, s);
                rotate(&mut vcols, i, j, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(SvdError::NoConvergence(MAX_SWEEPS));
    }

    let norms: Vec<f64> = cols.iter().map(|c| libm::sqrt(dot(c, c))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    let sigma_max = norms.iter().copied().fold(0.0, f64::max);
    let cutoff = sigma_max * 1e-14 * m as f64;
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut singular_values = Vec::with_capacity(n);
    let mut v = RealMatrix::zeros(n, n);
    let mut deficient = Vec::new();
    for (k, &idx) in order.iter().enumerate() {
        let s = norms[idx];
        singular_values.push(s);
        for r in 0..n {
            v.set(r, k, vcols[idx][r]);
        }
        if s > cutoff && s > 0.0 {
            u_cols.push(cols[idx].iter().map(|x| x / s).collect());
        } else {
            u_cols.push(Vec::new());
            deficient.push(k);
        }
    }
    complete_basis(&mut u_cols, &deficient, m);

    let mut u = RealMatrix::zeros(m, n);
    for (k, col) in u_cols.iter().enumerate() {
        for r in 0..m {
            u.set(r, k, col[r]);
        }
    }
    Ok(SvdFactors {
        u,
        singular_values,
        v,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rotate(cols: &mut [Vec<f64>], i: usize, j: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(j);
    let (ci, cj) = (&mut left[i], &mut right[0]);
    for (x, y) in ci.iter_mut().zip(cj.iter_mut()) {
        let (xi, yj) = (*x, *y);
        *x = c * xi - s * yj;
        *y = s * xi + c * yj;
    }
}

/// Fills the `deficient` slots with unit vectors orthogonal to every other column.
fn complete_basis(cols: &mut [Vec<f64>], deficient: &[usize], m: usize) {
    let mut candidate = 0;
    for &slot in deficient {
        loop {
            debug_assert!(candidate < m, "ran out of basis candidates");
            let mut e: Vec<f64> = (0..m).map(|r| if r == candidate { 1.0 } else { 0.0 }).collect();
            candidate += 1;
            // Two Gram–Schmidt passes for numerical orthogonality.
            for _ in 0..2 {
                for (k, other) in cols.iter().enumerate() {
                    if k == slot || other.is_empty() {
                        continue;
                    }
                    let proj = dot(&e, other);
                    for (x, o) in e.iter_mut().zip(other) {
                        *x -= proj * o;
                    }
                }
            }
            let norm = libm::sqrt(dot(&e, &e));
            if norm > 1e-6 {
                cols[slot] = e.iter().map(|x| x / norm).collect();
                break;
            }
        }
    }
}
