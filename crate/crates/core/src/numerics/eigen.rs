//! Symmetric eigensolvers.
//!
//! [`sym_eigen`] is cyclic Jacobi and returns eigenvectors. [`sym_eigenvalues`]
//! is Householder tridiagonalisation followed by implicit QL and returns
//! eigenvalues only; it is the fast path for large Gram matrices where only
//! the spectrum is needed.

use rayon::prelude::*;

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Symmetry tolerance applied to solver inputs (relative to the largest entry).
pub const SYMMETRY_TOL: f64 = 1e-9;

const JACOBI_REL_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;
const QL_MAX_ITER: usize = 60;

/// Eigenvalues in descending order with matching unit eigenvectors stored as
/// the columns of `vectors`.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymEigen {
    /// Eigenvector `k` (column `k` of `vectors`).
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k)
    }
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Sweeps stop once the off-diagonal Frobenius norm falls below
/// `1e-12 · ‖m‖_F`, capped at 100 sweeps.
pub fn sym_eigen(m: &Matrix) -> Result<SymEigen> {
    m.check_symmetric(SYMMETRY_TOL)?;
    let n = m.rows();
    if n == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }

    // Work on the symmetrised copy so tiny input asymmetry cannot leak in.
    let mut a = Matrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    // Rows of `vt` are the eigenvectors; rotating rows keeps access contiguous.
    let mut vt = Matrix::identity(n);
    let tol = JACOBI_REL_TOL * a.frobenius_norm();

    let mut converged = false;
    let mut off = off_diagonal_norm(&a);
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        if off <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut vt, p, q);
            }
        }
        off = off_diagonal_norm(&a);
    }
    if !converged && off > tol {
        return Err(Error::NoConvergence {
            sweeps: JACOBI_MAX_SWEEPS,
            off_norm: off,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |row, k| vt[(order[k], row)]);
    Ok(SymEigen { values, vectors })
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += a[(i, j)] * a[(i, j)];
        }
    }
    (2.0 * s).sqrt()
}

/// Annihilates `a[p][q]` with one plane rotation and accumulates it into `vt`.
fn rotate(a: &mut Matrix, vt: &mut Matrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let n = a.rows();
    let app = a[(p, p)];
    let aqq = a[(q, q)];
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.is_infinite() {
        0.0
    } else {
        theta.signum() / (theta.abs() + theta.hypot(1.0))
    };
    let c = 1.0 / t.hypot(1.0);
    let s = t * c;

    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a[(p, k)];
        let akq = a[(q, k)];
        let new_p = c * akp - s * akq;
        let new_q = s * akp + c * akq;
        a[(p, k)] = new_p;
        a[(k, p)] = new_p;
        a[(q, k)] = new_q;
        a[(k, q)] = new_q;
    }
    a[(p, p)] = app - t * apq;
    a[(q, q)] = aqq + t * apq;
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;

    let data = vt.data_mut();
    let (lo, hi) = data.split_at_mut(q * n);
    let vp = &mut lo[p * n..(p + 1) * n];
    let vq = &mut hi[..n];
    for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
        let xp = *x;
        let xq = *y;
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Eigenvalues of a symmetric matrix, descending.
///
/// Householder reduction to tridiagonal form, then implicit-shift QL.
pub fn sym_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    m.check_symmetric(SYMMETRY_TOL)?;
    let n = m.rows();
    if n == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    let (mut d, mut e) = tridiagonalize(m);
    tridiagonal_ql(&mut d, &mut e)?;
    d.sort_by(|x, y| y.total_cmp(x));
    Ok(d)
}

/// Returns the diagonal and sub-diagonal (`e[i]` couples `i` and `i+1`,
/// `e[n-1] = 0`) of a similar tridiagonal matrix.
fn tridiagonalize(m: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.rows();
    let mut a = Matrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let mut e = vec![0.0; n];

    for k in 0..n.saturating_sub(2) {
        let len = n - k - 1;
        let x: Vec<f64> = (k + 1..n).map(|i| a[(i, k)]).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            e[k] = 0.0;
            continue;
        }
        let alpha = if x[0] > 0.0 { -norm } else { norm };
        let mut v = x;
        v[0] -= alpha;
        // |v[0]| >= norm > 0, so the reflector is well defined
        let vnorm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        v.iter_mut().for_each(|t| *t /= vnorm);

        // p = B v on the trailing block, B = a[k+1.., k+1..]
        let off = k + 1;
        let p: Vec<f64> = (0..len)
            .into_par_iter()
            .map(|i| {
                let row = &a.row(off + i)[off..];
                row.iter().zip(&v).map(|(b, vv)| b * vv).sum()
            })
            .collect();
        let kk: f64 = p.iter().zip(&v).map(|(x, y)| x * y).sum();
        let w: Vec<f64> = p.iter().zip(&v).map(|(pi, vi)| pi - kk * vi).collect();

        let cols = n;
        a.data_mut()[off * cols..]
            .par_chunks_mut(cols)
            .enumerate()
            .for_each(|(i, row)| {
                let vi = v[i];
                let wi = w[i];
                for j in 0..len {
                    row[off + j] -= 2.0 * (vi * w[j] + wi * v[j]);
                }
            });

        e[k] = alpha;
        for i in (k + 1)..n {
            a[(i, k)] = 0.0;
            a[(k, i)] = 0.0;
        }
    }
    if n >= 2 {
        e[n - 2] = a[(n - 1, n - 2)];
    }
    let d = (0..n).map(|i| a[(i, i)]).collect();
    (d, e)
}

/// Implicit QL with Wilkinson-style shifts on a symmetric tridiagonal matrix.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    // Couplings below eps·‖T‖ are dropped even where the local diagonal is
    // near zero; without this floor null-space clusters never deflate.
    let floor = f64::EPSILON
        * (0..n)
            .map(|i| d[i].abs() + e[i].abs() + if i > 0 { e[i - 1].abs() } else { 0.0 })
            .fold(0.0, f64::max);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd || e[m].abs() <= floor {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > QL_MAX_ITER {
                return Err(Error::NoConvergence {
                    sweeps: QL_MAX_ITER,
                    off_norm: e[l].abs(),
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}
