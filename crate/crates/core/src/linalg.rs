//! Small dense kernels: cyclic Jacobi for symmetric eigenvalues and Gaussian
//! elimination with partial pivoting. Sized for d ≤ 64.

use thiserror::Error;

use crate::{Matrix, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: entry ({row}, {col}) differs from its transpose by {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },
    #[error("Jacobi iteration did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("matrix is singular to working precision (pivot {pivot:e} in column {col})")]
    Singular { col: usize, pivot: f64 },
    #[error("dimension mismatch: matrix has {rows} rows, right-hand side has {rhs}")]
    DimensionMismatch { rows: usize, rhs: usize },
}

const SYMMETRY_TOL: f64 = 1e-10;

/// All eigenvalues of a symmetric matrix, ascending, via cyclic Jacobi sweeps.
pub fn symmetric_eigenvalues(m: &Matrix) -> Result<Vec<f64>, LinalgError> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(LinalgError::NotSquare { rows: n, cols: m.ncols() });
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = (m[(i, j)] - m[(j, i)]).abs();
            let scale = m[(i, j)].abs().max(m[(j, i)].abs()).max(1.0);
            if diff > SYMMETRY_TOL * scale {
                return Err(LinalgError::NotSymmetric { row: i, col: j, diff });
            }
        }
    }
    if n == 0 {
        return Ok(Vec::new());
    }

    // work on the symmetrized copy
    let mut a = (m + m.transpose()) * 0.5;
    let frob = a.norm();
    let max_sweeps = 100 * n * n;
    let mut converged = false;
    for _ in 0..max_sweeps {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off.sqrt() <= f64::EPSILON * frob || off == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                // Rutishauser's stable rotation angle.
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
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
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
            }
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence { sweeps: max_sweeps });
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(|x, y| x.total_cmp(y));
    Ok(eig)
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn symmetric_extreme_eigenvalues(m: &Matrix) -> Result<(f64, f64), LinalgError> {
    let eig = symmetric_eigenvalues(m)?;
    match (eig.first(), eig.last()) {
        (Some(&lo), Some(&hi)) => Ok((lo, hi)),
        _ => Err(LinalgError::NotSquare { rows: 0, cols: 0 }),
    }
}

/// Solves `m x = b` by Gaussian elimination with partial pivoting.
pub fn solve(m: &Matrix, b: &Vector) -> Result<Vector, LinalgError> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(LinalgError::NotSquare { rows: n, cols: m.ncols() });
    }
    if b.len() != n {
        return Err(LinalgError::DimensionMismatch { rows: n, rhs: b.len() });
    }
    let mut a = m.clone();
    let mut x = b.clone();
    let scale = a.amax().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|r| (r, a[(r, col)]))
            .max_by(|(_, u), (_, v)| u.abs().total_cmp(&v.abs()))
            .expect("non-empty pivot range");
        if pivot.abs() <= f64::EPSILON * scale {
            return Err(LinalgError::Singular { col, pivot });
        }
        if pivot_row != col {
            a.swap_rows(pivot_row, col);
            x.swap_rows(pivot_row, col);
        }
        for r in (col + 1)..n {
            let factor = a[(r, col)] / a[(col, col)];
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                a[(r, c)] -= factor * a[(col, c)];
            }
            x[r] -= factor * x[col];
        }
    }
    for row in (0..n).rev() {
        let tail: f64 = ((row + 1)..n).map(|c| a[(row, c)] * x[c]).sum();
        x[row] = (x[row] - tail) / a[(row, row)];
    }
    Ok(x)
}
