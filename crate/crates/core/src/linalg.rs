//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Solves `h x = g` for symmetric positive definite `h` by Cholesky. On
/// failure retries once with `1e-8 * mean(diag)` added to the diagonal.
pub fn solve_spd(h: &DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(chol) = h.clone().cholesky() {
        return Ok(chol.solve(g));
    }
    let n = h.nrows();
    let jitter = 1e-8 * (h.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
    let mut shifted = h.clone();
    for i in 0..n {
        shifted[(i, i)] += jitter;
    }
    match shifted.cholesky() {
        Some(chol) => Ok(chol.solve(g)),
        None => Err(Error::numerical(format!(
            "matrix is not positive definite (condition estimate {:.3e})",
            condition_estimate(h)
        ))),
    }
}

/// Inverse of a symmetric positive definite matrix, with the same jitter rule
/// as [`solve_spd`].
pub fn inverse_spd(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = h.nrows();
    solve_spd_matrix(h, &DMatrix::identity(n, n))
}

pub fn solve_spd_matrix(h: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(chol) = h.clone().cholesky() {
        return Ok(chol.solve(rhs));
    }
    let n = h.nrows();
    let jitter = 1e-8 * (h.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
    let mut shifted = h.clone();
    for i in 0..n {
        shifted[(i, i)] += jitter;
    }
    match shifted.cholesky() {
        Some(chol) => Ok(chol.solve(rhs)),
        None => Err(Error::numerical(format!(
            "matrix is not positive definite (condition estimate {:.3e})",
            condition_estimate(h)
        ))),
    }
}

/// Ratio of extreme absolute eigenvalues of a symmetric matrix.
pub fn condition_estimate(h: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(h.clone());
    let max = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Thin SVD with singular values sorted in decreasing order.
pub struct SortedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

pub fn sorted_svd(m: &DMatrix<f64>) -> Result<SortedSvd> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::Size(format!("cannot decompose a {rows}x{cols} matrix")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("SVD input contains non-finite entries"));
    }
    let svd = to_faer(m)
        .thin_svd()
        .map_err(|e| Error::numerical(format!("SVD did not converge: {e:?}")))?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let k = s.nrows();
    // faer already orders the values; the stable sort only pins down ties.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    Ok(SortedSvd {
        u: DMatrix::from_fn(rows, k, |r, c| u[(r, order[c])]),
        singular_values: DVector::from_iterator(k, order.iter().map(|&i| s[i])),
        v: DMatrix::from_fn(cols, k, |r, c| v[(r, order[c])]),
    })
}

/// Singular values in decreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    if m.is_empty() {
        return Ok(DVector::zeros(0));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("SVD input contains non-finite entries"));
    }
    let s = to_faer(m)
        .singular_values()
        .map_err(|e| Error::numerical(format!("SVD did not converge: {e:?}")))?;
    let mut s: Vec<f64> = s;
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(DVector::from_vec(s))
}

fn to_faer(m: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
}

/// Best rank-`k` factors `(U_k, s_k, V_k)` of `m`.
pub fn truncated_svd(m: &DMatrix<f64>, k: usize) -> Result<SortedSvd> {
    let full = sorted_svd(m)?;
    if k > full.singular_values.len() {
        return Err(Error::Size(format!(
            "rank {k} exceeds min dimension {}",
            full.singular_values.len()
        )));
    }
    Ok(SortedSvd {
        u: full.u.columns(0, k).into_owned(),
        singular_values: full.singular_values.rows(0, k).into_owned(),
        v: full.v.columns(0, k).into_owned(),
    })
}

/// Number of singular values above `rel_tol` times the largest.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let Ok(s) = singular_values(m) else {
        return 0;
    };
    let max = s.iter().cloned().fold(0.0_f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > rel_tol * max).count()
}

/// Least-squares coefficients `(B'B + ridge I)^{-1} B' Y`. A zero ridge falls
/// back to `1e-8` when `B'B` is numerically singular.
pub fn project_coefficients(b: &DMatrix<f64>, y: &DMatrix<f64>, ridge: f64) -> Result<DMatrix<f64>> {
    let mut gram = b.transpose() * b;
    let rhs = b.transpose() * y;
    let l = gram.nrows();
    if ridge > 0.0 {
        for i in 0..l {
            gram[(i, i)] += ridge;
        }
    }
    if let Some(chol) = gram.clone().cholesky() {
        let solved = chol.solve(&rhs);
        if solved.iter().all(|v| v.is_finite()) {
            return Ok(solved);
        }
    }
    for i in 0..l {
        gram[(i, i)] += 1e-8;
    }
    gram.cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| Error::numerical("basis Gram matrix is rank deficient beyond ridge repair"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_svd_is_decreasing_and_reconstructs() {
        let m = DMatrix::from_fn(7, 4, |i, j| ((i * 3 + j * 5) % 7) as f64 - 2.5);
        let svd = sorted_svd(&m).unwrap();
        for w in svd.singular_values.as_slice().windows(2) {
            assert!(w[0] >= w[1]);
        }
        let back = &svd.u * DMatrix::from_diagonal(&svd.singular_values) * svd.v.transpose();
        assert!((back - &m).norm() < 1e-12 * m.norm());
    }

    #[test]
    fn spd_solver_jitters_semidefinite_input() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 + 1e-17]);
        let g = DVector::from_vec(vec![1.0, 1.0]);
        let x = solve_spd(&h, &g).unwrap();
        assert!(x.iter().all(|v| v.is_finite()));
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(solve_spd(&bad, &g).is_err());
    }
}
