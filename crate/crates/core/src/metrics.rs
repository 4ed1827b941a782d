//! Partition agreement and subspace distance.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, singular_values, sorted_svd, truncated_svd};

/// Relative tolerance for the full-column-rank check of angle inputs.
const RANK_TOL: f64 = 1e-10;

/// Hubert-Arabie adjusted Rand index from pair counts. Label values only
/// matter through equality. Two identical trivial partitions score 1. The
/// value is not clamped and can be negative.
pub fn adjusted_rand_index<A: Eq, B: Eq>(a: &[A], b: &[B]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "label vectors have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::Size("at least two labels are required".into()));
    }
    let (n11, n10, n01, n00) = pair_counts(a, b);
    Ok(ari_from_pairs(n11, n10, n01, n00))
}

/// `(both together, together only in a, together only in b, both apart)`.
/// Uses the contingency table, so it runs in `O(m + r c)`.
fn pair_counts<A: Eq, B: Eq>(a: &[A], b: &[B]) -> (u64, u64, u64, u64) {
    let ia = dense_ids(a);
    let ib = dense_ids(b);
    let ra = ia.iter().max().map_or(0, |v| v + 1);
    let rb = ib.iter().max().map_or(0, |v| v + 1);
    let mut table = vec![0u64; ra * rb];
    for (&x, &y) in ia.iter().zip(&ib) {
        table[x * rb + y] += 1;
    }
    let choose2 = |v: u64| v * v.saturating_sub(1) / 2;
    let mut row = vec![0u64; ra];
    let mut col = vec![0u64; rb];
    let mut n11 = 0;
    for x in 0..ra {
        for y in 0..rb {
            let c = table[x * rb + y];
            row[x] += c;
            col[y] += c;
            n11 += choose2(c);
        }
    }
    let same_a: u64 = row.iter().map(|&v| choose2(v)).sum();
    let same_b: u64 = col.iter().map(|&v| choose2(v)).sum();
    let total = choose2(a.len() as u64);
    let n10 = same_a - n11;
    let n01 = same_b - n11;
    let n00 = total - n11 - n10 - n01;
    (n11, n10, n01, n00)
}

fn dense_ids<T: Eq>(labels: &[T]) -> Vec<usize> {
    let mut seen: Vec<&T> = Vec::new();
    labels
        .iter()
        .map(|l| match seen.iter().position(|s| *s == l) {
            Some(i) => i,
            None => {
                seen.push(l);
                seen.len() - 1
            }
        })
        .collect()
}

/// `2 (n00 n11 - n01 n10) / ((n00 + n01)(n01 + n11) + (n00 + n10)(n10 + n11))`,
/// or 1 when the denominator vanishes.
pub fn ari_from_pairs(n11: u64, n10: u64, n01: u64, n00: u64) -> f64 {
    let (n11, n10, n01, n00) = (n11 as f64, n10 as f64, n01 as f64, n00 as f64);
    let den = (n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11);
    if den == 0.0 {
        return 1.0;
    }
    2.0 * (n00 * n11 - n01 * n10) / den
}

/// Largest principal angle, in degrees, between the column spaces of `u` and
/// `u_hat`. Both must have full column rank.
pub fn canonical_angle(u: &DMatrix<f64>, u_hat: &DMatrix<f64>) -> Result<f64> {
    if u.nrows() != u_hat.nrows() {
        return Err(Error::Shape(format!(
            "inputs have {} and {} rows",
            u.nrows(),
            u_hat.nrows()
        )));
    }
    for m in [u, u_hat] {
        if m.ncols() == 0 || m.ncols() > m.nrows() {
            return Err(Error::Shape(format!("{}x{} input cannot have full column rank", m.nrows(), m.ncols())));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("angle input contains non-finite entries"));
        }
        let rank = numerical_rank(m, RANK_TOL);
        if rank < m.ncols() {
            return Err(Error::Rank {
                rank,
                expected: m.ncols(),
            });
        }
    }
    let q = u.clone().qr().q();
    let q_hat = u_hat.clone().qr().q();
    let s = singular_values(&(q_hat.transpose() * &q))?;
    let rho = s.iter().copied().fold(f64::INFINITY, f64::min).clamp(0.0, 1.0);
    let angle = rho.acos();
    if angle > std::f64::consts::FRAC_PI_4 {
        return Ok(angle.to_degrees());
    }
    // acos loses half the digits near 1; the sine of the same angle is the
    // norm of the part of the smaller space outside the larger one.
    let (big, small) = if q.ncols() >= q_hat.ncols() { (&q, &q_hat) } else { (&q_hat, &q) };
    let resid = small - big * (big.transpose() * small);
    let sine = singular_values(&resid)?[0].clamp(0.0, 1.0);
    Ok(sine.asin().to_degrees())
}

/// Angle between the dominant `k`-dimensional left singular subspaces of two
/// matrices with the same number of rows.
pub fn subspace_angle(truth: &DMatrix<f64>, estimate: &DMatrix<f64>, k: usize) -> Result<f64> {
    let lead = |m: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        if k == 0 || k > m.nrows().min(m.ncols()) {
            return Err(Error::Size(format!(
                "subspace dimension {k} out of range for a {}x{} matrix",
                m.nrows(),
                m.ncols()
            )));
        }
        let svd = truncated_svd(m, k)?;
        let smax = svd.singular_values[0];
        let rank = svd.singular_values.iter().filter(|&&v| v > RANK_TOL * smax).count();
        if rank < k {
            return Err(Error::Rank { rank, expected: k });
        }
        Ok(svd.u)
    };
    canonical_angle(&lead(truth)?, &lead(estimate)?)
}

/// All principal angles in degrees, ascending.
pub fn principal_angles(u: &DMatrix<f64>, u_hat: &DMatrix<f64>) -> Result<Vec<f64>> {
    let q = u.clone().qr().q();
    let q_hat = u_hat.clone().qr().q();
    let svd = sorted_svd(&(q_hat.transpose() * q))?;
    Ok(svd
        .singular_values
        .iter()
        .map(|s| s.clamp(0.0, 1.0).acos().to_degrees())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ari_identical_and_relabelled() {
        let a = [1, 1, 2, 2, 3, 3];
        assert_eq!(adjusted_rand_index(&a, &a).unwrap(), 1.0);
        let b = [7, 7, 5, 5, 9, 9];
        assert_eq!(adjusted_rand_index(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn ari_hand_value() {
        // n11 = 2, n10 = 1, n01 = 4, n00 = 8
        let a = [1, 1, 2, 2, 3, 3];
        let b = [1, 1, 1, 2, 2, 2];
        let v = adjusted_rand_index(&a, &b).unwrap();
        let expected = 2.0 * (8.0 * 2.0 - 4.0 * 1.0) / ((8.0 + 4.0) * (4.0 + 2.0) + (8.0 + 1.0) * (1.0 + 2.0));
        assert_eq!(v, expected);
    }

    #[test]
    fn ari_errors() {
        assert!(adjusted_rand_index(&[1, 2], &[1]).is_err());
        assert!(adjusted_rand_index(&[1], &[1]).is_err());
    }

    #[test]
    fn angle_basics() {
        let u = DMatrix::from_row_slice(3, 1, &[1.0, 0.0, 0.0]);
        let v = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 0.0]);
        assert!((canonical_angle(&u, &v).unwrap() - 90.0).abs() < 1e-12);
        let w = DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 0.0]);
        assert!((canonical_angle(&u, &w).unwrap() - 45.0).abs() < 1e-10);
        let bad = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(canonical_angle(&bad, &bad), Err(Error::Rank { rank: 1, expected: 2 })));
    }

    #[test]
    fn subspace_angle_ignores_trailing_directions() {
        let truth = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        let est = DMatrix::from_row_slice(3, 2, &[3.0, 1.0, 0.0, 1e-3, 0.0, 0.0]);
        assert!(subspace_angle(&truth, &est, 1).unwrap() < 0.1);
        assert!(subspace_angle(&truth, &est, 2).is_err());
    }
}
