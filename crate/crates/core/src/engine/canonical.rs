use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Coefficients;
use crate::error::{Error, Result};
use crate::linalg::sorted_svd;

/// Singular values closer than this (relative to the largest) are tied.
const TIE_REL: f64 = 1e-10;
/// Entries at or below this magnitude are skipped by the sign rule.
const SIGN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalInfo {
    /// Singular values of `Theta A'`, decreasing.
    pub singular_values: Vec<f64>,
    /// Whether any pair of singular values was tied.
    pub tied: bool,
}

/// Restates `(Theta, A)` through the SVD of `Theta A'`: orthonormal `Theta`,
/// `A' A` diagonal and decreasing, first non-negligible entry of each `Theta`
/// column positive. The product is preserved.
pub fn canonicalize(coeff: &Coefficients) -> Result<Coefficients> {
    canonicalize_with_info(coeff).map(|(c, _)| c)
}

pub fn canonicalize_with_info(coeff: &Coefficients) -> Result<(Coefficients, CanonicalInfo)> {
    let k = coeff.rank();
    if k > coeff.n_basis() || k > coeff.n_series() {
        return Err(Error::Shape(format!(
            "rank {k} exceeds min(L, m) = {}",
            coeff.n_basis().min(coeff.n_series())
        )));
    }
    if coeff.theta.iter().chain(coeff.a.iter()).any(|v| !v.is_finite()) {
        return Err(Error::numerical("coefficients contain non-finite entries"));
    }
    let qr_t = coeff.theta.clone().qr();
    let qr_a = coeff.a.clone().qr();
    let (q_t, r_t) = (qr_t.q(), qr_t.r());
    let (q_a, r_a) = (qr_a.q(), qr_a.r());
    let svd = sorted_svd(&(&r_t * r_a.transpose()))?;
    let s = svd.singular_values;

    let mut theta = &q_t * &svd.u;
    let mut a = &q_a * &svd.v * DMatrix::from_diagonal(&s);
    for c in 0..k {
        let lead = theta.column(c).iter().copied().find(|v| v.abs() > SIGN_EPS);
        if lead.is_some_and(|v| v < 0.0) {
            theta.column_mut(c).neg_mut();
            a.column_mut(c).neg_mut();
        }
    }

    let s_max = s.iter().copied().fold(0.0_f64, f64::max);
    let mut order: Vec<usize> = (0..k).collect();
    let mut tied = false;
    let mut start = 0;
    while start < k {
        let mut end = start + 1;
        while end < k && (s[end - 1] - s[end]).abs() <= TIE_REL * s_max {
            end += 1;
        }
        if end - start > 1 {
            tied = true;
            order[start..end].sort_by(|&x, &y| {
                theta
                    .column(x)
                    .iter()
                    .zip(theta.column(y).iter())
                    .map(|(p, q)| p.total_cmp(q))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
        }
        start = end;
    }
    if tied {
        theta = theta.select_columns(&order);
        a = a.select_columns(&order);
    }
    let singular_values = order.iter().map(|&i| s[i]).collect();
    Ok((
        Coefficients { theta, a },
        CanonicalInfo {
            singular_values,
            tied,
        },
    ))
}
