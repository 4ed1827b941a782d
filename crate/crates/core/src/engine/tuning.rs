use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::objective::{check_penalty, penalty_trace, WhittleProblem};
use super::Coefficients;
use crate::basis::{BasisMatrix, PenaltyMatrix};
use crate::error::{Error, Result};
use crate::linalg::solve_spd_matrix;
use crate::spectral::PeriodogramSet;

/// Below this value `tr(Theta' R Theta)` is treated as zero.
const TRACE_FLOOR: f64 = 1e-14;

/// What happened in a smoothing-parameter refresh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaStatus {
    Updated,
    /// The new value fell outside the bounds and was clamped.
    Clamped,
    /// The penalty trace vanished; lambda set to the upper bound.
    CappedZeroTrace,
    /// `df <= a - 1`; lambda left unchanged.
    KeptLowDf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaUpdate {
    pub lambda: f64,
    pub df: f64,
    pub status: LambdaStatus,
}

/// `AIC = 2 deviance + 2 df`.
pub fn aic(deviance: f64, df: f64) -> f64 {
    2.0 * deviance + 2.0 * df
}

/// `sum_k tr((H_k + 2 lambda R)^{-1} H_k)` with `H_k` the unpenalized
/// Hessian of block `theta_k` at the current coefficients.
pub fn degrees_of_freedom(
    coeff: &Coefficients,
    basis: &BasisMatrix,
    periodogram: &PeriodogramSet,
    penalty: &PenaltyMatrix,
    lambda: f64,
) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
    }
    let problem = WhittleProblem::new(basis, periodogram)?;
    problem.check(coeff)?;
    check_penalty(penalty, coeff)?;
    df_internal(&problem, coeff, penalty, lambda)
}

pub(crate) fn df_internal(
    problem: &WhittleProblem,
    coeff: &Coefficients,
    penalty: &PenaltyMatrix,
    lambda: f64,
) -> Result<f64> {
    let (r, factor) = (penalty.values(), Some(penalty.factor()));
    let l = problem.n_basis();
    if lambda == 0.0 {
        return Ok((coeff.rank() * l) as f64);
    }
    let weights = problem.weights(&problem.log_sdf(coeff));
    let mut df = 0.0;
    for k in 0..coeff.rank() {
        let a_col: Vec<f64> = coeff.a.column(k).iter().copied().collect();
        let (_, h) = problem.theta_gradient_hessian_raw(&a_col, &weights);
        df += block_df(&h, r, factor, lambda)?;
    }
    Ok(df)
}

/// `tr((H + 2 lambda R)^{-1} H)`. With `H = C C'` and `G = C^{-1} F'` this is
/// `tr((I + 2 lambda G G')^{-1})`, whose matrix has eigenvalues `>= 1`, so
/// large `lambda` costs no accuracy.
fn block_df(h: &DMatrix<f64>, r: &DMatrix<f64>, factor: Option<&DMatrix<f64>>, lambda: f64) -> Result<f64> {
    if let (Some(f), Some(chol)) = (factor, h.clone().cholesky()) {
        let l = h.nrows();
        let g = chol
            .l()
            .solve_lower_triangular(&f.transpose())
            .ok_or_else(|| Error::numerical("singular Cholesky factor"))?;
        // With fewer factor rows than L, use the smaller Gram matrix: the
        // remaining L - rows eigenvalues are exactly 1.
        let rows = f.nrows();
        let (gram, exact) = if rows < l {
            (g.transpose() * &g, (l - rows) as f64)
        } else {
            (&g * g.transpose(), 0.0)
        };
        let n = gram.nrows();
        let m = DMatrix::identity(n, n) + gram * (2.0 * lambda);
        return Ok(exact + solve_spd_matrix(&m, &DMatrix::identity(n, n))?.trace());
    }
    let penalized = h + r * (2.0 * lambda);
    Ok(solve_spd_matrix(&penalized, h)?.trace())
}

/// One refresh `lambda = (df(lambda_old) - (a - 1)) / tr(Theta' R Theta)`,
/// clamped to `bounds`.
pub fn update_lambda(
    coeff: &Coefficients,
    basis: &BasisMatrix,
    periodogram: &PeriodogramSet,
    penalty: &PenaltyMatrix,
    lambda_old: f64,
    order: usize,
    bounds: (f64, f64),
) -> Result<LambdaUpdate> {
    let problem = WhittleProblem::new(basis, periodogram)?;
    problem.check(coeff)?;
    check_penalty(penalty, coeff)?;
    lambda_step(&problem, coeff, penalty, lambda_old, order, bounds)
}

pub(crate) fn lambda_step(
    problem: &WhittleProblem,
    coeff: &Coefficients,
    penalty: &PenaltyMatrix,
    lambda_old: f64,
    order: usize,
    bounds: (f64, f64),
) -> Result<LambdaUpdate> {
    let df = df_internal(problem, coeff, penalty, lambda_old)?;
    let trace = penalty_trace(&coeff.theta, penalty.values());
    Ok(lambda_from_parts(df, trace, lambda_old, order, bounds))
}

pub(crate) fn lambda_from_parts(df: f64, trace: f64, lambda_old: f64, order: usize, bounds: (f64, f64)) -> LambdaUpdate {
    let offset = order as f64 - 1.0;
    if df <= offset {
        return LambdaUpdate {
            lambda: lambda_old,
            df,
            status: LambdaStatus::KeptLowDf,
        };
    }
    if trace <= TRACE_FLOOR {
        return LambdaUpdate {
            lambda: bounds.1,
            df,
            status: LambdaStatus::CappedZeroTrace,
        };
    }
    let raw = (df - offset) / trace;
    let lambda = raw.clamp(bounds.0, bounds.1);
    LambdaUpdate {
        lambda,
        df,
        status: if lambda == raw {
            LambdaStatus::Updated
        } else {
            LambdaStatus::Clamped
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_of_equals_is_one() {
        let u = lambda_from_parts(7.5, 6.5, 3.0, 2, (1e-8, 1e8));
        assert_eq!(u.lambda, 1.0);
        assert_eq!(u.status, LambdaStatus::Updated);
    }

    #[test]
    fn doubling_trace_halves_lambda() {
        let a = lambda_from_parts(11.0, 4.0, 1.0, 2, (1e-8, 1e8)).lambda;
        let b = lambda_from_parts(11.0, 8.0, 1.0, 2, (1e-8, 1e8)).lambda;
        assert!((a / b - 2.0).abs() < 1e-15);
    }

    #[test]
    fn safeguards() {
        let low = lambda_from_parts(0.5, 1.0, 3.0, 2, (1e-8, 1e8));
        assert_eq!((low.lambda, low.status), (3.0, LambdaStatus::KeptLowDf));
        let zero = lambda_from_parts(5.0, 0.0, 3.0, 2, (1e-8, 1e8));
        assert_eq!((zero.lambda, zero.status), (1e8, LambdaStatus::CappedZeroTrace));
        let big = lambda_from_parts(5.0, 1e-12, 3.0, 2, (1e-8, 1e3));
        assert_eq!((big.lambda, big.status), (1e3, LambdaStatus::Clamped));
    }

    #[test]
    fn aic_is_monotone_in_df() {
        assert!(aic(10.0, 4.0) > aic(10.0, 3.0));
    }
}
