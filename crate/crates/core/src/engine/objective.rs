use nalgebra::{DMatrix, DVector};

use super::Coefficients;
use crate::basis::{BasisMatrix, PenaltyMatrix};
use crate::error::{Error, Result};
use crate::spectral::PeriodogramSet;

/// Basis values and floored periodogram ordinates of one estimation problem.
#[derive(Debug, Clone)]
pub struct WhittleProblem {
    pub(crate) b: DMatrix<f64>,
    pub(crate) ordinates: DMatrix<f64>,
}

impl WhittleProblem {
    pub fn new(basis: &BasisMatrix, periodogram: &PeriodogramSet) -> Result<Self> {
        if basis.n_freq() != periodogram.n_freq() {
            return Err(Error::Shape(format!(
                "basis has {} rows but the periodogram has {} frequencies",
                basis.n_freq(),
                periodogram.n_freq()
            )));
        }
        Ok(Self {
            b: basis.values().clone(),
            ordinates: periodogram.floored(),
        })
    }

    /// Builds a problem from raw matrices; ordinates must already be positive.
    pub fn from_parts(b: DMatrix<f64>, ordinates: DMatrix<f64>) -> Result<Self> {
        if b.nrows() != ordinates.nrows() {
            return Err(Error::Shape(format!(
                "basis has {} rows but ordinates have {}",
                b.nrows(),
                ordinates.nrows()
            )));
        }
        if ordinates.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::numerical("ordinates must be positive and finite"));
        }
        Ok(Self { b, ordinates })
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn ordinates(&self) -> &DMatrix<f64> {
        &self.ordinates
    }

    pub fn n_freq(&self) -> usize {
        self.b.nrows()
    }

    pub fn n_basis(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_series(&self) -> usize {
        self.ordinates.ncols()
    }

    pub(crate) fn check(&self, coeff: &Coefficients) -> Result<()> {
        if coeff.n_basis() != self.n_basis() || coeff.n_series() != self.n_series() {
            return Err(Error::Shape(format!(
                "coefficients are {}x{} / {}x{} for a problem with L = {}, m = {}",
                coeff.theta.nrows(),
                coeff.theta.ncols(),
                coeff.a.nrows(),
                coeff.a.ncols(),
                self.n_basis(),
                self.n_series()
            )));
        }
        Ok(())
    }

    pub(crate) fn log_sdf(&self, coeff: &Coefficients) -> DMatrix<f64> {
        &self.b * &coeff.theta * coeff.a.transpose()
    }

    /// Deviance of one series given its log-SDF column. May be infinite.
    pub(crate) fn series_deviance(&self, i: usize, u: &[f64]) -> f64 {
        self.ordinates
            .column(i)
            .iter()
            .zip(u)
            .map(|(&p, &uj)| uj + p * (-uj).exp())
            .sum()
    }

    /// Total deviance; infinite on overflow.
    pub(crate) fn deviance_unchecked(&self, u: &DMatrix<f64>) -> f64 {
        (0..self.n_series())
            .map(|i| self.series_deviance(i, u.column(i).as_slice()))
            .sum()
    }

    pub(crate) fn deviance_checked(&self, u: &DMatrix<f64>) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..self.n_series() {
            for j in 0..self.n_freq() {
                let uj = u[(j, i)];
                let term = uj + self.ordinates[(j, i)] * (-uj).exp();
                if !term.is_finite() {
                    return Err(Error::Evaluation { series: i, freq: j });
                }
                total += term;
            }
        }
        Ok(total)
    }

    /// Weights `I_ij exp(-u_ij)`.
    pub(crate) fn weights(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        self.ordinates.zip_map(u, |p, uj| p * (-uj).exp())
    }

    pub(crate) fn alpha_gradient_hessian(
        &self,
        i: usize,
        phi: &DMatrix<f64>,
        u: &[f64],
    ) -> (DVector<f64>, DMatrix<f64>) {
        let n_freq = self.n_freq();
        let k = phi.ncols();
        let mut grad = DVector::zeros(k);
        let mut hess = DMatrix::zeros(k, k);
        for j in 0..n_freq {
            let w = self.ordinates[(j, i)] * (-u[j]).exp();
            let row = phi.row(j);
            for a in 0..k {
                grad[a] += row[a] * (1.0 - w);
                for b in a..k {
                    hess[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        (grad, hess)
    }

    /// Unpenalized gradient and Hessian of the deviance in `theta_k`.
    pub(crate) fn theta_gradient_hessian_raw(
        &self,
        a_col: &[f64],
        weights: &DMatrix<f64>,
    ) -> (DVector<f64>, DMatrix<f64>) {
        let n_freq = self.n_freq();
        let mut resid = DVector::zeros(n_freq);
        let mut curv = DVector::zeros(n_freq);
        for (i, &alpha) in a_col.iter().enumerate() {
            if alpha == 0.0 {
                continue;
            }
            let a2 = alpha * alpha;
            for j in 0..n_freq {
                let w = weights[(j, i)];
                resid[j] += alpha * (1.0 - w);
                curv[j] += a2 * w;
            }
        }
        let grad = self.b.transpose() * resid;
        (grad, weighted_gram(&self.b, curv.as_slice()))
    }
}

/// `B' diag(c) B`, skipping the structural zeros of a banded basis.
pub(crate) fn weighted_gram(b: &DMatrix<f64>, c: &[f64]) -> DMatrix<f64> {
    let l = b.ncols();
    let mut out = DMatrix::zeros(l, l);
    let mut nz: Vec<(usize, f64)> = Vec::with_capacity(l);
    for (j, &cj) in c.iter().enumerate() {
        if cj == 0.0 {
            continue;
        }
        nz.clear();
        for col in 0..l {
            let v = b[(j, col)];
            if v != 0.0 {
                nz.push((col, v));
            }
        }
        for (x, &(p, vp)) in nz.iter().enumerate() {
            let s = cj * vp;
            for &(q, vq) in &nz[x..] {
                out[(p, q)] += s * vq;
            }
        }
    }
    for p in 0..l {
        for q in 0..p {
            out[(p, q)] = out[(q, p)];
        }
    }
    out
}

pub fn whittle_deviance(coeff: &Coefficients, basis: &BasisMatrix, periodogram: &PeriodogramSet) -> Result<f64> {
    let problem = WhittleProblem::new(basis, periodogram)?;
    problem.check(coeff)?;
    problem.deviance_checked(&problem.log_sdf(coeff))
}

/// `tr(Theta' R Theta)`.
pub(crate) fn penalty_trace(theta: &DMatrix<f64>, r: &DMatrix<f64>) -> f64 {
    (theta.transpose() * r * theta).trace()
}

pub fn penalized_objective(
    coeff: &Coefficients,
    basis: &BasisMatrix,
    periodogram: &PeriodogramSet,
    penalty: &PenaltyMatrix,
    lambda: f64,
) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
    }
    check_penalty(penalty, coeff)?;
    let dev = whittle_deviance(coeff, basis, periodogram)?;
    Ok(dev + lambda * penalty_trace(&coeff.theta, penalty.values()))
}

pub(crate) fn check_penalty(penalty: &PenaltyMatrix, coeff: &Coefficients) -> Result<()> {
    if penalty.dim() != coeff.n_basis() {
        return Err(Error::Shape(format!(
            "penalty is {}x{} but Theta has {} rows",
            penalty.dim(),
            penalty.dim(),
            coeff.n_basis()
        )));
    }
    Ok(())
}

/// Gradient and Hessian of the deviance with respect to `alpha_i`.
pub fn alpha_gradient_hessian(
    i: usize,
    coeff: &Coefficients,
    basis: &BasisMatrix,
    periodogram: &PeriodogramSet,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let problem = WhittleProblem::new(basis, periodogram)?;
    problem.check(coeff)?;
    if i >= problem.n_series() {
        return Err(Error::Size(format!("series index {i} out of range")));
    }
    let phi = &problem.b * &coeff.theta;
    let u = &phi * coeff.a.row(i).transpose();
    if let Some(j) = u.iter().position(|v| !(-v).exp().is_finite()) {
        return Err(Error::Evaluation { series: i, freq: j });
    }
    Ok(problem.alpha_gradient_hessian(i, &phi, u.as_slice()))
}

/// Gradient and Hessian of the penalized objective with respect to
/// `theta_k`; the penalty contributes `2 lambda R theta_k` and `2 lambda R`.
pub fn theta_gradient_hessian(
    k: usize,
    coeff: &Coefficients,
    basis: &BasisMatrix,
    periodogram: &PeriodogramSet,
    penalty: &PenaltyMatrix,
    lambda: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let problem = WhittleProblem::new(basis, periodogram)?;
    problem.check(coeff)?;
    check_penalty(penalty, coeff)?;
    if k >= coeff.rank() {
        return Err(Error::Size(format!("basis index {k} out of range")));
    }
    let u = problem.log_sdf(coeff);
    let weights = problem.weights(&u);
    if let Some(pos) = weights.iter().position(|v| !v.is_finite()) {
        let (j, i) = (pos % problem.n_freq(), pos / problem.n_freq());
        return Err(Error::Evaluation { series: i, freq: j });
    }
    let a_col: Vec<f64> = coeff.a.column(k).iter().copied().collect();
    let (mut grad, mut hess) = problem.theta_gradient_hessian_raw(&a_col, &weights);
    let r = penalty.values();
    grad += (r * coeff.theta.column(k)) * (2.0 * lambda);
    hess += r * (2.0 * lambda);
    Ok((grad, hess))
}
