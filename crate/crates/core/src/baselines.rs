//! The collective estimator and five non-collective comparison estimators,
//! behind one interface.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisMatrix, PenaltyMatrix};
use crate::engine::{self, Coefficients, FitConfig, FitResult};
use crate::error::{Error, Result};
use crate::linalg::{project_coefficients, solve_spd, truncated_svd};
use crate::spectral::PeriodogramSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "Ps")]
    Ps,
    #[serde(rename = "S.Ps")]
    SPs,
    #[serde(rename = "tSVD.Ps")]
    TsvdPs,
    #[serde(rename = "NSDE")]
    Nsde,
    #[serde(rename = "tSVD.NSDE")]
    TsvdNsde,
    #[serde(rename = "NCSDE")]
    Ncsde,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::Ps,
        EstimatorKind::SPs,
        EstimatorKind::TsvdPs,
        EstimatorKind::Nsde,
        EstimatorKind::TsvdNsde,
        EstimatorKind::Ncsde,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Ps => "Ps",
            EstimatorKind::SPs => "S.Ps",
            EstimatorKind::TsvdPs => "tSVD.Ps",
            EstimatorKind::Nsde => "NSDE",
            EstimatorKind::TsvdNsde => "tSVD.NSDE",
            EstimatorKind::Ncsde => "NCSDE",
        }
    }

    /// Whether the log estimate has rank at most `K`.
    pub fn is_low_rank(self) -> bool {
        matches!(self, EstimatorKind::TsvdPs | EstimatorKind::TsvdNsde | EstimatorKind::Ncsde)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown estimator `{s}`")))
    }
}

/// An `n_freq x m` matrix of positive spectral density estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfEstimate {
    pub values: DMatrix<f64>,
    pub kind: EstimatorKind,
    /// `(Theta, A)`-like factors for the low-rank kinds.
    pub coefficients: Option<Coefficients>,
    /// Series whose separate fit did not converge (NSDE kinds).
    pub flagged: Vec<usize>,
    /// The full fit for NCSDE.
    pub fit: Option<Box<FitResult>>,
}

impl SdfEstimate {
    pub fn log_values(&self) -> DMatrix<f64> {
        self.values.map(f64::ln)
    }

    fn plain(values: DMatrix<f64>, kind: EstimatorKind) -> Self {
        Self {
            values,
            kind,
            coefficients: None,
            flagged: Vec::new(),
            fit: None,
        }
    }
}

fn check_grid(periodogram: &PeriodogramSet, basis: &BasisMatrix) -> Result<()> {
    if basis.n_freq() != periodogram.n_freq() {
        return Err(Error::Shape(format!(
            "basis has {} rows but the periodogram has {} frequencies",
            basis.n_freq(),
            periodogram.n_freq()
        )));
    }
    Ok(())
}

/// The floored periodogram itself.
pub fn estimate_ps(periodogram: &PeriodogramSet) -> SdfEstimate {
    SdfEstimate::plain(periodogram.floored(), EstimatorKind::Ps)
}

/// Least-squares coefficients of the log periodograms in the basis.
pub fn log_periodogram_coefficients(periodogram: &PeriodogramSet, basis: &BasisMatrix) -> Result<DMatrix<f64>> {
    check_grid(periodogram, basis)?;
    project_coefficients(basis.values(), &periodogram.log_floored(), 0.0)
}

/// `exp(B (B'B)^{-1} B' log I)`.
pub fn estimate_sps(periodogram: &PeriodogramSet, basis: &BasisMatrix) -> Result<SdfEstimate> {
    let psi = log_periodogram_coefficients(periodogram, basis)?;
    Ok(SdfEstimate::plain((basis.values() * psi).map(f64::exp), EstimatorKind::SPs))
}

fn truncate(psi: &DMatrix<f64>, basis: &BasisMatrix, k: usize, kind: EstimatorKind) -> Result<SdfEstimate> {
    let (l, m) = psi.shape();
    if k == 0 || k > l.min(m) {
        return Err(Error::Config(format!("K = {k} must satisfy 1 <= K <= min(L, m) = {}", l.min(m))));
    }
    let svd = truncated_svd(psi, k)?;
    let coeff = Coefficients::new(svd.u, &svd.v * DMatrix::from_diagonal(&svd.singular_values))?;
    let values = (basis.values() * coeff.psi()).map(f64::exp);
    Ok(SdfEstimate {
        values,
        kind,
        coefficients: Some(coeff),
        flagged: Vec::new(),
        fit: None,
    })
}

/// Rank-`K` truncation of the least-squares log-periodogram coefficients.
pub fn estimate_tsvd_ps(periodogram: &PeriodogramSet, basis: &BasisMatrix, k: usize) -> Result<SdfEstimate> {
    let psi = log_periodogram_coefficients(periodogram, basis)?;
    truncate(&psi, basis, k, EstimatorKind::TsvdPs)
}

/// Settings of the separate per-series Whittle fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NsdeConfig {
    pub max_iters: usize,
    pub max_halvings: usize,
    /// Ridge added to each Newton Hessian.
    pub ridge: f64,
    /// Stop once the gradient norm falls below this.
    pub grad_tol: f64,
}

impl Default for NsdeConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            max_halvings: 30,
            ridge: 1e-8,
            grad_tol: 1e-8,
        }
    }
}

/// Result of one separate fit.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFit {
    pub psi: DVector<f64>,
    pub gradient_norm: f64,
    pub converged: bool,
}

/// Unpenalized Whittle fit of one series in the basis by Newton with step
/// halving, started from the least-squares projection of its log
/// periodogram.
pub fn fit_series(b: &DMatrix<f64>, ordinates: &[f64], start: DVector<f64>, cfg: &NsdeConfig) -> Result<SeriesFit> {
    if b.nrows() != ordinates.len() || b.ncols() != start.len() {
        return Err(Error::Shape("basis, ordinates and start disagree".into()));
    }
    let deviance = |u: &DVector<f64>| -> f64 { u.iter().zip(ordinates).map(|(&u, &p)| u + p * (-u).exp()).sum() };
    let mut psi = start;
    let mut u = b * &psi;
    let mut dev = deviance(&u);
    let mut gnorm = f64::INFINITY;
    for _ in 0..cfg.max_iters {
        let w: Vec<f64> = u.iter().zip(ordinates).map(|(&u, &p)| p * (-u).exp()).collect();
        let resid = DVector::from_iterator(w.len(), w.iter().map(|w| 1.0 - w));
        let grad = b.transpose() * resid;
        gnorm = grad.norm();
        if gnorm < cfg.grad_tol {
            return Ok(SeriesFit {
                psi,
                gradient_norm: gnorm,
                converged: true,
            });
        }
        let mut hess = crate::engine::weighted_gram(b, &w);
        for i in 0..hess.nrows() {
            hess[(i, i)] += cfg.ridge;
        }
        let step = solve_spd(&hess, &grad)?;
        let du = b * &step;
        let mut tau = 1.0;
        let mut accepted = false;
        for _ in 0..=cfg.max_halvings {
            let cand = &u - &du * tau;
            let cand_dev = deviance(&cand);
            if cand_dev < dev {
                psi -= &step * tau;
                u = cand;
                dev = cand_dev;
                accepted = true;
                break;
            }
            tau *= 0.5;
        }
        if !accepted {
            // No further decrease available at working precision.
            return Ok(SeriesFit {
                psi,
                gradient_norm: gnorm,
                converged: gnorm < cfg.grad_tol.max(1e-6),
            });
        }
    }
    Ok(SeriesFit {
        psi,
        gradient_norm: gnorm,
        converged: false,
    })
}

/// Separate unpenalized fits; returns the `L x m` coefficient matrix and the
/// indices of series that did not converge.
pub fn nsde_coefficients(
    periodogram: &PeriodogramSet,
    basis: &BasisMatrix,
    cfg: &NsdeConfig,
) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let start = log_periodogram_coefficients(periodogram, basis)?;
    let ordinates = periodogram.floored();
    let b = basis.values();
    let fits = (0..periodogram.n_series())
        .into_par_iter()
        .map(|i| fit_series(b, ordinates.column(i).as_slice(), start.column(i).into_owned(), cfg))
        .collect::<Result<Vec<_>>>()?;
    let psi = DMatrix::from_columns(&fits.iter().map(|f| f.psi.clone()).collect::<Vec<_>>());
    let flagged = fits
        .iter()
        .enumerate()
        .filter(|(_, f)| !f.converged)
        .map(|(i, _)| i)
        .collect();
    Ok((psi, flagged))
}

pub fn estimate_nsde(periodogram: &PeriodogramSet, basis: &BasisMatrix, cfg: &NsdeConfig) -> Result<SdfEstimate> {
    let (psi, flagged) = nsde_coefficients(periodogram, basis, cfg)?;
    Ok(SdfEstimate {
        flagged,
        ..SdfEstimate::plain((basis.values() * psi).map(f64::exp), EstimatorKind::Nsde)
    })
}

pub fn estimate_tsvd_nsde(
    periodogram: &PeriodogramSet,
    basis: &BasisMatrix,
    k: usize,
    cfg: &NsdeConfig,
) -> Result<SdfEstimate> {
    let (psi, flagged) = nsde_coefficients(periodogram, basis, cfg)?;
    let mut est = truncate(&psi, basis, k, EstimatorKind::TsvdNsde)?;
    est.flagged = flagged;
    Ok(est)
}

pub fn estimate_ncsde(
    periodogram: &PeriodogramSet,
    basis: &BasisMatrix,
    penalty: &PenaltyMatrix,
    config: &FitConfig,
) -> Result<SdfEstimate> {
    let fit = engine::fit(periodogram, basis, penalty, config)?;
    let values = engine::sdf(&fit.coefficients, basis)?;
    Ok(SdfEstimate {
        values,
        kind: EstimatorKind::Ncsde,
        coefficients: Some(fit.coefficients.clone()),
        flagged: Vec::new(),
        fit: Some(Box::new(fit)),
    })
}

/// Dispatches on `kind`. `config.k` is the rank for the truncated kinds.
pub fn estimate(
    kind: EstimatorKind,
    periodogram: &PeriodogramSet,
    basis: &BasisMatrix,
    penalty: &PenaltyMatrix,
    config: &FitConfig,
) -> Result<SdfEstimate> {
    let nsde = NsdeConfig::default();
    match kind {
        EstimatorKind::Ps => {
            check_grid(periodogram, basis)?;
            Ok(estimate_ps(periodogram))
        }
        EstimatorKind::SPs => estimate_sps(periodogram, basis),
        EstimatorKind::TsvdPs => estimate_tsvd_ps(periodogram, basis, config.k),
        EstimatorKind::Nsde => estimate_nsde(periodogram, basis, &nsde),
        EstimatorKind::TsvdNsde => estimate_tsvd_nsde(periodogram, basis, config.k, &nsde),
        EstimatorKind::Ncsde => estimate_ncsde(periodogram, basis, penalty, config),
    }
}

/// Points to cluster for an estimate: rows of the canonical scores for the
/// collective fit, otherwise one row of log densities per series.
pub fn clustering_points(est: &SdfEstimate) -> DMatrix<f64> {
    match (est.kind, &est.coefficients) {
        (EstimatorKind::Ncsde, Some(c)) => c.a.clone(),
        _ => est.log_values().transpose(),
    }
}
