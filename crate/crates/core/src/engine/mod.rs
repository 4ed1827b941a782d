//! Collective estimation of many log spectral densities on a shared low-rank
//! basis, `U = B Theta A'`, by penalized Whittle deviance minimization.

mod canonical;
mod fit;
mod objective;
mod tuning;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::BasisMatrix;
use crate::error::{Error, Result};
use crate::io::matrix_rows;

pub use canonical::{canonicalize, canonicalize_with_info, CanonicalInfo};
pub use fit::{fit, fit_from, fit_with_observer, initialize, IterationRecord};
pub use objective::{
    alpha_gradient_hessian, penalized_objective, theta_gradient_hessian, whittle_deviance,
    WhittleProblem,
};
pub(crate) use objective::weighted_gram;
pub use tuning::{aic, degrees_of_freedom, update_lambda, LambdaStatus, LambdaUpdate};

/// Shared basis weights `Theta` (`L x K`) and per-series scores `A` (`m x K`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    #[serde(with = "matrix_rows")]
    pub theta: DMatrix<f64>,
    #[serde(rename = "A", with = "matrix_rows")]
    pub a: DMatrix<f64>,
}

impl Coefficients {
    pub fn new(theta: DMatrix<f64>, a: DMatrix<f64>) -> Result<Self> {
        if theta.ncols() != a.ncols() {
            return Err(Error::Shape(format!(
                "Theta has {} columns but A has {}",
                theta.ncols(),
                a.ncols()
            )));
        }
        Ok(Self { theta, a })
    }

    pub fn rank(&self) -> usize {
        self.theta.ncols()
    }

    pub fn n_basis(&self) -> usize {
        self.theta.nrows()
    }

    pub fn n_series(&self) -> usize {
        self.a.nrows()
    }

    /// Coefficient matrix `Psi = Theta A'` in the fixed basis.
    pub fn psi(&self) -> DMatrix<f64> {
        &self.theta * self.a.transpose()
    }
}

/// Log spectral densities `B Theta A'` on the basis grid.
pub fn log_sdf(coeff: &Coefficients, basis: &BasisMatrix) -> Result<DMatrix<f64>> {
    if basis.n_basis() != coeff.n_basis() {
        return Err(Error::Shape(format!(
            "basis has {} functions but Theta has {} rows",
            basis.n_basis(),
            coeff.n_basis()
        )));
    }
    Ok(basis.values() * &coeff.theta * coeff.a.transpose())
}

/// Spectral densities `exp(B Theta A')`.
pub fn sdf(coeff: &Coefficients, basis: &BasisMatrix) -> Result<DMatrix<f64>> {
    Ok(log_sdf(coeff, basis)?.map(f64::exp))
}

/// How the smoothing parameter is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LambdaMode {
    /// Hold `lambda` fixed.
    Fixed { value: f64 },
    /// Refresh `lambda` once per outer iteration from the current degrees of
    /// freedom, starting from `initial`.
    Auto {
        #[serde(default = "default_initial_lambda")]
        initial: f64,
    },
    /// Fit once per candidate and keep the minimum-AIC fit.
    AicGrid { values: Vec<f64> },
}

fn default_initial_lambda() -> f64 {
    1.0
}

impl Default for LambdaMode {
    fn default() -> Self {
        LambdaMode::Auto { initial: 1.0 }
    }
}

impl std::str::FromStr for LambdaMode {
    type Err = Error;

    /// Parses `fixed:<x>`, `auto`, `auto:<x0>` or `grid:<x1>,<x2>,...`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let parse_num = |v: &str| -> Result<f64> {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("invalid lambda value `{v}`")))
        };
        let mode = if s == "auto" {
            LambdaMode::Auto { initial: 1.0 }
        } else if let Some(rest) = s.strip_prefix("auto:") {
            LambdaMode::Auto {
                initial: parse_num(rest)?,
            }
        } else if let Some(rest) = s.strip_prefix("fixed:") {
            LambdaMode::Fixed {
                value: parse_num(rest)?,
            }
        } else if let Some(rest) = s.strip_prefix("grid:") {
            LambdaMode::AicGrid {
                values: rest.split(',').map(parse_num).collect::<Result<_>>()?,
            }
        } else {
            return Err(Error::Config(format!(
                "unrecognised lambda mode `{s}` (expected fixed:x, auto or grid:a,b,...)"
            )));
        };
        mode.validate()?;
        Ok(mode)
    }
}

impl LambdaMode {
    pub fn validate(&self) -> Result<()> {
        let check = |v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("lambda must be finite and >= 0, got {v}")))
            }
        };
        match self {
            LambdaMode::Fixed { value } => check(*value),
            LambdaMode::Auto { initial } => {
                check(*initial)?;
                if *initial == 0.0 {
                    return Err(Error::Config("initial lambda must be > 0".into()));
                }
                Ok(())
            }
            LambdaMode::AicGrid { values } => {
                if values.is_empty() {
                    return Err(Error::Config("lambda grid is empty".into()));
                }
                values.iter().try_for_each(|v| check(*v))
            }
        }
    }
}

/// Optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Number of shared adaptive basis functions.
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(default)]
    pub lambda: LambdaMode,
    #[serde(default = "default_max_outer_iters")]
    pub max_outer_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_halvings")]
    pub max_halvings: usize,
    #[serde(default = "default_init_ridge")]
    pub init_ridge: f64,
    #[serde(default = "default_lambda_bounds")]
    pub lambda_bounds: (f64, f64),
}

fn default_max_outer_iters() -> usize {
    500
}
fn default_tol() -> f64 {
    1e-8
}
fn default_max_halvings() -> usize {
    30
}
fn default_init_ridge() -> f64 {
    1e-8
}
fn default_lambda_bounds() -> (f64, f64) {
    (1e-8, 1e8)
}

impl FitConfig {
    pub fn new(k: usize, lambda: LambdaMode) -> Self {
        Self {
            k,
            lambda,
            max_outer_iters: default_max_outer_iters(),
            tol: default_tol(),
            max_halvings: default_max_halvings(),
            init_ridge: default_init_ridge(),
            lambda_bounds: default_lambda_bounds(),
        }
    }

    pub fn validate(&self, n_basis: usize, n_series: usize) -> Result<()> {
        if self.k == 0 || self.k > n_basis.min(n_series) {
            return Err(Error::Config(format!(
                "K = {} must satisfy 1 <= K <= min(L, m) = {}",
                self.k,
                n_basis.min(n_series)
            )));
        }
        self.lambda.validate()?;
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(Error::Config(format!("tol must be >= 0, got {}", self.tol)));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::Config("max_outer_iters must be positive".into()));
        }
        if !(self.init_ridge.is_finite() && self.init_ridge >= 0.0) {
            return Err(Error::Config("init_ridge must be >= 0".into()));
        }
        let (lo, hi) = self.lambda_bounds;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Config(format!("invalid lambda bounds ({lo}, {hi})")));
        }
        Ok(())
    }
}

/// Outcome of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Canonicalized `(Theta, A)`.
    pub coefficients: Coefficients,
    /// Smoothing parameter in force during each outer iteration.
    pub lambda_trace: Vec<f64>,
    /// Penalized objective after each outer iteration.
    pub objective_trace: Vec<f64>,
    /// Final smoothing parameter.
    pub lambda: f64,
    pub deviance: f64,
    pub df: f64,
    pub aic: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Block updates rejected by step halving, summed over iterations.
    pub skipped_blocks: usize,
    /// `(lambda, AIC)` pairs evaluated in grid mode.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aic_grid: Vec<(f64, f64)>,
    /// Non-fatal conditions met during the fit.
    #[serde(default)]
    pub warnings: Vec<String>,
}
