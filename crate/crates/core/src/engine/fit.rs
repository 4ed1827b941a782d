use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::canonical::{canonicalize, canonicalize_with_info};
use super::objective::WhittleProblem;
use super::tuning::{df_internal, lambda_step, LambdaStatus};
use super::{Coefficients, FitConfig, FitResult, LambdaMode};
use crate::basis::{BasisMatrix, PenaltyMatrix};
use crate::error::{Error, Result};
use crate::linalg::{project_coefficients, solve_spd, truncated_svd};
use crate::spectral::PeriodogramSet;

/// A Newton block whose predicted decrease is below this fraction of the
/// current objective is treated as already optimal.
const STATIONARY_REL: f64 = 1e-13;

/// Relative lambda change below which an automatic fit may stop.
const LAMBDA_REL_TOL: f64 = 1e-6;

/// Progress snapshot emitted after every outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub lambda: f64,
    pub accepted: usize,
    pub stationary: usize,
    pub skipped: usize,
}

enum BlockOutcome<T> {
    Accepted(T),
    Stationary,
    Skipped,
}

/// Starting values: least-squares projection of the log periodograms onto the
/// basis followed by a rank-`K` truncated SVD.
pub fn initialize(
    basis: &BasisMatrix,
    periodogram: &PeriodogramSet,
    k: usize,
    init_ridge: f64,
) -> Result<Coefficients> {
    let problem = WhittleProblem::new(basis, periodogram)?;
    initialize_problem(&problem, k, init_ridge)
}

pub(crate) fn initialize_problem(problem: &WhittleProblem, k: usize, ridge: f64) -> Result<Coefficients> {
    let l = problem.n_basis();
    let m = problem.n_series();
    if k == 0 || k > l.min(m) {
        return Err(Error::Config(format!(
            "K = {k} must satisfy 1 <= K <= min(L, m) = {}",
            l.min(m)
        )));
    }
    let log_i = problem.ordinates.map(f64::ln);
    let psi = project_coefficients(&problem.b, &log_i, ridge)?;
    let svd = truncated_svd(&psi, k)?;
    let a = &svd.v * DMatrix::from_diagonal(&svd.singular_values);
    Coefficients::new(svd.u, a)
}

pub fn fit(
    periodogram: &PeriodogramSet,
    basis: &BasisMatrix,
    penalty: &PenaltyMatrix,
    config: &FitConfig,
) -> Result<FitResult> {
    fit_with_observer(periodogram, basis, penalty, config, None, &mut |_| {})
}

/// Like [`fit`] but starting from the given coefficients.
pub fn fit_from(
    periodogram: &PeriodogramSet,
    basis: &BasisMatrix,
    penalty: &PenaltyMatrix,
    config: &FitConfig,
    start: Coefficients,
) -> Result<FitResult> {
    fit_with_observer(periodogram, basis, penalty, config, Some(start), &mut |_| {})
}

pub fn fit_with_observer(
    periodogram: &PeriodogramSet,
    basis: &BasisMatrix,
    penalty: &PenaltyMatrix,
    config: &FitConfig,
    start: Option<Coefficients>,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<FitResult> {
    let problem = WhittleProblem::new(basis, periodogram)?;
    config.validate(problem.n_basis(), problem.n_series())?;
    if penalty.dim() != problem.n_basis() {
        return Err(Error::Shape(format!(
            "penalty is {}x{} for a basis of {} functions",
            penalty.dim(),
            penalty.dim(),
            problem.n_basis()
        )));
    }
    let start = match start {
        Some(c) => {
            problem.check(&c)?;
            if c.rank() != config.k {
                return Err(Error::Config(format!(
                    "starting coefficients have rank {} but K = {}",
                    c.rank(),
                    config.k
                )));
            }
            c
        }
        None => initialize_problem(&problem, config.k, config.init_ridge)?,
    };

    match &config.lambda {
        LambdaMode::AicGrid { values } => {
            let mut best: Option<FitResult> = None;
            let mut table = Vec::with_capacity(values.len());
            for &value in values {
                let fixed = FitConfig {
                    lambda: LambdaMode::Fixed { value },
                    ..config.clone()
                };
                let result = run(&problem, penalty, &fixed, start.clone(), observer)?;
                table.push((value, result.aic));
                if best.as_ref().is_none_or(|b| result.aic < b.aic) {
                    best = Some(result);
                }
            }
            let mut best = best.expect("grid is validated non-empty");
            best.aic_grid = table;
            Ok(best)
        }
        _ => run(&problem, penalty, config, start, observer),
    }
}

struct State {
    theta: DMatrix<f64>,
    a: DMatrix<f64>,
    u: DMatrix<f64>,
}

fn run(
    problem: &WhittleProblem,
    penalty: &PenaltyMatrix,
    config: &FitConfig,
    start: Coefficients,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<FitResult> {
    let r = penalty.values();
    let auto = matches!(config.lambda, LambdaMode::Auto { .. });
    let mut lambda = match config.lambda {
        LambdaMode::Fixed { value } => value,
        LambdaMode::Auto { initial } => initial.clamp(config.lambda_bounds.0, config.lambda_bounds.1),
        LambdaMode::AicGrid { .. } => unreachable!("grid mode is expanded by the caller"),
    };

    let (mut theta, mut a) = (start.theta, start.a);
    orthonormalize(&mut theta, &mut a);
    let u = problem.log_sdf(&Coefficients {
        theta: theta.clone(),
        a: a.clone(),
    });
    let mut state = State { theta, a, u };
    let mut dev = problem.deviance_unchecked(&state.u);
    if !dev.is_finite() {
        return Err(Error::numerical("objective is not finite at the starting values"));
    }

    let mut lambda_trace = Vec::new();
    let mut objective_trace = Vec::new();
    let mut warnings = Vec::new();
    let mut skipped_total = 0;
    let mut converged = false;
    let mut iterations = 0;

    for iteration in 1..=config.max_outer_iters {
        iterations = iteration;
        let obj_start = dev + lambda * subspace_penalty(&state.theta, r);
        let (mut accepted, mut stationary, mut skipped) = (0, 0, 0);

        // Score blocks: independent given Theta.
        let phi = &problem.b * &state.theta;
        let outcomes: Vec<BlockOutcome<(DVector<f64>, Vec<f64>, f64)>> = (0..problem.n_series())
            .into_par_iter()
            .map(|i| alpha_step(problem, &phi, &state, i, config.max_halvings))
            .collect();
        for (i, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                BlockOutcome::Accepted((alpha, u_col, _)) => {
                    state.a.row_mut(i).copy_from(&alpha.transpose());
                    state.u.column_mut(i).copy_from_slice(&u_col);
                    accepted += 1;
                }
                BlockOutcome::Stationary => stationary += 1,
                BlockOutcome::Skipped => skipped += 1,
            }
        }
        dev = problem.deviance_unchecked(&state.u);

        // Basis blocks: sequential in k.
        for k in 0..state.theta.ncols() {
            match theta_step(problem, r, lambda, &mut state, k, dev, config.max_halvings)? {
                BlockOutcome::Accepted(new_dev) => {
                    dev = new_dev;
                    accepted += 1;
                }
                BlockOutcome::Stationary => stationary += 1,
                BlockOutcome::Skipped => skipped += 1,
            }
        }
        skipped_total += skipped;

        let obj_end = dev + lambda * subspace_penalty(&state.theta, r);
        lambda_trace.push(lambda);
        objective_trace.push(obj_end);
        observer(&IterationRecord {
            iteration,
            objective: obj_end,
            lambda,
            accepted,
            stationary,
            skipped,
        });

        if accepted == 0 && stationary == 0 {
            return Err(Error::Stall { iteration });
        }
        if skipped > 0 {
            warnings.push(format!("iteration {iteration}: {skipped} block(s) skipped by step halving"));
        }

        let rel_change = (obj_start - obj_end).abs() / obj_end.abs().max(1.0);
        let mut lambda_settled = true;
        if auto {
            // df depends on how the columns of A are rotated; use the same
            // canonical form the result reports.
            let coeff = canonicalize(&Coefficients {
                theta: state.theta.clone(),
                a: state.a.clone(),
            })?;
            let update = lambda_step(problem, &coeff, penalty, lambda, penalty.order(), config.lambda_bounds)?;
            match update.status {
                LambdaStatus::Updated => {}
                other => warnings.push(format!("iteration {iteration}: lambda update {other:?}")),
            }
            lambda_settled = (update.lambda - lambda).abs() <= LAMBDA_REL_TOL * lambda;
            lambda = update.lambda;
        }
        if lambda_settled && (rel_change < config.tol || accepted == 0) {
            converged = true;
            break;
        }
    }

    let raw = Coefficients {
        theta: state.theta,
        a: state.a,
    };
    let (coefficients, info) = canonicalize_with_info(&raw)?;
    if info.tied {
        warnings.push("tied singular values in canonicalization".into());
    }
    let deviance = problem.deviance_checked(&state.u)?;
    let df = df_internal(problem, &coefficients, penalty, lambda)?;
    Ok(FitResult {
        coefficients,
        lambda_trace,
        objective_trace,
        lambda,
        deviance,
        df,
        aic: 2.0 * deviance + 2.0 * df,
        converged,
        iterations,
        skipped_blocks: skipped_total,
        aic_grid: Vec::new(),
        warnings,
    })
}

fn alpha_step(
    problem: &WhittleProblem,
    phi: &DMatrix<f64>,
    state: &State,
    i: usize,
    max_halvings: usize,
) -> BlockOutcome<(DVector<f64>, Vec<f64>, f64)> {
    let u_old = state.u.column(i);
    let dev_old = problem.series_deviance(i, u_old.as_slice());
    let (grad, hess) = problem.alpha_gradient_hessian(i, phi, u_old.as_slice());
    let Ok(step) = solve_spd(&hess, &grad) else {
        return BlockOutcome::Skipped;
    };
    let decrement = 0.5 * grad.dot(&step);
    if !(decrement > STATIONARY_REL * dev_old.abs().max(1.0)) {
        return if decrement.is_finite() {
            BlockOutcome::Stationary
        } else {
            BlockOutcome::Skipped
        };
    }
    let du = phi * &step;
    let alpha_old = state.a.row(i).transpose();
    let mut tau = 1.0;
    for _ in 0..=max_halvings {
        let u_new: Vec<f64> = u_old.iter().zip(du.iter()).map(|(u, d)| u - tau * d).collect();
        let dev_new = problem.series_deviance(i, &u_new);
        if dev_new < dev_old {
            return BlockOutcome::Accepted((&alpha_old - &step * tau, u_new, dev_new));
        }
        tau *= 0.5;
    }
    BlockOutcome::Skipped
}

/// `tr((Theta' Theta)^{-1} Theta' R Theta)`: the penalty of the orthonormal
/// basis of `span(Theta)`, equal to `tr(Theta' R Theta)` when `Theta` is
/// orthonormal.
pub(crate) fn subspace_penalty(theta: &DMatrix<f64>, r: &DMatrix<f64>) -> f64 {
    let gram = theta.transpose() * theta;
    let rt = theta.transpose() * r * theta;
    match gram.cholesky() {
        Some(chol) => chol.solve(&rt).trace(),
        None => f64::INFINITY,
    }
}

/// Replaces `Theta` by the Q factor of its QR decomposition (positive R
/// diagonal) and moves the triangular factor into `A`.
pub(crate) fn orthonormalize(theta: &mut DMatrix<f64>, a: &mut DMatrix<f64>) {
    let qr = theta.clone().qr();
    let mut q = qr.q();
    let mut rf = qr.r();
    for c in 0..rf.nrows() {
        if rf[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
            rf.row_mut(c).neg_mut();
        }
    }
    *a = &*a * rf.transpose();
    *theta = q;
}

/// Newton update of `theta_k` on the set of orthonormal `Theta`.
///
/// Two directions are tried. The plain Newton step for `dev + lambda
/// theta_k' R theta_k` also shrinks `theta_k`, which the scale-free objective
/// does not reward, but it lands near the penalized working-response fit and
/// smooths rough columns quickly. The projected step drops the penalty
/// gradient inside `span(Theta)`, where `tr(Theta' R Theta)` cannot change;
/// its Newton decrement is the stationarity test. Step halving checks every
/// trial against the true objective, and accepted steps are followed by
/// re-orthonormalization, which leaves `Theta A'` and the objective unchanged.
fn theta_step(
    problem: &WhittleProblem,
    r: &DMatrix<f64>,
    lambda: f64,
    state: &mut State,
    k: usize,
    dev_old: f64,
    max_halvings: usize,
) -> Result<BlockOutcome<f64>> {
    let weights = problem.weights(&state.u);
    let a_col: Vec<f64> = state.a.column(k).iter().copied().collect();
    let (grad_dev, mut hess) = problem.theta_gradient_hessian_raw(&a_col, &weights);
    let theta_k = state.theta.column(k).into_owned();
    let (mut plain_grad, mut grad) = (grad_dev.clone(), grad_dev);
    if lambda > 0.0 {
        let r_theta = r * &theta_k;
        let projected = &r_theta - &state.theta * (state.theta.transpose() * &r_theta);
        grad += projected * (2.0 * lambda);
        plain_grad += r_theta * (2.0 * lambda);
        hess += r * (2.0 * lambda);
    }

    let obj_old = dev_old + lambda * subspace_penalty(&state.theta, r);
    let Ok(step) = solve_spd(&hess, &grad) else {
        return Ok(BlockOutcome::Skipped);
    };
    let decrement = 0.5 * grad.dot(&step);
    if !(decrement > STATIONARY_REL * obj_old.abs().max(1.0)) {
        return Ok(if decrement.is_finite() {
            BlockOutcome::Stationary
        } else {
            BlockOutcome::Skipped
        });
    }

    let mut candidates = Vec::with_capacity(2);
    if lambda > 0.0 {
        if let Ok(plain) = solve_spd(&hess, &plain_grad) {
            candidates.push(plain);
        }
    }
    candidates.push(step);
    for step in candidates {
        if let Some(dev_new) = halve_theta_step(problem, r, lambda, state, k, &a_col, &step, obj_old, max_halvings) {
            return Ok(BlockOutcome::Accepted(dev_new));
        }
    }
    Ok(BlockOutcome::Skipped)
}

/// Step halving along `-step` for column `k`; commits the first trial that
/// lowers the objective and returns its deviance.
#[allow(clippy::too_many_arguments)]
fn halve_theta_step(
    problem: &WhittleProblem,
    r: &DMatrix<f64>,
    lambda: f64,
    state: &mut State,
    k: usize,
    a_col: &[f64],
    step: &DVector<f64>,
    obj_old: f64,
    max_halvings: usize,
) -> Option<f64> {
    // The update changes U by a rank-one term (B step) a_k'.
    let b_step = &problem.b * step;
    let theta_k = state.theta.column(k).into_owned();
    let mut trial = state.theta.clone();
    let mut tau = 1.0;
    for _ in 0..=max_halvings {
        let theta_new = &theta_k - step * tau;
        trial.column_mut(k).copy_from(&theta_new);
        let pen_new = if lambda > 0.0 { subspace_penalty(&trial, r) } else { 0.0 };
        let mut dev_new = 0.0;
        for (i, &alpha) in a_col.iter().enumerate() {
            let shift = tau * alpha;
            dev_new += problem
                .ordinates
                .column(i)
                .iter()
                .zip(state.u.column(i).iter())
                .zip(b_step.iter())
                .map(|((&p, &u), &d)| {
                    let un = u - shift * d;
                    un + p * (-un).exp()
                })
                .sum::<f64>();
        }
        let obj_new = dev_new + lambda * pen_new;
        if obj_new < obj_old {
            for (i, &alpha) in a_col.iter().enumerate() {
                let shift = tau * alpha;
                for (u, &d) in state.u.column_mut(i).iter_mut().zip(b_step.iter()) {
                    *u -= shift * d;
                }
            }
            state.theta = trial;
            orthonormalize(&mut state.theta, &mut state.a);
            return Some(dev_new);
        }
        tau *= 0.5;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{difference_penalty, eval_basis, BasisSpec, PenaltyKind};
    use crate::simulate::{ar3_generate, ArModel};
    use crate::spectral::{periodogram, TimeSeriesSet};

    #[test]
    fn orthonormalize_keeps_product() {
        let mut theta = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.0, -2.0, 1.0]);
        let mut a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 1.0, -1.0, 4.0]);
        let before = &theta * a.transpose();
        orthonormalize(&mut theta, &mut a);
        assert!((theta.transpose() * &theta - DMatrix::identity(2, 2)).norm() < 1e-14);
        assert!((&theta * a.transpose() - before).norm() < 1e-12);
    }

    #[test]
    fn subspace_penalty_ignores_scale() {
        let r = difference_penalty(5, 1).unwrap();
        let theta = DMatrix::from_row_slice(5, 1, &[1.0, 0.0, 2.0, 0.0, 1.0]);
        let p = subspace_penalty(&theta, r.values());
        assert!((subspace_penalty(&(&theta * 7.0), r.values()) - p).abs() < 1e-14);
        let unit = &theta / theta.norm();
        assert!((p - (unit.transpose() * r.values() * &unit)[(0, 0)]).abs() < 1e-14);
    }

    #[test]
    fn white_noise_constant_fit() {
        // A single degree-0 function spans exactly the constant log-SDFs.
        let white = ArModel::new([0.0; 3], 1.0).unwrap();
        let ts = TimeSeriesSet::from_columns(&[ar3_generate(&white, 1024, 3)]).unwrap();
        let ps = periodogram(&ts).unwrap();
        let spec = BasisSpec::new(1, 0, BasisSpec::domain_for(ps.grid())).unwrap();
        let basis = eval_basis(ps.grid(), &spec).unwrap();
        let penalty = PenaltyMatrix::from_factor(DMatrix::zeros(0, 1), PenaltyKind::Difference, 1).unwrap();
        let result = fit(&ps, &basis, &penalty, &FitConfig::new(1, LambdaMode::Fixed { value: 0.0 })).unwrap();
        let c_star = ps.ordinates().mean().ln();
        let u = basis.values() * &result.coefficients.theta * result.coefficients.a.transpose();
        assert!(result.converged);
        assert!(u.iter().all(|v| (v - c_star).abs() <= 0.05));
    }

    #[test]
    fn restart_at_optimum_stops_quickly() {
        let models = [ArModel::new([0.5, 0.1, 0.1], 1.0).unwrap(), ArModel::new([0.1, 0.1, 0.5], 1.0).unwrap()];
        let cols: Vec<Vec<f64>> = (0..6).map(|i| ar3_generate(&models[i % 2], 200, i as u64)).collect();
        let ps = periodogram(&TimeSeriesSet::from_columns(&cols).unwrap()).unwrap();
        let spec = BasisSpec::new(10, 3, BasisSpec::domain_for(ps.grid())).unwrap();
        let basis = eval_basis(ps.grid(), &spec).unwrap();
        let penalty = difference_penalty(10, 2).unwrap();
        let config = FitConfig::new(2, LambdaMode::Fixed { value: 1.0 });
        let first = fit(&ps, &basis, &penalty, &config).unwrap();
        assert!(first.converged);
        assert!(first.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        let again = fit_from(&ps, &basis, &penalty, &config, first.coefficients.clone()).unwrap();
        assert!(again.iterations <= 2);
        let last = *first.objective_trace.last().unwrap();
        assert!((again.objective_trace[0] - last).abs() <= 1e-8 * last.abs());
    }
}
