//! Fit workers: a bounded FIFO queue drained by a fixed number of tasks,
//! each running one fit at a time on the blocking pool.

use std::sync::{Arc, Weak};

use ncsde::clustering::{euclidean_distances, ward_linkage};
use ncsde::engine::{fit_with_observer, FitResult};
use tokio::sync::{mpsc, Mutex};

use crate::error::ServiceError;
use crate::state::{AppState, FitArtifacts, Inner, Job};
use crate::types::{FitSummary, JobState};

/// Workers hold a weak handle so dropping the last `AppState` closes the
/// queue and lets them exit.
pub(crate) fn spawn_workers(inner: Weak<Inner>, rx: mpsc::Receiver<Arc<Job>>, workers: usize) {
    let rx = Arc::new(Mutex::new(rx));
    for _ in 0..workers {
        let rx = rx.clone();
        let inner = inner.clone();
        tokio::spawn(async move {
            loop {
                let next = rx.lock().await.recv().await;
                let (Some(job), Some(inner)) = (next, inner.upgrade()) else {
                    break;
                };
                let state = AppState { inner };
                let worker_job = job.clone();
                if let Err(panic) = tokio::task::spawn_blocking(move || execute(&state, &worker_job)).await {
                    job.set_state(JobState::Failed {
                        reason: format!("worker panicked: {panic}"),
                    });
                }
            }
        });
    }
}

fn execute(state: &AppState, job: &Job) {
    let outcome = run_fit(state, job).and_then(|result| {
        state.inner.store.save_fit(&job.id, &result)?;
        Ok(result)
    });
    job.set_state(match outcome {
        Ok(result) => JobState::Done {
            summary: FitSummary::from(&result),
        },
        Err(err) => JobState::Failed { reason: err.to_string() },
    });
    if let Err(err) = state.persist() {
        tracing::error!(job = %job.id, "could not persist the index: {err}");
    }
}

fn run_fit(state: &AppState, job: &Job) -> Result<FitResult, ServiceError> {
    let dataset = state.dataset(&job.dataset_id)?;
    let ps = state.periodogram(&dataset, job.truncate)?;
    let (basis, penalty) = job.config.basis.build(ps.grid()).map_err(ServiceError::invalid_input)?;
    job.config
        .fit
        .validate(basis.n_basis(), ps.n_series())
        .map_err(ServiceError::invalid_input)?;

    let mut iteration = 0;
    let mut candidate = 0;
    let mut trace = Vec::new();
    let mut observe = |rec: &ncsde::engine::IterationRecord| {
        // Grid mode restarts the count for each candidate.
        if rec.iteration == 1 && iteration > 0 {
            candidate += 1;
            trace.clear();
        }
        iteration += 1;
        trace.push(rec.objective);
        job.set_state(JobState::Running {
            iteration,
            objective: rec.objective,
            lambda: rec.lambda,
            candidate,
            trace: trace.clone(),
        });
    };
    fit_with_observer(&ps, &basis, &penalty, &job.config.fit, None, &mut observe)
        .map_err(ServiceError::invalid_input)
}

/// Result data for a finished fit, loaded once and cached.
pub(crate) fn artifacts(state: &AppState, job: &Job) -> Result<Arc<FitArtifacts>, ServiceError> {
    let current = job.state();
    if !matches!(*current, JobState::Done { .. }) {
        return Err(ServiceError::Conflict(format!(
            "fit `{}` is {}, results are available once it is done",
            job.id,
            current.name()
        )));
    }
    if let Some(found) = state.cached_artifacts(&job.id) {
        return Ok(found);
    }
    let result = state.inner.store.load_fit(&job.id)?;
    let dataset = state.dataset(&job.dataset_id)?;
    let ps = state.periodogram(&dataset, job.truncate)?;
    let (basis, _) = job
        .config
        .basis
        .build(ps.grid())
        .map_err(|e| ServiceError::Internal(e.to_string()))?;
    let labels = dataset.info.labels.clone();
    let dist = euclidean_distances(&result.coefficients.a).map_err(|e| ServiceError::Internal(e.to_string()))?;
    let dendrogram = ward_linkage(&dist, Some(labels.clone())).map_err(|e| ServiceError::Internal(e.to_string()))?;
    let built = Arc::new(FitArtifacts {
        result,
        basis,
        grid: ps.grid().omegas().to_vec(),
        labels,
        dendrogram,
    });
    state.cache_artifacts(&job.id, built.clone());
    Ok(built)
}
