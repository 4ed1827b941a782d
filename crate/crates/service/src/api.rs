use std::collections::BTreeSet;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ncsde::baselines::{clustering_points, estimate, EstimatorKind};
use ncsde::clustering::{cut, euclidean_distances, select_k, ward_linkage};
use ncsde::config::BasisConfig;
use ncsde::engine::{sdf, FitConfig};
use ncsde::io::{matrix_rows, read_series_csv, write_series_csv};
use ncsde::metrics::{adjusted_rand_index, subspace_angle};
use ncsde::simulate::{default_models, generate_mixture, true_log_sdf_matrix, MixtureDesign};
use ncsde::spectral::fourier_grid;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::error::ServiceError;
use crate::jobs;
use crate::schema;
use crate::state::{new_id, now, AppState, DatasetRecord, Job};
use crate::types::*;

/// Cap on `n * m` for generated datasets.
const MAX_SIMULATED_VALUES: usize = 50_000_000;

pub fn router(state: AppState) -> Router {
    let cors = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    let cors = match state
        .config()
        .cors_origin
        .as_deref()
        .and_then(|o| HeaderValue::from_str(o).ok())
    {
        Some(origin) => cors.allow_origin(origin),
        None => cors.allow_origin(AllowOrigin::any()),
    };
    let body_limit = state.config().max_body_bytes;
    Router::new()
        .route("/health", get(health))
        .route("/datasets", get(list_datasets).post(upload_dataset))
        .route("/datasets/simulate", post(simulate_dataset))
        .route("/datasets/{id}", get(get_dataset))
        .route("/datasets/{id}/periodogram", get(get_periodogram))
        .route("/datasets/{id}/elbow", get(get_elbow))
        .route("/fits", get(list_fits).post(create_fit))
        .route("/fits/{id}", get(get_fit))
        .route("/fits/{id}/sdf", get(get_sdf))
        .route("/fits/{id}/scores", get(get_scores))
        .route("/fits/{id}/dendrogram", get(get_dendrogram))
        .route("/fits/{id}/clusters", get(get_clusters))
        .route("/compare", post(compare))
        .route("/schema", get(schema_index))
        .route("/schema/{name}", get(schema_file))
        .fallback(|| async { ServiceError::NotFound("no such endpoint".into()) })
        .layer(DefaultBodyLimit::max(body_limit))
        .layer(cors)
        .with_state(state)
}

/// Runs CPU-bound or file-system work off the async executor.
async fn blocking<T, F>(f: F) -> Result<T, ServiceError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

/// Malformed JSON is a 400; well-formed JSON with the wrong shape or values
/// is a 422.
fn parse_json<T: DeserializeOwned>(body: &[u8]) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => ServiceError::Unprocessable(e.to_string()),
        _ => ServiceError::BadRequest {
            message: e.to_string(),
            line: Some(e.line()),
        },
    })
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ServiceError> {
    q.map(|Query(v)| v).map_err(|e| ServiceError::bad_request(e.body_text()))
}

fn unprocessable(err: ncsde::Error) -> ServiceError {
    ServiceError::Unprocessable(err.to_string())
}

fn internal(err: ncsde::Error) -> ServiceError {
    ServiceError::Internal(err.to_string())
}

/// A basis needs at least as many frequencies as functions to have full
/// column rank.
fn check_basis_size(n_basis: usize, n_freq: usize) -> Result<(), ServiceError> {
    if n_basis > n_freq {
        return Err(ServiceError::Unprocessable(format!(
            "L = {n_basis} exceeds the {n_freq} available frequencies"
        )));
    }
    Ok(())
}

fn check_k(k: usize, m: usize) -> Result<(), ServiceError> {
    if k == 0 || k > m {
        return Err(ServiceError::bad_request(format!("k = {k} must lie in 1..={m}")));
    }
    Ok(())
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        workers: state.config().workers,
        queue_capacity: state.config().queue_capacity,
    })
}

async fn list_datasets(State(state): State<AppState>) -> Json<DatasetList> {
    Json(DatasetList {
        datasets: state.list_datasets(),
    })
}

async fn get_dataset(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<DatasetInfo>, ServiceError> {
    Ok(Json(state.dataset(&id)?.info.clone()))
}

async fn upload_dataset(
    State(state): State<AppState>,
    body: Bytes,
) -> Result<(StatusCode, Json<DatasetInfo>), ServiceError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Err(ServiceError::bad_request("request body is empty"));
    }
    let info = blocking(move || {
        let series = read_series_csv(&body[..]).map_err(|e| match e {
            ncsde::Error::Parse { line, message } => ServiceError::BadRequest {
                message,
                line: Some(line),
            },
            other => ServiceError::bad_request(other.to_string()),
        })?;
        let hash = state.inner.store.put_blob(&body)?;
        state.add_dataset(DatasetRecord {
            info: DatasetInfo {
                id: new_id(),
                hash,
                n: series.len(),
                m: series.n_series(),
                labels: series.labels().to_vec(),
                created_at: now(),
                reference: None,
            },
            series: Arc::new(series),
        })
    })
    .await?;
    Ok((StatusCode::CREATED, Json(info)))
}

async fn simulate_dataset(
    State(state): State<AppState>,
    body: Bytes,
) -> Result<(StatusCode, Json<DatasetInfo>), ServiceError> {
    let req: SimulateRequest = parse_json(&body)?;
    if req.n.saturating_mul(req.m) > MAX_SIMULATED_VALUES {
        return Err(ServiceError::Unprocessable(format!(
            "n * m must not exceed {MAX_SIMULATED_VALUES}"
        )));
    }
    let models = req.models.unwrap_or_else(default_models);
    let probs = req
        .probs
        .unwrap_or_else(|| vec![1.0 / models.len().max(1) as f64; models.len()]);
    let design = MixtureDesign {
        models,
        probs,
        n: req.n,
        m: req.m,
        seed: req.seed,
    };
    let info = blocking(move || {
        let (series, labels) = generate_mixture(&design).map_err(unprocessable)?;
        let mut csv = Vec::new();
        write_series_csv(&mut csv, &series).map_err(internal)?;
        let hash = state.inner.store.put_blob(&csv)?;
        state.add_dataset(DatasetRecord {
            info: DatasetInfo {
                id: new_id(),
                hash,
                n: series.len(),
                m: series.n_series(),
                labels: series.labels().to_vec(),
                created_at: now(),
                reference: Some(Reference {
                    models: design.models,
                    probs: design.probs,
                    labels,
                    seed: design.seed,
                }),
            },
            series: Arc::new(series),
        })
    })
    .await?;
    Ok((StatusCode::CREATED, Json(info)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PeriodogramQuery {
    truncate: Option<usize>,
}

async fn get_periodogram(
    State(state): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<PeriodogramQuery>, QueryRejection>,
) -> Result<Json<PeriodogramView>, ServiceError> {
    let q = query(q)?;
    let dataset = state.dataset(&id)?;
    let view = blocking(move || {
        let ps = state.periodogram(&dataset, q.truncate)?;
        Ok(PeriodogramView {
            dataset_id: dataset.info.id.clone(),
            truncate: q.truncate,
            grid: ps.grid().omegas().to_vec(),
            labels: dataset.info.labels.clone(),
            ordinates: matrix_rows::to_rows(ps.ordinates()),
        })
    })
    .await?;
    Ok(Json(view))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ElbowQuery {
    kmax: Option<usize>,
    #[serde(rename = "L")]
    n_basis: Option<usize>,
    truncate: Option<usize>,
}

async fn get_elbow(
    State(state): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<ElbowQuery>, QueryRejection>,
) -> Result<Json<ElbowView>, ServiceError> {
    let q = query(q)?;
    let dataset = state.dataset(&id)?;
    let m = dataset.info.m;
    let kmax = q.kmax.unwrap_or(m.min(10));
    if kmax < 3 || kmax > m {
        return Err(ServiceError::bad_request(format!(
            "kmax = {kmax} must lie in 3..={m} (the elbow needs three WSS values)"
        )));
    }
    let view = blocking(move || {
        let ps = state.periodogram(&dataset, q.truncate)?;
        let mut basis_config = BasisConfig::default();
        if let Some(l) = q.n_basis {
            basis_config.n_basis = l;
        }
        let (basis, _) = basis_config.build(ps.grid()).map_err(ServiceError::bad_query)?;
        let res = select_k(&ps, &basis, kmax).map_err(ServiceError::bad_query)?;
        Ok(ElbowView {
            dataset_id: dataset.info.id.clone(),
            kmax,
            wss: res.wss,
            suggested_k: res.suggested_k,
            reliable: res.reliable,
        })
    })
    .await?;
    Ok(Json(view))
}

async fn list_fits(State(state): State<AppState>) -> Json<FitList> {
    Json(FitList {
        fits: state.list_fits(),
    })
}

async fn create_fit(State(state): State<AppState>, body: Bytes) -> Result<Response, ServiceError> {
    let req: FitRequest = parse_json(&body)?;
    let dataset = state.dataset(&req.dataset_id)?;
    let job = blocking(move || {
        // Validate against the grid the worker will use, without the FFT.
        let grid = fourier_grid(dataset.info.n).map_err(unprocessable)?;
        let grid = match req.truncate {
            Some(k) => grid.prefix(k).map_err(unprocessable)?,
            None => grid,
        };
        check_basis_size(req.config.basis.n_basis, grid.len())?;
        let (basis, _) = req.config.basis.build(&grid).map_err(unprocessable)?;
        req.config
            .fit
            .validate(basis.n_basis(), dataset.info.m)
            .map_err(unprocessable)?;
        state.submit(Job::new(req.dataset_id, req.config, req.truncate))
    })
    .await?;
    let location = format!("/fits/{}", job.id);
    let body = FitAccepted {
        job_id: job.id.clone(),
        location: location.clone(),
    };
    Ok((StatusCode::ACCEPTED, [(header::LOCATION, location)], Json(body)).into_response())
}

async fn get_fit(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<FitView>, ServiceError> {
    Ok(Json(state.job(&id)?.view()))
}

async fn get_sdf(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SdfView>, ServiceError> {
    let job = state.job(&id)?;
    let view = blocking(move || {
        let art = jobs::artifacts(&state, &job)?;
        let values = sdf(&art.result.coefficients, &art.basis).map_err(internal)?;
        Ok(SdfView {
            fit_id: job.id.clone(),
            grid: art.grid.clone(),
            labels: art.labels.clone(),
            sdf: matrix_rows::to_rows(&values),
        })
    })
    .await?;
    Ok(Json(view))
}

async fn get_scores(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<ScoresView>, ServiceError> {
    let job = state.job(&id)?;
    let view = blocking(move || {
        let art = jobs::artifacts(&state, &job)?;
        let a = &art.result.coefficients.a;
        Ok(ScoresView {
            fit_id: job.id.clone(),
            k: a.ncols(),
            labels: art.labels.clone(),
            scores: matrix_rows::to_rows(a),
        })
    })
    .await?;
    Ok(Json(view))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CutQuery {
    k: Option<usize>,
}

async fn get_dendrogram(
    State(state): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<CutQuery>, QueryRejection>,
) -> Result<Json<DendrogramView>, ServiceError> {
    let q = query(q)?;
    let job = state.job(&id)?;
    let view = blocking(move || {
        let art = jobs::artifacts(&state, &job)?;
        let dend = &art.dendrogram;
        let clusters = match q.k {
            Some(k) => {
                check_k(k, dend.n_leaves())?;
                Some(cut(dend, k).map_err(internal)?.labels)
            }
            None => None,
        };
        Ok(DendrogramView {
            fit_id: job.id.clone(),
            labels: dend.leaf_labels.clone(),
            merges: dend
                .merges
                .iter()
                .map(|m| MergeView {
                    left: m.left,
                    right: m.right,
                    height: m.height,
                    size: m.size,
                })
                .collect(),
            k: q.k,
            clusters,
        })
    })
    .await?;
    Ok(Json(view))
}

async fn get_clusters(
    State(state): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<CutQuery>, QueryRejection>,
) -> Result<Json<ClustersView>, ServiceError> {
    let k = query(q)?
        .k
        .ok_or_else(|| ServiceError::bad_request("query parameter `k` is required"))?;
    let job = state.job(&id)?;
    let view = blocking(move || {
        let art = jobs::artifacts(&state, &job)?;
        check_k(k, art.dendrogram.n_leaves())?;
        Ok(ClustersView {
            fit_id: job.id.clone(),
            k,
            labels: art.labels.clone(),
            clusters: cut(&art.dendrogram, k).map_err(internal)?.labels,
        })
    })
    .await?;
    Ok(Json(view))
}

async fn compare(State(state): State<AppState>, body: Bytes) -> Result<Json<CompareView>, ServiceError> {
    let req: CompareRequest = parse_json(&body)?;
    let dataset = state.dataset(&req.dataset_id)?;
    let view = blocking(move || {
        let m = dataset.info.m;
        if let Some(k) = req.truncate {
            let n_freq = fourier_grid(dataset.info.n).map_err(unprocessable)?.len();
            if k == 0 || k > n_freq {
                return Err(ServiceError::Unprocessable(format!(
                    "truncate = {k} must lie in 1..={n_freq}"
                )));
            }
        }
        let ps = state.periodogram(&dataset, req.truncate)?;
        check_basis_size(req.basis.n_basis, ps.n_freq())?;
        let (basis, penalty) = req.basis.build(ps.grid()).map_err(unprocessable)?;
        let config = FitConfig::new(req.k, req.lambda.clone());
        config.validate(basis.n_basis(), m).map_err(unprocessable)?;

        let reference = dataset.info.reference.as_ref();
        let gold_k = reference.map(|r| r.labels.iter().collect::<BTreeSet<_>>().len());
        let clusters = req.clusters.or(gold_k).unwrap_or(req.k);
        if clusters == 0 || clusters > m {
            return Err(ServiceError::Unprocessable(format!(
                "clusters = {clusters} must lie in 1..={m}"
            )));
        }
        let truth = reference.map(|r| true_log_sdf_matrix(&r.models, &r.labels, ps.grid()));

        let mut estimators = Vec::with_capacity(EstimatorKind::ALL.len());
        for kind in EstimatorKind::ALL {
            let est = estimate(kind, &ps, &basis, &penalty, &config).map_err(unprocessable)?;
            let points = clustering_points(&est);
            let dend = ward_linkage(&euclidean_distances(&points).map_err(unprocessable)?, None).map_err(internal)?;
            let labels = cut(&dend, clusters).map_err(internal)?.labels;
            let (angle, ari) = match (reference, &truth, gold_k) {
                // Models with identical or flat log densities leave the truth
                // rank deficient; the angle is then undefined and omitted.
                (Some(r), Some(truth), Some(gold_k)) => (
                    subspace_angle(truth, &est.log_values(), gold_k).ok(),
                    Some(adjusted_rand_index(&r.labels, &labels).map_err(internal)?),
                ),
                _ => (None, None),
            };
            estimators.push(EstimatorView {
                kind,
                labels,
                angle,
                ari,
                flagged: est.flagged,
            });
        }
        Ok(CompareView {
            dataset_id: dataset.info.id.clone(),
            k: req.k,
            clusters,
            estimators,
        })
    })
    .await?;
    Ok(Json(view))
}

async fn schema_index() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "schemas": schema::names() }))
}

async fn schema_file(Path(name): Path<String>) -> Result<Response, ServiceError> {
    let text = schema::get(name.trim_end_matches(".json"))
        .ok_or_else(|| ServiceError::NotFound(format!("unknown schema `{name}`")))?;
    Ok(([(header::CONTENT_TYPE, "application/schema+json")], text).into_response())
}

