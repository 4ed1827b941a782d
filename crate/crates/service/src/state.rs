use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use arc_swap::ArcSwap;
use ncsde::basis::BasisMatrix;
use ncsde::clustering::Dendrogram;
use ncsde::config::ModelConfig;
use ncsde::engine::FitResult;
use ncsde::io::read_series_csv;
use ncsde::spectral::{periodogram, truncate_band, PeriodogramSet, TimeSeriesSet};
use tokio::sync::mpsc;

use crate::error::ServiceError;
use crate::jobs;
use crate::store::{Index, Store};
use crate::types::{DatasetInfo, FitView, JobState};

/// Entries kept per in-memory cache before it is flushed.
const CACHE_LIMIT: usize = 64;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Fits that may run at once.
    pub workers: usize,
    /// Jobs that may wait for a worker before submissions get 503.
    pub queue_capacity: usize,
    /// Allowed browser origin; any origin when unset.
    pub cors_origin: Option<String>,
    pub max_body_bytes: usize,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            workers: 2,
            queue_capacity: 64,
            cors_origin: None,
            max_body_bytes: 256 << 20,
        }
    }

    fn validate(&self) -> Result<(), ServiceError> {
        if self.workers == 0 || self.queue_capacity == 0 {
            return Err(ServiceError::Internal(
                "workers and queue capacity must both be positive".into(),
            ));
        }
        Ok(())
    }
}

pub(crate) struct DatasetRecord {
    pub info: DatasetInfo,
    pub series: Arc<TimeSeriesSet>,
}

pub(crate) struct Job {
    pub id: String,
    pub dataset_id: String,
    pub config: ModelConfig,
    pub truncate: Option<usize>,
    pub created_at: u64,
    state: ArcSwap<JobState>,
}

impl Job {
    pub fn new(dataset_id: String, config: ModelConfig, truncate: Option<usize>) -> Self {
        Self {
            id: new_id(),
            dataset_id,
            config,
            truncate,
            created_at: now(),
            state: ArcSwap::from_pointee(JobState::Queued),
        }
    }

    /// Lock-free snapshot of the current state.
    pub fn state(&self) -> Arc<JobState> {
        self.state.load_full()
    }

    /// Only the worker owning the job calls this, so writes never race.
    pub fn set_state(&self, state: JobState) {
        self.state.store(Arc::new(state));
    }

    pub fn view(&self) -> FitView {
        FitView {
            id: self.id.clone(),
            dataset_id: self.dataset_id.clone(),
            config: self.config.clone(),
            truncate: self.truncate,
            created_at: self.created_at,
            state: (*self.state()).clone(),
        }
    }
}

/// Everything the result endpoints need for one finished fit.
pub(crate) struct FitArtifacts {
    pub result: FitResult,
    pub basis: BasisMatrix,
    pub grid: Vec<f64>,
    pub labels: Vec<String>,
    pub dendrogram: Dendrogram,
}

/// Insertion-ordered map.
struct Registry<T> {
    order: Vec<String>,
    items: HashMap<String, Arc<T>>,
}

impl<T> Default for Registry<T> {
    fn default() -> Self {
        Self {
            order: Vec::new(),
            items: HashMap::new(),
        }
    }
}

impl<T> Registry<T> {
    fn insert(&mut self, id: String, item: Arc<T>) {
        self.order.push(id.clone());
        self.items.insert(id, item);
    }

    fn remove(&mut self, id: &str) {
        self.items.remove(id);
        self.order.retain(|x| x != id);
    }

    fn get(&self, id: &str) -> Option<Arc<T>> {
        self.items.get(id).cloned()
    }

    fn values(&self) -> impl Iterator<Item = &Arc<T>> {
        self.order.iter().map(|id| &self.items[id])
    }
}

pub(crate) struct Inner {
    pub config: ServiceConfig,
    pub store: Store,
    datasets: RwLock<Registry<DatasetRecord>>,
    fits: RwLock<Registry<Job>>,
    persist_lock: Mutex<()>,
    periodograms: Mutex<HashMap<(String, Option<usize>), Arc<PeriodogramSet>>>,
    artifacts: Mutex<HashMap<String, Arc<FitArtifacts>>>,
    queue: mpsc::Sender<Arc<Job>>,
}

/// Shared handle to the service state. Cloning is cheap.
#[derive(Clone)]
pub struct AppState {
    pub(crate) inner: Arc<Inner>,
}

impl AppState {
    /// Loads the data directory and starts the workers. Must run inside a
    /// tokio runtime. Jobs that were queued or running when the previous
    /// process stopped are marked failed.
    pub fn open(config: ServiceConfig) -> Result<Self, ServiceError> {
        config.validate()?;
        let store = Store::open(&config.data_dir)?;
        let index = store.load_index()?;

        let mut datasets = Registry::default();
        for info in index.datasets {
            let bytes = store.get_blob(&info.hash)?;
            let series = read_series_csv(bytes.as_slice())
                .map_err(|e| ServiceError::Storage(format!("dataset {}: {e}", info.id)))?;
            if (series.len(), series.n_series()) != (info.n, info.m) {
                return Err(ServiceError::Storage(format!("dataset {} does not match its index entry", info.id)));
            }
            let id = info.id.clone();
            datasets.insert(
                id,
                Arc::new(DatasetRecord {
                    info,
                    series: Arc::new(series),
                }),
            );
        }

        let mut fits = Registry::default();
        let mut interrupted = false;
        for view in index.fits {
            let state = if view.state.is_terminal() {
                view.state
            } else {
                interrupted = true;
                JobState::Failed {
                    reason: "interrupted by a service restart".into(),
                }
            };
            let job = Job {
                id: view.id.clone(),
                dataset_id: view.dataset_id,
                config: view.config,
                truncate: view.truncate,
                created_at: view.created_at,
                state: ArcSwap::from_pointee(state),
            };
            fits.insert(view.id, Arc::new(job));
        }

        let (tx, rx) = mpsc::channel(config.queue_capacity);
        let workers = config.workers;
        let state = AppState {
            inner: Arc::new(Inner {
                config,
                store,
                datasets: RwLock::new(datasets),
                fits: RwLock::new(fits),
                persist_lock: Mutex::new(()),
                periodograms: Mutex::new(HashMap::new()),
                artifacts: Mutex::new(HashMap::new()),
                queue: tx,
            }),
        };
        if interrupted {
            state.persist()?;
        }
        jobs::spawn_workers(Arc::downgrade(&state.inner), rx, workers);
        Ok(state)
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    /// Writes the index from a fresh snapshot. Non-terminal jobs are stored
    /// as queued; progress is not persisted.
    pub(crate) fn persist(&self) -> Result<(), ServiceError> {
        let _guard = self.inner.persist_lock.lock().unwrap_or_else(|e| e.into_inner());
        let index = Index {
            datasets: self.list_datasets(),
            fits: self
                .list_fits()
                .into_iter()
                .map(|mut v| {
                    if !v.state.is_terminal() {
                        v.state = JobState::Queued;
                    }
                    v
                })
                .collect(),
            ..Index::default()
        };
        self.inner.store.save_index(&index)
    }

    pub(crate) fn add_dataset(&self, record: DatasetRecord) -> Result<DatasetInfo, ServiceError> {
        let info = record.info.clone();
        self.inner
            .datasets
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(info.id.clone(), Arc::new(record));
        if let Err(e) = self.persist() {
            self.inner.datasets.write().unwrap_or_else(|e| e.into_inner()).remove(&info.id);
            return Err(e);
        }
        Ok(info)
    }

    pub(crate) fn dataset(&self, id: &str) -> Result<Arc<DatasetRecord>, ServiceError> {
        self.inner
            .datasets
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .ok_or_else(|| ServiceError::NotFound(format!("unknown dataset `{id}`")))
    }

    pub(crate) fn list_datasets(&self) -> Vec<DatasetInfo> {
        let reg = self.inner.datasets.read().unwrap_or_else(|e| e.into_inner());
        reg.values().map(|r| r.info.clone()).collect()
    }

    pub(crate) fn job(&self, id: &str) -> Result<Arc<Job>, ServiceError> {
        self.inner
            .fits
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .ok_or_else(|| ServiceError::NotFound(format!("unknown fit `{id}`")))
    }

    pub(crate) fn list_fits(&self) -> Vec<FitView> {
        let reg = self.inner.fits.read().unwrap_or_else(|e| e.into_inner());
        reg.values().map(|j| j.view()).collect()
    }

    /// Registers and enqueues a job; 503 when the queue is full.
    pub(crate) fn submit(&self, job: Job) -> Result<Arc<Job>, ServiceError> {
        let job = Arc::new(job);
        self.inner
            .fits
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(job.id.clone(), job.clone());
        let unregister = || {
            self.inner.fits.write().unwrap_or_else(|e| e.into_inner()).remove(&job.id);
        };
        if let Err(err) = self.inner.queue.try_send(job.clone()) {
            unregister();
            return Err(match err {
                mpsc::error::TrySendError::Full(_) => {
                    ServiceError::Unavailable("fit queue is full, retry later".into())
                }
                mpsc::error::TrySendError::Closed(_) => ServiceError::Internal("fit queue is closed".into()),
            });
        }
        self.persist()?;
        Ok(job)
    }

    /// Periodogram of a dataset, optionally keeping the lowest `truncate`
    /// frequencies. Cached per `(dataset, truncate)`.
    pub(crate) fn periodogram(
        &self,
        dataset: &DatasetRecord,
        truncate: Option<usize>,
    ) -> Result<Arc<PeriodogramSet>, ServiceError> {
        let key = (dataset.info.id.clone(), truncate);
        if let Some(ps) = lock(&self.inner.periodograms).get(&key) {
            return Ok(ps.clone());
        }
        let full = match truncate {
            None => Arc::new(periodogram(&dataset.series).map_err(ServiceError::bad_query)?),
            Some(_) => self.periodogram(dataset, None)?,
        };
        let ps = match truncate {
            None => full,
            Some(k) => Arc::new(truncate_band(&full, k).map_err(ServiceError::bad_query)?),
        };
        let mut cache = lock(&self.inner.periodograms);
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(key, ps.clone());
        Ok(ps)
    }

    pub(crate) fn cached_artifacts(&self, fit_id: &str) -> Option<Arc<FitArtifacts>> {
        lock(&self.inner.artifacts).get(fit_id).cloned()
    }

    pub(crate) fn cache_artifacts(&self, fit_id: &str, artifacts: Arc<FitArtifacts>) {
        let mut cache = lock(&self.inner.artifacts);
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(fit_id.to_owned(), artifacts);
    }
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

pub(crate) fn new_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

pub(crate) fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}
