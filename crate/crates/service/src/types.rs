//! Request and response bodies. Every response type has a schema file under
//! `schema/`.

use ncsde::baselines::EstimatorKind;
use ncsde::config::{BasisConfig, ModelConfig};
use ncsde::engine::{FitResult, LambdaMode};
use ncsde::simulate::ArModel;
use serde::{Deserialize, Serialize};

/// Mixture that generated a simulated dataset; enables true-SDF comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    pub models: Vec<ArModel>,
    pub probs: Vec<f64>,
    /// 1-based model index of each series.
    pub labels: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetInfo {
    pub id: String,
    /// SHA-256 of the stored CSV.
    pub hash: String,
    pub n: usize,
    pub m: usize,
    pub labels: Vec<String>,
    pub created_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Reference>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetList {
    pub datasets: Vec<DatasetInfo>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateRequest {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    #[serde(default)]
    pub models: Option<Vec<ArModel>>,
    #[serde(default)]
    pub probs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodogramView {
    pub dataset_id: String,
    pub truncate: Option<usize>,
    pub grid: Vec<f64>,
    pub labels: Vec<String>,
    /// One row per frequency, one column per series.
    pub ordinates: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowView {
    pub dataset_id: String,
    pub kmax: usize,
    pub wss: Vec<f64>,
    pub suggested_k: usize,
    pub reliable: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRequest {
    pub dataset_id: String,
    pub config: ModelConfig,
    #[serde(default)]
    pub truncate: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitAccepted {
    pub job_id: String,
    pub location: String,
}

/// Scalar outcome of a finished fit; the coefficients live behind the
/// result endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSummary {
    pub lambda: f64,
    pub deviance: f64,
    pub df: f64,
    pub aic: f64,
    pub converged: bool,
    pub iterations: usize,
    pub skipped_blocks: usize,
    pub objective_trace: Vec<f64>,
    pub lambda_trace: Vec<f64>,
    #[serde(default)]
    pub aic_grid: Vec<(f64, f64)>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl From<&FitResult> for FitSummary {
    fn from(r: &FitResult) -> Self {
        Self {
            lambda: r.lambda,
            deviance: r.deviance,
            df: r.df,
            aic: r.aic,
            converged: r.converged,
            iterations: r.iterations,
            skipped_blocks: r.skipped_blocks,
            objective_trace: r.objective_trace.clone(),
            lambda_trace: r.lambda_trace.clone(),
            aic_grid: r.aic_grid.clone(),
            warnings: r.warnings.clone(),
        }
    }
}

/// Job lifecycle. Transitions only move forward:
/// queued -> running -> done | failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running {
        /// Outer iterations so far, counted across all grid candidates.
        iteration: usize,
        objective: f64,
        lambda: f64,
        /// Grid candidate being fitted; always 0 outside grid mode.
        candidate: usize,
        /// Objective after each iteration of the current candidate.
        trace: Vec<f64>,
    },
    Done {
        summary: FitSummary,
    },
    Failed {
        reason: String,
    },
}

impl JobState {
    pub fn is_terminal(&self) -> bool {
        matches!(self, JobState::Done { .. } | JobState::Failed { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            JobState::Queued => "queued",
            JobState::Running { .. } => "running",
            JobState::Done { .. } => "done",
            JobState::Failed { .. } => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitView {
    pub id: String,
    pub dataset_id: String,
    pub config: ModelConfig,
    #[serde(default)]
    pub truncate: Option<usize>,
    pub created_at: u64,
    #[serde(flatten)]
    pub state: JobState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitList {
    pub fits: Vec<FitView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdfView {
    pub fit_id: String,
    pub grid: Vec<f64>,
    pub labels: Vec<String>,
    /// Fitted densities: one row per frequency, one column per series.
    pub sdf: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoresView {
    pub fit_id: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub labels: Vec<String>,
    /// One row per series.
    pub scores: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeView {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DendrogramView {
    pub fit_id: String,
    pub labels: Vec<String>,
    /// Leaves are `0..m`; the cluster made by merge `s` has id `m + s`.
    pub merges: Vec<MergeView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Cut at `k` when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clusters: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClustersView {
    pub fit_id: String,
    pub k: usize,
    pub labels: Vec<String>,
    pub clusters: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareRequest {
    pub dataset_id: String,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(default)]
    pub basis: BasisConfig,
    #[serde(default)]
    pub lambda: LambdaMode,
    #[serde(default)]
    pub truncate: Option<usize>,
    /// Number of clusters to cut; defaults to the reference model count,
    /// else `K`.
    #[serde(default)]
    pub clusters: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorView {
    pub kind: EstimatorKind,
    pub labels: Vec<usize>,
    /// Largest canonical angle to the true log-SDFs, in degrees; absent without
    /// a reference or when the true log-SDF matrix is rank deficient.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ari: Option<f64>,
    /// Series whose separate fit did not converge.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flagged: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareView {
    pub dataset_id: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub clusters: usize,
    pub estimators: Vec<EstimatorView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub workers: usize,
    pub queue_capacity: usize,
}
