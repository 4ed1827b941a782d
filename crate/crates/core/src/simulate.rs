//! AR(3) mixtures, their true spectral densities, and the Monte Carlo study
//! comparing the six estimators.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, clustering_points, EstimatorKind, NsdeConfig};
use crate::clustering::{cut, euclidean_distances, ward_linkage};
use crate::config::BasisConfig;
use crate::engine::{FitConfig, LambdaMode};
use crate::error::{Error, Result};
use crate::metrics::{adjusted_rand_index, subspace_angle};
use crate::spectral::{periodogram, FrequencyGrid, TimeSeriesSet};

/// Samples generated and discarded before each series.
pub const BURN_IN: usize = 1000;

/// Stationary AR(3) model `X_t = sum_k phi_k X_{t-k} + e_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ArModelRaw", into = "ArModelRaw")]
pub struct ArModel {
    phi: [f64; 3],
    sigma2: f64,
}

#[derive(Serialize, Deserialize)]
struct ArModelRaw {
    phi: [f64; 3],
    #[serde(default = "one")]
    sigma2: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<ArModelRaw> for ArModel {
    type Error = Error;
    fn try_from(raw: ArModelRaw) -> Result<Self> {
        ArModel::new(raw.phi, raw.sigma2)
    }
}

impl From<ArModel> for ArModelRaw {
    fn from(m: ArModel) -> Self {
        ArModelRaw {
            phi: m.phi,
            sigma2: m.sigma2,
        }
    }
}

impl ArModel {
    /// Rejects models with a root of `1 - sum_k phi_k z^k` on or inside the
    /// unit circle.
    pub fn new(phi: [f64; 3], sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) || phi.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config(format!("invalid AR parameters {phi:?}, sigma2 = {sigma2}")));
        }
        let kappa = reflection_coefficients(phi);
        if kappa.iter().any(|k| k.abs() >= 1.0) {
            return Err(Error::NotStationary(format!(
                "phi = {phi:?} has reflection coefficients {kappa:?}"
            )));
        }
        Ok(Self { phi, sigma2 })
    }

    pub fn phi(&self) -> [f64; 3] {
        self.phi
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// `sigma2 / |1 - sum_k phi_k exp(-2 pi i k w)|^2` at frequency `w` in
    /// cycles per sample.
    pub fn sdf_at(&self, omega: f64) -> f64 {
        let (mut re, mut im) = (1.0, 0.0);
        for (k, &p) in self.phi.iter().enumerate() {
            let arg = 2.0 * PI * (k + 1) as f64 * omega;
            re -= p * arg.cos();
            im += p * arg.sin();
        }
        self.sigma2 / (re * re + im * im)
    }

    /// Series of length `n` driven by Gaussian innovations from `rng`, after
    /// a zero-initialized burn-in.
    pub fn generate_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let sd = self.sigma2.sqrt();
        let [p1, p2, p3] = self.phi;
        let (mut x1, mut x2, mut x3) = (0.0, 0.0, 0.0);
        let mut out = Vec::with_capacity(n);
        for t in 0..BURN_IN + n {
            let e: f64 = StandardNormal.sample(rng);
            let x = p1 * x1 + p2 * x2 + p3 * x3 + sd * e;
            x3 = x2;
            x2 = x1;
            x1 = x;
            if t >= BURN_IN {
                out.push(x);
            }
        }
        out
    }
}

/// Reflection coefficients from the step-down recursion; the model is
/// stationary exactly when all of them lie strictly inside (-1, 1).
pub fn reflection_coefficients(phi: [f64; 3]) -> Vec<f64> {
    let mut a = phi.to_vec();
    let mut out = Vec::with_capacity(3);
    while let Some(&kappa) = a.last() {
        out.push(kappa);
        if kappa.abs() >= 1.0 {
            break;
        }
        let p = a.len();
        let den = 1.0 - kappa * kappa;
        a = (0..p - 1).map(|k| (a[k] + kappa * a[p - 2 - k]) / den).collect();
    }
    out.reverse();
    out
}

/// True spectral density on every grid frequency.
pub fn true_sdf(model: &ArModel, grid: &FrequencyGrid) -> Vec<f64> {
    grid.omegas().iter().map(|&w| model.sdf_at(w)).collect()
}

/// Reproducible series of length `n` for `seed`.
pub fn ar3_generate(model: &ArModel, n: usize, seed: u64) -> Vec<f64> {
    model.generate_with(n, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// The three default models.
pub fn default_models() -> Vec<ArModel> {
    [[0.1, 0.5, 0.1], [0.1, 0.1, 0.5], [0.5, 0.1, 0.1]]
        .into_iter()
        .map(|phi| ArModel::new(phi, 1.0).expect("default models are stationary"))
        .collect()
}

/// Random mixture of AR(3) models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureDesign {
    pub models: Vec<ArModel>,
    pub probs: Vec<f64>,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
}

impl MixtureDesign {
    /// Three default models with equal probabilities.
    pub fn standard(n: usize, m: usize, seed: u64) -> Self {
        Self {
            models: default_models(),
            probs: vec![1.0 / 3.0; 3],
            n,
            m,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() || self.models.len() != self.probs.len() {
            return Err(Error::Config(format!(
                "{} models with {} probabilities",
                self.models.len(),
                self.probs.len()
            )));
        }
        if self.probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Config("probabilities must be non-negative".into()));
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("probabilities sum to {total}, not 1")));
        }
        if self.m == 0 {
            return Err(Error::Size("m must be positive".into()));
        }
        if self.n < crate::spectral::MIN_SERIES_LEN {
            return Err(Error::Size(format!("n = {} is too short", self.n)));
        }
        Ok(())
    }
}

/// Draws `m` labels (1-based model indices) and one series per label. Labels
/// come from stream 0 of the seed; series `i` uses stream `i + 1`, so each
/// series is independent of `m`.
pub fn generate_mixture(design: &MixtureDesign) -> Result<(TimeSeriesSet, Vec<usize>)> {
    design.validate()?;
    let mut label_rng = ChaCha8Rng::seed_from_u64(design.seed);
    let labels: Vec<usize> = (0..design.m).map(|_| draw_label(&design.probs, &mut label_rng)).collect();
    let columns: Vec<Vec<f64>> = labels
        .par_iter()
        .enumerate()
        .map(|(i, &l)| {
            let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
            rng.set_stream(i as u64 + 1);
            design.models[l - 1].generate_with(design.n, &mut rng)
        })
        .collect();
    Ok((TimeSeriesSet::from_columns(&columns)?, labels))
}

fn draw_label<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k + 1;
        }
    }
    // Round-off in the cumulative sum: last model with positive weight.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0) + 1
}

/// `n_freq x m` matrix of true log densities for labelled series.
pub fn true_log_sdf_matrix(models: &[ArModel], labels: &[usize], grid: &FrequencyGrid) -> DMatrix<f64> {
    let cols: Vec<Vec<f64>> = models.iter().map(|m| true_sdf(m, grid)).collect();
    DMatrix::from_fn(grid.len(), labels.len(), |j, i| cols[labels[i] - 1][j].ln())
}

/// Settings shared by all runs of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default)]
    pub basis: BasisConfig,
    /// Rank for the low-rank estimators; defaults to the number of models.
    #[serde(default, rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default)]
    pub lambda: LambdaMode,
    #[serde(default = "default_max_outer")]
    pub max_outer_iters: usize,
    #[serde(default)]
    pub models: Option<Vec<ArModel>>,
    #[serde(default)]
    pub probs: Option<Vec<f64>>,
}

fn default_max_outer() -> usize {
    500
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            basis: BasisConfig::default(),
            k: None,
            lambda: LambdaMode::default(),
            max_outer_iters: default_max_outer(),
            models: None,
            probs: None,
        }
    }
}

impl StudyConfig {
    /// Mixture design of one study run.
    pub fn design(&self, n: usize, m: usize, seed: u64) -> MixtureDesign {
        let mut d = MixtureDesign::standard(n, m, seed);
        if let Some(models) = &self.models {
            d.models = models.clone();
            d.probs = vec![1.0 / models.len() as f64; models.len()];
        }
        if let Some(p) = &self.probs {
            d.probs = p.clone();
        }
        d
    }
}

/// The nine default `(n, m)` cells.
pub fn default_cells() -> Vec<(usize, usize)> {
    let mut cells = Vec::new();
    for n in [100, 200, 400] {
        for m in [6, 15, 30] {
            cells.push((n, m));
        }
    }
    cells
}

/// Scores of one estimator in one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunScore {
    pub ari: f64,
    pub angle: f64,
}

/// Outcome of one simulated data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RunOutcome {
    /// Fewer than two models present; no clustering signal.
    Excluded,
    /// Per-estimator score, or the error message.
    Scored(Vec<(EstimatorKind, std::result::Result<RunScore, String>)>),
}

/// Runs all six estimators on one simulated data set and scores them
/// against the truth.
pub fn run_once(n: usize, m: usize, seed: u64, config: &StudyConfig) -> Result<RunOutcome> {
    let design = config.design(n, m, seed);
    let (ts, labels) = generate_mixture(&design)?;
    let mut present: Vec<usize> = labels.clone();
    present.sort_unstable();
    present.dedup();
    let gold_k = present.len();
    if gold_k < 2 {
        return Ok(RunOutcome::Excluded);
    }
    let ps = periodogram(&ts)?;
    let (basis, penalty) = config.basis.build(ps.grid())?;
    let truth = true_log_sdf_matrix(&design.models, &labels, ps.grid());
    let k = config.k.unwrap_or(design.models.len());
    let fit_config = FitConfig {
        max_outer_iters: config.max_outer_iters,
        ..FitConfig::new(k, config.lambda.clone())
    };
    let nsde = NsdeConfig::default();

    let score = |kind: EstimatorKind| -> Result<RunScore> {
        let est = match kind {
            EstimatorKind::Nsde => baselines::estimate_nsde(&ps, &basis, &nsde)?,
            EstimatorKind::TsvdNsde => baselines::estimate_tsvd_nsde(&ps, &basis, k, &nsde)?,
            other => baselines::estimate(other, &ps, &basis, &penalty, &fit_config)?,
        };
        let points = clustering_points(&est);
        let dend = ward_linkage(&euclidean_distances(&points)?, None)?;
        let found = cut(&dend, gold_k)?;
        let ari = adjusted_rand_index(&labels, &found.labels)?;
        let angle = subspace_angle(&truth, &est.log_values(), gold_k)?;
        Ok(RunScore { ari, angle })
    };
    Ok(RunOutcome::Scored(
        EstimatorKind::ALL
            .iter()
            .map(|&kind| (kind, score(kind).map_err(|e| e.to_string())))
            .collect(),
    ))
}

/// Mean and standard error of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    /// `se = sd / sqrt(N)` with the `N - 1` sample standard deviation; NaN
    /// when fewer than two values.
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n;
        if values.len() < 2 {
            return Self { mean, se: f64::NAN };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            se: (var / n).sqrt(),
        }
    }

    fn display(&self, digits: usize) -> String {
        format!("{:.*}({:.*})", digits, self.mean, digits, self.se)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub kind: EstimatorKind,
    pub ari: MeanSe,
    pub angle: MeanSe,
    /// Runs that produced a score.
    pub runs_ok: usize,
    /// Runs where this estimator failed.
    pub runs_failed: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub n: usize,
    pub m: usize,
    /// Runs with fewer than two models present.
    pub excluded: usize,
    pub seeds: Vec<u64>,
    pub estimators: Vec<EstimatorSummary>,
}

impl CellReport {
    pub fn label(&self) -> String {
        format!("ts-{}-{:02}", self.n, self.m)
    }

    pub fn summary(&self, kind: EstimatorKind) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.kind == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub master_seed: u64,
    pub runs: usize,
    pub cells: Vec<CellReport>,
}

/// Which metric a wide table shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Ari,
    Angle,
}

impl StudyReport {
    pub fn cell(&self, n: usize, m: usize) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.n == n && c.m == m)
    }

    /// Long format: one row per `(cell, estimator)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,m,estimator,ari_mean,ari_se,angle_mean,angle_se,runs_ok,runs_failed,excluded\n");
        for c in &self.cells {
            for e in &c.estimators {
                let _ = writeln!(
                    out,
                    "{},{},{},{:?},{:?},{:?},{:?},{},{},{}",
                    c.n,
                    c.m,
                    e.kind,
                    e.ari.mean,
                    e.ari.se,
                    e.angle.mean,
                    e.angle.se,
                    e.runs_ok,
                    e.runs_failed,
                    c.excluded
                );
            }
        }
        out
    }

    /// Wide format: rows `ts-n-m`, one `mean(se)` column per estimator.
    pub fn to_wide_csv(&self, metric: Metric) -> String {
        let mut out = String::from("cell");
        for kind in EstimatorKind::ALL {
            let _ = write!(out, ",{kind}");
        }
        out.push('\n');
        for c in &self.cells {
            out.push_str(&c.label());
            for kind in EstimatorKind::ALL {
                let cell = c.summary(kind).map_or_else(String::new, |e| match metric {
                    Metric::Ari => e.ari.display(3),
                    Metric::Angle => e.angle.display(2),
                });
                let _ = write!(out, ",{cell}");
            }
            out.push('\n');
        }
        out
    }
}

/// Per-run seeds for cell `index`, derived from the master seed.
pub fn cell_seeds(master_seed: u64, index: usize, runs: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index as u64);
    (0..runs).map(|_| rng.next_u64()).collect()
}

/// Monte Carlo comparison of the six estimators over `cells`. Runs execute in
/// parallel; aggregation follows run order, so the report depends only on the
/// inputs.
pub fn run_study(cells: &[(usize, usize)], runs: usize, master_seed: u64, config: &StudyConfig) -> Result<StudyReport> {
    if runs < 2 {
        return Err(Error::Config(format!("at least 2 runs are required, got {runs}")));
    }
    if cells.is_empty() {
        return Err(Error::Config("no cells requested".into()));
    }
    let mut reports = Vec::with_capacity(cells.len());
    for (index, &(n, m)) in cells.iter().enumerate() {
        config.design(n, m, 0).validate()?;
        let seeds = cell_seeds(master_seed, index, runs);
        let outcomes: Vec<Result<RunOutcome>> = seeds.par_iter().map(|&s| run_once(n, m, s, config)).collect();
        reports.push(aggregate(n, m, seeds, outcomes));
    }
    Ok(StudyReport {
        master_seed,
        runs,
        cells: reports,
    })
}

fn aggregate(n: usize, m: usize, seeds: Vec<u64>, outcomes: Vec<Result<RunOutcome>>) -> CellReport {
    let mut excluded = 0;
    let mut ari: Vec<Vec<f64>> = vec![Vec::new(); 6];
    let mut angle: Vec<Vec<f64>> = vec![Vec::new(); 6];
    let mut errors: Vec<Vec<String>> = vec![Vec::new(); 6];
    for outcome in outcomes {
        match outcome {
            Ok(RunOutcome::Excluded) => excluded += 1,
            Ok(RunOutcome::Scored(scores)) => {
                for (idx, (_, score)) in scores.into_iter().enumerate() {
                    match score {
                        Ok(s) => {
                            ari[idx].push(s.ari);
                            angle[idx].push(s.angle);
                        }
                        Err(e) => errors[idx].push(e),
                    }
                }
            }
            Err(e) => {
                for errs in errors.iter_mut() {
                    errs.push(e.to_string());
                }
            }
        }
    }
    let estimators = EstimatorKind::ALL
        .iter()
        .enumerate()
        .map(|(idx, &kind)| EstimatorSummary {
            kind,
            ari: MeanSe::from_values(&ari[idx]),
            angle: MeanSe::from_values(&angle[idx]),
            runs_ok: ari[idx].len(),
            runs_failed: errors[idx].len(),
            errors: std::mem::take(&mut errors[idx]),
        })
        .collect();
    CellReport {
        n,
        m,
        excluded,
        seeds,
        estimators,
    }
}
