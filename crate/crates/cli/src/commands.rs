use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use ncsde::baselines::{clustering_points, estimate, EstimatorKind};
use ncsde::basis::{BasisMatrix, PenaltyMatrix};
use ncsde::clustering::{cut, elbow_analysis, euclidean_distances, ward_linkage, wss_curve};
use ncsde::config::{BasisConfig, ModelConfig, PenaltySpec};
use ncsde::engine::{self, FitConfig, LambdaMode};
use ncsde::io::{default_labels, read_series_csv, read_table, write_table, Table};
use ncsde::simulate::{default_cells, run_study, Metric, StudyConfig};
use ncsde::spectral::{periodogram, truncate_band, PeriodogramSet, TimeSeriesSet};
use serde::Serialize;

use crate::args::{parse_cells, ClusterArgs, CompareArgs, FitArgs, InputKind, KChoice, ModelArgs, PeriodogramArgs, ServeArgs, SimulateArgs};
use crate::error::{CliError, Result};
use crate::settings::Settings;

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn open_input(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| CliError::Input {
        path: path.to_path_buf(),
        source: e.into(),
    })
}

fn read_series(path: &Path) -> Result<TimeSeriesSet> {
    read_series_csv(open_input(path)?).map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })
}

fn read_matrix(path: &Path) -> Result<Table> {
    read_table(open_input(path)?).map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })
}

fn output_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Output {
        path: path.to_path_buf(),
        source,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(output_error(dir))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(output_error(path))
}

fn write_matrix(path: &Path, header: &[String], values: &DMatrix<f64>) -> Result<()> {
    let file = File::create(path).map_err(output_error(path))?;
    let mut out = BufWriter::new(file);
    write_table(&mut out, header, values).map_err(|e| CliError::Output {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })?;
    out.flush().map_err(output_error(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push(b'\n');
    write_bytes(path, &text)
}

/// `dir/report.csv` with suffix `ari.csv` gives `dir/report.ari.csv`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "output".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn parse_flag<T: FromStr<Err = ncsde::Error>>(value: &str, flag: &str) -> Result<T> {
    value.parse().map_err(|e| CliError::Usage(format!("--{flag}: {e}")))
}

fn grid_matrix(ps: &PeriodogramSet) -> DMatrix<f64> {
    DMatrix::from_column_slice(ps.n_freq(), 1, ps.grid().omegas())
}

/// Model settings after merging flags over the settings file.
struct Model {
    config: ModelConfig,
    truncate: Option<usize>,
}

fn resolve_model(args: &ModelArgs, settings: &Settings) -> Result<Model> {
    let k = args
        .k
        .or(settings.k)
        .ok_or_else(|| CliError::Usage("--K is required (flag or config file)".into()))?;
    let mut basis = BasisConfig::default();
    if let Some(l) = args.n_basis.or(settings.n_basis) {
        basis.n_basis = l;
    }
    if let Some(d) = args.degree.or(settings.degree) {
        basis.degree = d;
    }
    if let Some(p) = args.penalty.as_deref().or(settings.penalty.as_deref()) {
        basis.penalty = parse_flag::<PenaltySpec>(p, "penalty")?;
    }
    let lambda = match args.lambda.as_deref().or(settings.lambda.as_deref()) {
        Some(text) => parse_flag::<LambdaMode>(text, "lambda")?,
        None => LambdaMode::default(),
    };
    let mut fit = FitConfig::new(k, lambda);
    if let Some(n) = args.max_outer_iters.or(settings.max_outer_iters) {
        fit.max_outer_iters = n;
    }
    if let Some(t) = args.tol.or(settings.tol) {
        fit.tol = t;
    }
    Ok(Model {
        config: ModelConfig { basis, fit },
        truncate: args.truncate.or(settings.truncate),
    })
}

fn band(ts: &TimeSeriesSet, truncate: Option<usize>) -> Result<PeriodogramSet> {
    let ps = periodogram(ts)?;
    match truncate {
        Some(k) => truncate_band(&ps, k).map_err(|e| CliError::Usage(format!("--truncate: {e}"))),
        None => Ok(ps),
    }
}

/// Periodogram, basis and penalty for a validated model.
fn prepare(ts: &TimeSeriesSet, model: &Model) -> Result<(PeriodogramSet, BasisMatrix, PenaltyMatrix)> {
    let ps = band(ts, model.truncate)?;
    let l = model.config.basis.n_basis;
    if l > ps.n_freq() {
        return Err(CliError::Usage(format!(
            "--L {l} exceeds the {} available frequencies",
            ps.n_freq()
        )));
    }
    let (basis, penalty) = model.config.basis.build(ps.grid())?;
    model.config.fit.validate(basis.n_basis(), ps.n_series())?;
    Ok((ps, basis, penalty))
}

pub fn periodogram_cmd(args: &PeriodogramArgs, settings: &Settings) -> Result<()> {
    let ts = read_series(&args.input)?;
    let ps = band(&ts, args.truncate.or(settings.truncate))?;
    if let Some(parent) = args.output.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_matrix(&args.output, ts.labels(), ps.ordinates())?;
    write_matrix(&sibling(&args.output, "grid.csv"), &["omega".to_owned()], &grid_matrix(&ps))?;
    write_json(
        &sibling(&args.output, "meta.json"),
        &PeriodogramMeta {
            version: VERSION,
            input: &args.input,
            n: ts.len(),
            m: ts.n_series(),
            n_freq: ps.n_freq(),
            truncate: args.truncate.or(settings.truncate),
            labels: ts.labels(),
        },
    )
}

#[derive(Serialize)]
struct PeriodogramMeta<'a> {
    version: &'a str,
    input: &'a Path,
    n: usize,
    m: usize,
    n_freq: usize,
    truncate: Option<usize>,
    labels: &'a [String],
}

#[derive(Serialize)]
struct FitMeta<'a> {
    version: &'a str,
    input: &'a Path,
    n: usize,
    m: usize,
    n_freq: usize,
    truncate: Option<usize>,
    labels: &'a [String],
    config: &'a ModelConfig,
    converged: bool,
    iterations: usize,
    lambda: f64,
    deviance: f64,
    df: f64,
    aic: f64,
    skipped_blocks: usize,
    warnings: &'a [String],
}

#[derive(Serialize)]
struct Trace<'a> {
    objective: &'a [f64],
    lambda: &'a [f64],
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    aic_grid: &'a [(f64, f64)],
}

pub fn fit_cmd(args: &FitArgs, settings: &Settings) -> Result<()> {
    let model = resolve_model(&args.model, settings)?;
    let ts = read_series(&args.input)?;
    let (ps, basis, penalty) = prepare(&ts, &model)?;
    let result = engine::fit(&ps, &basis, &penalty, &model.config.fit)?;
    let coeff = &result.coefficients;

    let dir = &args.output;
    create_dir(dir)?;
    let k = coeff.rank();
    write_matrix(&dir.join("theta.csv"), &default_labels("theta", k), &coeff.theta)?;
    write_matrix(&dir.join("a.csv"), &default_labels("a", k), &coeff.a)?;
    write_matrix(&dir.join("sdf.csv"), ts.labels(), &engine::sdf(coeff, &basis)?)?;
    write_matrix(&dir.join("grid.csv"), &["omega".to_owned()], &grid_matrix(&ps))?;
    write_json(
        &dir.join("trace.json"),
        &Trace {
            objective: &result.objective_trace,
            lambda: &result.lambda_trace,
            aic_grid: &result.aic_grid,
        },
    )?;
    write_json(
        &dir.join("meta.json"),
        &FitMeta {
            version: VERSION,
            input: &args.input,
            n: ts.len(),
            m: ts.n_series(),
            n_freq: ps.n_freq(),
            truncate: model.truncate,
            labels: ts.labels(),
            config: &model.config,
            converged: result.converged,
            iterations: result.iterations,
            lambda: result.lambda,
            deviance: result.deviance,
            df: result.df,
            aic: result.aic,
            skipped_blocks: result.skipped_blocks,
            warnings: &result.warnings,
        },
    )?;
    if !result.converged {
        return Err(CliError::NotConverged {
            iterations: result.iterations,
            dir: dir.clone(),
        });
    }
    Ok(())
}

#[derive(Serialize)]
struct ClusterMeta<'a> {
    version: &'a str,
    input: &'a Path,
    input_kind: &'a str,
    m: usize,
    k: usize,
    kmax: usize,
    suggested_k: Option<usize>,
    reliable: Option<bool>,
}

/// Points to cluster (one row per series) and the series names.
fn cluster_points(table: Table, kind: InputKind, path: &Path) -> Result<(DMatrix<f64>, Vec<String>)> {
    match kind {
        InputKind::Scores => {
            let m = table.values.nrows();
            Ok((table.values, default_labels("s", m)))
        }
        InputKind::Sdf => {
            if let Some(v) = table.values.iter().find(|v| **v <= 0.0) {
                return Err(CliError::Usage(format!(
                    "{}: density values must be positive, found {v}",
                    path.display()
                )));
            }
            Ok((table.values.map(f64::ln).transpose(), table.header))
        }
    }
}

fn integer_csv(header: &[String], columns: &[Vec<usize>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    let rows = columns.first().map_or(0, Vec::len);
    for i in 0..rows {
        let row: Vec<String> = columns.iter().map(|c| c[i].to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn cluster_cmd(args: &ClusterArgs, settings: &Settings) -> Result<()> {
    let table = read_matrix(&args.input)?;
    let (points, names) = cluster_points(table, args.input_kind, &args.input)?;
    let m = points.nrows();
    if m == 0 {
        return Err(CliError::Usage(format!("{}: no series to cluster", args.input.display())));
    }
    let kmax = args.kmax.or(settings.kmax).unwrap_or(10).min(m);
    if kmax == 0 {
        return Err(CliError::Usage("--kmax must be positive".into()));
    }
    let (wss, suggested_k, reliable) = if kmax >= 3 {
        let res = elbow_analysis(&points, kmax)?;
        (res.wss, Some(res.suggested_k), Some(res.reliable))
    } else {
        (wss_curve(&points, kmax)?, None, None)
    };
    let k = match args.k {
        KChoice::Auto => suggested_k.ok_or_else(|| {
            CliError::Usage(format!("--k auto needs a WSS curve of length 3 or more, but kmax is {kmax}"))
        })?,
        KChoice::Fixed(k) if k == 0 || k > m => {
            return Err(CliError::Usage(format!("--k {k} must lie in 1..={m}")));
        }
        KChoice::Fixed(k) => k,
    };
    let dend = ward_linkage(&euclidean_distances(&points)?, Some(names))?;
    let labels = cut(&dend, k)?.labels;

    let dir = &args.output;
    create_dir(dir)?;
    write_bytes(&dir.join("labels.csv"), integer_csv(&["cluster".to_owned()], &[labels]).as_bytes())?;
    write_json(&dir.join("dendrogram.json"), &dend)?;
    let mut wss_text = String::from("k,wss\n");
    for (i, w) in wss.iter().enumerate() {
        let _ = writeln!(wss_text, "{},{w:?}", i + 1);
    }
    write_bytes(&dir.join("wss.csv"), wss_text.as_bytes())?;
    write_json(
        &dir.join("meta.json"),
        &ClusterMeta {
            version: VERSION,
            input: &args.input,
            input_kind: match args.input_kind {
                InputKind::Scores => "scores",
                InputKind::Sdf => "sdf",
            },
            m,
            k,
            kmax,
            suggested_k,
            reliable,
        },
    )
}

#[derive(Serialize)]
struct SimulateMeta<'a> {
    version: &'a str,
    seed: u64,
    runs: usize,
    cells: &'a [(usize, usize)],
    config: &'a StudyConfig,
}

pub fn simulate_cmd(args: &SimulateArgs, settings: &Settings) -> Result<()> {
    let cells: Vec<(usize, usize)> = match args.cells.as_deref().or(settings.cells.as_deref()) {
        Some(text) => parse_cells(text)
            .map_err(|e| CliError::Usage(format!("--cells: {e}")))?
            .into_iter()
            .map(|c| (c.n, c.m))
            .collect(),
        None => default_cells(),
    };
    let runs = args.runs.or(settings.runs).unwrap_or(100);
    let seed = args.seed.or(settings.seed).unwrap_or(1);
    let mut config = StudyConfig {
        k: args.k.or(settings.k),
        ..StudyConfig::default()
    };
    if let Some(l) = args.n_basis.or(settings.n_basis) {
        config.basis.n_basis = l;
    }
    if let Some(text) = args.lambda.as_deref().or(settings.lambda.as_deref()) {
        config.lambda = parse_flag(text, "lambda")?;
    }
    if let Some(n) = args.max_outer_iters.or(settings.max_outer_iters) {
        config.max_outer_iters = n;
    }
    let report = run_study(&cells, runs, seed, &config)?;

    if let Some(parent) = args.output.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_bytes(&args.output, report.to_csv().as_bytes())?;
    write_bytes(&sibling(&args.output, "ari.csv"), report.to_wide_csv(Metric::Ari).as_bytes())?;
    write_bytes(&sibling(&args.output, "angle.csv"), report.to_wide_csv(Metric::Angle).as_bytes())?;
    write_json(
        &sibling(&args.output, "meta.json"),
        &SimulateMeta {
            version: VERSION,
            seed,
            runs,
            cells: &cells,
            config: &config,
        },
    )
}

#[derive(Serialize)]
struct EstimatorLabels {
    kind: EstimatorKind,
    labels: Vec<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    flagged: Vec<usize>,
}

#[derive(Serialize)]
struct CompareOutput<'a> {
    version: &'a str,
    input: &'a Path,
    config: &'a ModelConfig,
    clusters: usize,
    labels: &'a [String],
    estimators: Vec<EstimatorLabels>,
}

pub fn compare_cmd(args: &CompareArgs, settings: &Settings) -> Result<()> {
    let model = resolve_model(&args.model, settings)?;
    let ts = read_series(&args.input)?;
    let (ps, basis, penalty) = prepare(&ts, &model)?;
    let m = ps.n_series();
    let clusters = args.clusters.unwrap_or(model.config.fit.k);
    if clusters == 0 || clusters > m {
        return Err(CliError::Usage(format!("--clusters {clusters} must lie in 1..={m}")));
    }
    let mut estimators = Vec::with_capacity(EstimatorKind::ALL.len());
    for kind in EstimatorKind::ALL {
        let est = estimate(kind, &ps, &basis, &penalty, &model.config.fit)?;
        let dend = ward_linkage(&euclidean_distances(&clustering_points(&est))?, None)?;
        estimators.push(EstimatorLabels {
            kind,
            labels: cut(&dend, clusters)?.labels,
            flagged: est.flagged,
        });
    }
    let dir = &args.output;
    create_dir(dir)?;
    let header: Vec<String> = estimators.iter().map(|e| e.kind.to_string()).collect();
    let columns: Vec<Vec<usize>> = estimators.iter().map(|e| e.labels.clone()).collect();
    write_bytes(&dir.join("labels.csv"), integer_csv(&header, &columns).as_bytes())?;
    write_json(
        &dir.join("compare.json"),
        &CompareOutput {
            version: VERSION,
            input: &args.input,
            config: &model.config,
            clusters,
            labels: ts.labels(),
            estimators,
        },
    )
}

pub fn serve_cmd(args: &ServeArgs, settings: &Settings) -> Result<()> {
    let host = args
        .host
        .clone()
        .or_else(|| settings.host.clone())
        .unwrap_or_else(|| "127.0.0.1".into());
    let port = args.port.or(settings.port).unwrap_or(8080);
    let data_dir = args
        .data_dir
        .clone()
        .or_else(|| settings.data_dir.clone())
        .unwrap_or_else(|| PathBuf::from("ncsde-data"));
    let mut config = ncsde_service::ServiceConfig::new(data_dir);
    if let Some(w) = args.workers.or(settings.workers) {
        config.workers = w;
    }
    if let Some(q) = args.queue_capacity.or(settings.queue_capacity) {
        config.queue_capacity = q;
    }
    config.cors_origin = args.cors_origin.clone().or_else(|| settings.cors_origin.clone());
    if config.workers == 0 || config.queue_capacity == 0 {
        return Err(CliError::Usage("--workers and --queue-capacity must be positive".into()));
    }

    let _ = tracing_subscriber::fmt().with_writer(std::io::stderr).try_init();
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    runtime.block_on(async move {
        let addr = format!("{host}:{port}");
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|source| CliError::Bind { addr, source })?;
        let state = ncsde_service::AppState::open(config).map_err(|e| CliError::Runtime(e.to_string()))?;
        let local = listener.local_addr().map_err(|e| CliError::Runtime(e.to_string()))?;
        eprintln!("listening on http://{local}");
        ncsde_service::serve(listener, state, shutdown_signal())
            .await
            .map_err(|e| CliError::Runtime(e.to_string()))
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut sig) => {
                sig.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = terminate => {}
    }
    eprintln!("shutting down");
}
