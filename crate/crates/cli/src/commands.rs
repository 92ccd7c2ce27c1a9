//! Subcommand implementations. Each command validates its configuration and
//! parses every input before creating any output file, so a failed
//! validation never leaves partial results behind.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use sisr_core::{
    fitness_estimate, run_filter, simulate_recursive, state_covariance, Dataset, Error,
    FitnessMetadata, ReportSummary, RunMetadata, VariationalPosterior,
};

use crate::config::RunConfig;

/// Command failure, carrying the process exit code: 2 for configuration
/// errors, 3 for data errors, 4 for numeric failures.
#[derive(Debug, Clone, PartialEq)]
pub enum CmdError {
    Config(String),
    Data(String),
    Numeric(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Config(_) => 2,
            CmdError::Data(_) => 3,
            CmdError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CmdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CmdError::Config(m) => write!(f, "config error: {m}"),
            CmdError::Data(m) => write!(f, "data error: {m}"),
            CmdError::Numeric(m) => write!(f, "numeric error: {m}"),
        }
    }
}

impl std::error::Error for CmdError {}

/// Classifies a core error raised while running (as opposed to while
/// validating configuration or parsing files).
fn runtime_error(e: Error) -> CmdError {
    match e {
        Error::NotPositiveDefinite { .. }
        | Error::WeightUnderflow { .. }
        | Error::NonFiniteSample { .. } => CmdError::Numeric(e.to_string()),
        other => CmdError::Data(other.to_string()),
    }
}

fn read_file(path: &Path) -> Result<String, CmdError> {
    fs::read_to_string(path).map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CmdError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CmdError::Data(format!("{}: {e}", parent.display())))?;
        }
    }
    fs::write(path, contents).map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))
}

pub fn load_config(path: &Path, seed_override: Option<u64>) -> Result<RunConfig, CmdError> {
    let text =
        fs::read_to_string(path).map_err(|e| CmdError::Config(format!("{}: {e}", path.display())))?;
    let mut config = RunConfig::from_json(&text)?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    Ok(config)
}

// ---------------------------------------------------------------------------
// Scalar series CSV (`t,<name>` with 1-based steps)
// ---------------------------------------------------------------------------

fn series_csv(name: &str, values: &[f64]) -> String {
    let mut out = format!("t,{name}\n");
    for (i, v) in values.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, v));
    }
    out
}

fn parse_series_csv(text: &str, name: &str, path: &Path) -> Result<Vec<f64>, CmdError> {
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| CmdError::Data(format!("{}: empty file", path.display())))?
        .1;
    let expected = format!("t,{name}");
    if header.trim() != expected {
        return Err(CmdError::Data(format!(
            "{}: line 1: expected header `{expected}`, found `{header}`",
            path.display()
        )));
    }
    let mut values = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let (t_field, v_field) = (fields.next(), fields.next());
        let (t_field, v_field) = match (t_field, v_field, fields.next()) {
            (Some(t), Some(v), None) => (t, v),
            _ => {
                return Err(CmdError::Data(format!(
                    "{}: line {lineno}: expected two fields",
                    path.display()
                )))
            }
        };
        let step: usize = t_field.trim().parse().map_err(|_| {
            CmdError::Data(format!(
                "{}: line {lineno}: invalid step `{t_field}`",
                path.display()
            ))
        })?;
        if step != values.len() + 1 {
            return Err(CmdError::Data(format!(
                "{}: line {lineno}: steps must be consecutive from 1, found {step}",
                path.display()
            )));
        }
        let value: f64 = v_field.trim().parse().map_err(|_| {
            CmdError::Data(format!(
                "{}: line {lineno}: invalid value `{v_field}`",
                path.display()
            ))
        })?;
        values.push(value);
    }
    if values.is_empty() {
        return Err(CmdError::Data(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok(values)
}

// ---------------------------------------------------------------------------
// Matrix CSV (dataset layout, any finite values; used for truth files)
// ---------------------------------------------------------------------------

fn parse_matrix_csv(text: &str, path: &Path) -> Result<(Vec<String>, DMatrix<f64>), CmdError> {
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| CmdError::Data(format!("{}: empty file", path.display())))?
        .1;
    let labels: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let n = labels.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n {
            return Err(CmdError::Data(format!(
                "{}: line {lineno}: expected {n} cells, found {}",
                path.display(),
                fields.len()
            )));
        }
        let mut row = Vec::with_capacity(n);
        for cell in fields {
            let v: f64 = cell.trim().parse().map_err(|_| {
                CmdError::Data(format!(
                    "{}: line {lineno}: invalid number `{cell}`",
                    path.display()
                ))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CmdError::Data(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    let horizon = rows.len();
    let matrix = DMatrix::from_fn(n, horizon, |d, t| rows[t][d]);
    Ok((labels, matrix))
}

fn matrix_csv(labels: &[String], matrix: &DMatrix<f64>) -> String {
    let mut out = labels.join(",");
    out.push('\n');
    for t in 0..matrix.ncols() {
        let row: Vec<String> = (0..matrix.nrows())
            .map(|d| format!("{}", matrix[(d, t)]))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SimulateMetadata {
    model: String,
    alpha: f64,
    beta: f64,
    horizon: usize,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    jitter: Option<f64>,
}

/// Simulates latent states and observations; writes `latent.csv`,
/// `observations.csv`, and `simulate.json` into the output directory.
pub fn cmd_simulate(config: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>, CmdError> {
    let channel = config.channel()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let horizon = config.horizon;

    let (latent_csv, observations_csv, meta) = if config.is_var() {
        let (model, labels) = config.var_model()?;
        let states = sisr_core::simulate_var(&model, horizon, &mut rng).map_err(runtime_error)?;
        let mut observations = DMatrix::zeros(model.dim(), horizon);
        for t in 0..horizon {
            for d in 0..model.dim() {
                observations[(d, t)] = channel.observe(states[(d, t)], &mut rng);
            }
        }
        let meta = SimulateMetadata {
            model: model.describe(),
            alpha: channel.noise().alpha(),
            beta: channel.noise().beta(),
            horizon,
            seed: config.seed,
            jitter: None,
        };
        (
            matrix_csv(&labels, &states),
            matrix_csv(&labels, &observations),
            meta,
        )
    } else {
        let model = config.arma_model()?;
        let trajectory =
            simulate_recursive(&model, horizon, &mut rng).map_err(runtime_error)?;
        let observations: Vec<f64> = trajectory
            .states
            .iter()
            .map(|&x| channel.observe(x, &mut rng))
            .collect();
        let meta = SimulateMetadata {
            model: model.describe(),
            alpha: channel.noise().alpha(),
            beta: channel.noise().beta(),
            horizon,
            seed: config.seed,
            jitter: trajectory.jitter,
        };
        (
            series_csv("x", &trajectory.states),
            series_csv("z", &observations),
            meta,
        )
    };

    let latent_path = out_dir.join("latent.csv");
    let observations_path = out_dir.join("observations.csv");
    let meta_path = out_dir.join("simulate.json");
    write_file(&latent_path, &latent_csv)?;
    write_file(&observations_path, &observations_csv)?;
    write_file(
        &meta_path,
        &serde_json::to_string_pretty(&meta).expect("metadata serializes"),
    )?;
    Ok(vec![latent_path, observations_path, meta_path])
}

// ---------------------------------------------------------------------------
// filter
// ---------------------------------------------------------------------------

/// Filters an observation file; writes `report.csv` and `report.json`.
/// The RMSE columns appear only when a truth file is supplied.
pub fn cmd_filter(
    config: &RunConfig,
    observations_path: &Path,
    truth_path: Option<&Path>,
    out_dir: &Path,
    with_fitness: bool,
) -> Result<Vec<PathBuf>, CmdError> {
    let model = config.arma_model()?;
    let filter_config = config.filter_config(config.seed)?;

    let observations = parse_series_csv(&read_file(observations_path)?, "z", observations_path)?;
    for (i, &z) in observations.iter().enumerate() {
        if !z.is_finite() || z < 0.0 {
            return Err(CmdError::Data(format!(
                "{}: line {}: negative observation {z}",
                observations_path.display(),
                i + 2
            )));
        }
    }
    let truth = truth_path
        .map(|p| parse_series_csv(&read_file(p)?, "x", p))
        .transpose()?;
    if let Some(xs) = &truth {
        if xs.len() != observations.len() {
            return Err(CmdError::Data(format!(
                "truth length {} does not match observations length {}",
                xs.len(),
                observations.len()
            )));
        }
    }

    let mut report = run_filter(&model, &filter_config, &observations, truth.as_deref())
        .map_err(runtime_error)?;

    if with_fitness {
        let cov = state_covariance(&model, observations.len()).map_err(runtime_error)?;
        let posterior = VariationalPosterior::new(cov, *filter_config.channel.noise())
            .map_err(runtime_error)?;
        // A separate stream keyed off the run seed keeps the filter results
        // independent of whether fitness is requested.
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x66D5_A7E5);
        let fitness = fitness_estimate(
            &posterior,
            &filter_config.channel,
            &observations,
            2000,
            &mut rng,
        )
        .map_err(runtime_error)?;
        report.metadata.fitness = Some(FitnessMetadata {
            estimate: fitness.estimate,
            std_error: fitness.std_error,
            samples: fitness.samples,
        });
    }

    let report_path = out_dir.join("report.csv");
    let meta_path = out_dir.join("report.json");
    write_file(&report_path, &report.csv_string())?;
    write_file(&meta_path, &report.metadata_json())?;
    Ok(vec![report_path, meta_path])
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

/// One aggregated row of the evaluation table.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRow {
    pub model: String,
    pub resampling: String,
    pub runs: usize,
    pub rmse_median: Option<f64>,
    pub rmse_iqr: Option<f64>,
    pub ess_mean: f64,
    pub resampled_mean: f64,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < n {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

/// Aggregates report files (each with its JSON sidecar) into per-model rows:
/// median and IQR of the final RMSE across seeds, mean ESS, and mean
/// resampled count per step. Mixing reports with and without truth columns
/// is rejected.
pub fn evaluate_reports(paths: &[PathBuf]) -> Result<Vec<EvaluationRow>, CmdError> {
    if paths.is_empty() {
        return Err(CmdError::Data("no report files given".into()));
    }
    let mut entries: Vec<(RunMetadata, ReportSummary)> = Vec::new();
    for path in paths {
        let summary = ReportSummary::parse_csv(&read_file(path)?)
            .map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))?;
        let sidecar = path.with_extension("json");
        let metadata: RunMetadata = serde_json::from_str(&read_file(&sidecar)?)
            .map_err(|e| CmdError::Data(format!("{}: {e}", sidecar.display())))?;
        entries.push((metadata, summary));
    }
    let with_truth = entries[0].1.has_truth;
    if entries.iter().any(|(_, s)| s.has_truth != with_truth) {
        return Err(CmdError::Data(
            "cannot mix reports with and without truth columns".into(),
        ));
    }

    let mut keys: Vec<(String, String)> = entries
        .iter()
        .map(|(m, _)| (m.model.clone(), m.resampling.clone()))
        .collect();
    keys.sort();
    keys.dedup();

    let rows = keys
        .into_iter()
        .map(|(model, resampling)| {
            let group: Vec<&(RunMetadata, ReportSummary)> = entries
                .iter()
                .filter(|(m, _)| m.model == model && m.resampling == resampling)
                .collect();
            let runs = group.len();
            let mut rmses: Vec<f64> = group.iter().filter_map(|(_, s)| s.final_rmse).collect();
            rmses.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let (rmse_median, rmse_iqr) = if rmses.is_empty() {
                (None, None)
            } else {
                (
                    Some(quantile(&rmses, 0.5)),
                    Some(quantile(&rmses, 0.75) - quantile(&rmses, 0.25)),
                )
            };
            let ess_mean = group.iter().map(|(_, s)| s.mean_ess).sum::<f64>() / runs as f64;
            let resampled_mean = group
                .iter()
                .map(|(_, s)| s.total_resampled as f64 / s.horizon as f64)
                .sum::<f64>()
                / runs as f64;
            EvaluationRow {
                model,
                resampling,
                runs,
                rmse_median,
                rmse_iqr,
                ess_mean,
                resampled_mean,
            }
        })
        .collect();
    Ok(rows)
}

fn csv_quote(field: &str) -> String {
    if field.contains(',') || field.contains('"') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

pub fn summary_csv(rows: &[EvaluationRow]) -> String {
    let mut out = String::from("model,resampling,runs,rmse_median,rmse_iqr,ess_mean,resampled_mean\n");
    for r in rows {
        let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            csv_quote(&r.model),
            r.resampling,
            r.runs,
            fmt_opt(r.rmse_median),
            fmt_opt(r.rmse_iqr),
            r.ess_mean,
            r.resampled_mean
        ));
    }
    out
}

/// Evaluates report files and renders the summary table; optionally writes
/// it as CSV.
pub fn cmd_evaluate(paths: &[PathBuf], out_file: Option<&Path>) -> Result<String, CmdError> {
    let rows = evaluate_reports(paths)?;
    let csv = summary_csv(&rows);
    if let Some(path) = out_file {
        write_file(path, &csv)?;
    }
    Ok(csv)
}

// ---------------------------------------------------------------------------
// impute
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ImputeMetadata {
    model: String,
    alpha: f64,
    beta: f64,
    n_particles: usize,
    resampling: String,
    seed: u64,
    horizon: usize,
    series: Vec<String>,
    masked_cells: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    masked_cell_rmse: Option<f64>,
}

/// Imputes missing cells of a dataset with filter estimates; writes
/// `imputed.csv` and `impute.json`. When a latent truth file is supplied the
/// metadata reports the RMSE over the masked cells.
pub fn cmd_impute(
    config: &RunConfig,
    data_path: &Path,
    truth_path: Option<&Path>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, CmdError> {
    let (model, labels) = config.var_model()?;
    let filter_config = config.filter_config(config.seed)?;

    let data = Dataset::from_csv(&read_file(data_path)?)
        .map_err(|e| CmdError::Data(format!("{}: {e}", data_path.display())))?;
    if data.labels() != labels.as_slice() {
        return Err(CmdError::Config(format!(
            "model.labels {:?} do not match dataset labels {:?}",
            labels,
            data.labels()
        )));
    }

    let truth = truth_path
        .map(|p| -> Result<DMatrix<f64>, CmdError> {
            let (truth_labels, matrix) = parse_matrix_csv(&read_file(p)?, p)?;
            if truth_labels != labels {
                return Err(CmdError::Data(format!(
                    "{}: truth labels {truth_labels:?} do not match dataset labels",
                    p.display()
                )));
            }
            if matrix.ncols() != data.horizon() {
                return Err(CmdError::Data(format!(
                    "{}: truth horizon {} does not match dataset horizon {}",
                    p.display(),
                    matrix.ncols(),
                    data.horizon()
                )));
            }
            Ok(matrix)
        })
        .transpose()?;

    let reports =
        sisr_core::filter_dataset(&model, &data, &filter_config, truth.as_ref())
            .map_err(runtime_error)?;
    let imputed = sisr_core::impute(&reports, &data).map_err(runtime_error)?;

    let masked_cell_rmse = truth.as_ref().map(|xs| {
        let mut acc = 0.0;
        let mut count = 0usize;
        for d in 0..data.n_series() {
            for t in 0..data.horizon() {
                if data.is_missing(d, t) {
                    let err = imputed.values()[(d, t)] - xs[(d, t)];
                    acc += err * err;
                    count += 1;
                }
            }
        }
        if count == 0 {
            0.0
        } else {
            (acc / count as f64).sqrt()
        }
    });

    let meta = ImputeMetadata {
        model: model.describe(),
        alpha: filter_config.channel.noise().alpha(),
        beta: filter_config.channel.noise().beta(),
        n_particles: filter_config.n_particles,
        resampling: filter_config.resampling.name().to_string(),
        seed: config.seed,
        horizon: data.horizon(),
        series: labels,
        masked_cells: data.missing_count(),
        masked_cell_rmse,
    };

    let imputed_path = out_dir.join("imputed.csv");
    let meta_path = out_dir.join("impute.json");
    write_file(&imputed_path, &imputed.to_csv())?;
    write_file(
        &meta_path,
        &serde_json::to_string_pretty(&meta).expect("metadata serializes"),
    )?;
    Ok(vec![imputed_path, meta_path])
}
