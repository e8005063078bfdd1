//! Command-line front end: argument and config-file parsing, dispatch to the
//! library, and the JSON result document.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dcov::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{
    cross_validate_alpha, fit, AlphaSpec, CvReport, CvSettings, FitConfig, FitSummary,
};
use crate::io::{emit_roc, emit_table, load_csv, write_json, LoadedCsv, ResponseSelector};
use crate::outlier::{
    detect, loo_dcor_scores, reduce, roc, OutlierConfig, OutlierScores, Reducer, RocResult,
};
use crate::sim::{
    generate_ar1_outlier_data, replicate, Method, Model, ModelSpec, PredictorDist,
    ReplicationReport,
};
use crate::stiefel::{OptimizerConfig, UpdateRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Estimate a d-dimensional reduction from a CSV file.
    Fit,
    /// Cross-validate the distance exponent on a CSV file.
    Cv,
    /// Monte Carlo replication on a simulated model.
    Simulate,
    /// Leave-one-out outlier scores and bootstrap flags for a CSV file.
    Outliers,
    /// ROC curve of outlier scores, from a CSV or the AR(1) design.
    Roc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateArg {
    Riemannian,
    Euclidean,
}

impl From<UpdateArg> for UpdateRule {
    fn from(u: UpdateArg) -> Self {
        match u {
            UpdateArg::Riemannian => UpdateRule::Riemannian,
            UpdateArg::Euclidean => UpdateRule::Euclidean,
        }
    }
}

fn parse_from_str<T: std::str::FromStr<Err = Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Every option of every subcommand. Options can also come from a flat
/// `key = value` file given by `--config`; flags on the command line win.
#[derive(Debug, Clone, Parser, Serialize)]
#[command(name = "rsdr", version, about, args_override_self = true)]
pub struct RunConfig {
    #[arg(value_enum)]
    pub command: Command,

    /// Input CSV with a header row.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Response column: header name or 0-based index (default: last column).
    #[arg(long)]
    pub response: Option<String>,
    /// Reduction dimension d.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Distance exponent in (0, 2) or `cv`; `simulate` accepts a comma list.
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long, default_value_t = 1e-6)]
    pub eta: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value_t = UpdateArg::Riemannian)]
    pub update: UpdateArg,
    /// Covariance ridge added before whitening.
    #[arg(long)]
    pub ridge: Option<f64>,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Outlier significance level.
    #[arg(long, default_value_t = 0.05)]
    pub gamma: f64,
    /// Bootstrap replicates for the outlier threshold.
    #[arg(long, default_value_t = 100)]
    pub boot: usize,
    #[arg(long, value_parser = parse_from_str::<Reducer>, default_value = "rsdr")]
    pub reducer: Reducer,
    #[arg(long, value_parser = parse_from_str::<Model>, default_value = "A")]
    pub model: Model,
    #[arg(long, value_parser = parse_from_str::<PredictorDist>, default_value = "gaussian")]
    pub dist: PredictorDist,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value_t = false, action = clap::ArgAction::Set)]
    pub contaminate: bool,
    #[arg(long, default_value_t = 30)]
    pub reps: usize,
    /// Planted outliers in the AR(1) design used by `roc` without `--input`.
    #[arg(long, default_value_t = 10)]
    pub n_outliers: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    #[serde(skip)]
    pub threads: Option<usize>,
    /// Standardize predictors to mean 0 and variance 1.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value_t = false, action = clap::ArgAction::Set)]
    pub standardize: bool,
    /// Result document path (default: standard output).
    #[arg(long)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
    /// CSV table: per-method summary for `simulate`, `fpr,tpr` points for `roc`.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

/// Description of the CSV a result was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputInfo {
    pub path: String,
    pub predictors: Vec<String>,
    pub response: String,
    pub n: usize,
    pub dropped_rows: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "lowercase")]
pub enum ResultPayload {
    Fit(FitSummary),
    Cv(CvReport),
    Simulate(ReplicationReport),
    Outliers(OutlierScores),
    Roc(RocResult),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultDocument {
    pub command: Command,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub input: Option<InputInfo>,
    pub result: ResultPayload,
}

/// Splices `--config` file entries in front of the command-line flags so
/// that the flags, parsed later, override them.
pub fn expand_config_args(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    let mut iter = args.iter().skip(1);
    while let Some(a) = iter.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = iter.next().map(PathBuf::from);
        } else if let Some(rest) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(rest));
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let file_args = read_config_file(&path)?;
    let mut out = Vec::with_capacity(args.len() + file_args.len());
    let mut rest = args.into_iter();
    out.extend(rest.next());
    out.extend(file_args);
    out.extend(rest);
    Ok(out)
}

fn read_config_file(path: &Path) -> Result<Vec<OsString>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cmd = RunConfig::command();
    let known: Vec<&str> = cmd.get_arguments().filter_map(|a| a.get_long()).collect();
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Input(format!(
                "{}:{}: expected 'key = value'",
                path.display(),
                lineno + 1
            ))
        })?;
        let key = key.trim().replace('_', "-");
        let value = value.trim().trim_matches('"');
        if key == "config" || !known.contains(&key.as_str()) {
            return Err(Error::Input(format!(
                "{}:{}: unknown key '{key}'",
                path.display(),
                lineno + 1
            )));
        }
        out.push(OsString::from(format!("--{key}={value}")));
    }
    Ok(out)
}

/// Parses arguments (program name first) including any config file.
pub fn parse_args(args: Vec<OsString>) -> std::result::Result<RunConfig, ParseOutcome> {
    let args = expand_config_args(args).map_err(ParseOutcome::Error)?;
    RunConfig::try_parse_from(args).map_err(ParseOutcome::Clap)
}

#[derive(Debug)]
pub enum ParseOutcome {
    Clap(clap::Error),
    Error(Error),
}

fn optimizer_config(cfg: &RunConfig) -> OptimizerConfig {
    OptimizerConfig {
        eta: cfg.eta,
        tol_obj: cfg.tol,
        max_iter: cfg.max_iter,
        update: cfg.update.into(),
        ..OptimizerConfig::default()
    }
}

fn fit_config(cfg: &RunConfig) -> FitConfig {
    FitConfig {
        optimizer: optimizer_config(cfg),
        ridge: cfg.ridge,
        ..FitConfig::default()
    }
}

fn cv_settings(cfg: &RunConfig) -> CvSettings {
    CvSettings {
        k_folds: cfg.folds,
        seed: cfg.seed,
        ..CvSettings::default()
    }
}

fn parse_alpha(s: &str, cfg: &RunConfig) -> Result<AlphaSpec> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("cv") {
        return Ok(AlphaSpec::CrossValidated(cv_settings(cfg)));
    }
    s.parse::<f64>().map(AlphaSpec::Fixed).map_err(|_| {
        Error::Parameter(format!(
            "alpha must be a number in (0, 2) or 'cv', got '{s}'"
        ))
    })
}

fn fixed_alpha(cfg: &RunConfig, default: f64) -> Result<f64> {
    match &cfg.alpha {
        None => Ok(default),
        Some(s) => s
            .trim()
            .parse()
            .map_err(|_| Error::Parameter(format!("alpha must be a number in (0, 2), got '{s}'"))),
    }
}

fn require_dim(cfg: &RunConfig) -> Result<usize> {
    cfg.dim
        .ok_or_else(|| Error::Parameter(format!("{:?} requires --dim", cfg.command).to_lowercase()))
}

fn load_input(cfg: &RunConfig) -> Result<(LoadedCsv, InputInfo)> {
    let path = cfg
        .input
        .as_ref()
        .ok_or_else(|| Error::Parameter("this command requires --input".into()))?;
    let selector = cfg
        .response
        .as_deref()
        .map(ResponseSelector::parse)
        .unwrap_or_default();
    let loaded = load_csv(path, &selector, cfg.standardize)?;
    let info = InputInfo {
        path: path.display().to_string(),
        predictors: loaded.predictor_names.clone(),
        response: loaded.response_name.clone(),
        n: loaded.dataset.n(),
        dropped_rows: loaded.dropped_rows,
    };
    Ok((loaded, info))
}

fn simulate_methods(cfg: &RunConfig) -> Result<Vec<Method>> {
    let list = cfg.alpha.as_deref().unwrap_or("1,0.5");
    list.split(',')
        .map(|a| {
            let alpha = parse_alpha(a, cfg)?;
            let label = match &alpha {
                AlphaSpec::Fixed(x) => format!("rSDR(alpha={x})"),
                AlphaSpec::CrossValidated(_) => "rSDR(alpha=cv)".to_string(),
            };
            Ok(Method {
                label,
                alpha,
                config: fit_config(cfg),
            })
        })
        .collect()
}

fn outlier_config(cfg: &RunConfig) -> Result<OutlierConfig> {
    Ok(OutlierConfig {
        gamma: cfg.gamma,
        n_boot: cfg.boot,
        reducer: cfg.reducer,
        d: cfg.dim.unwrap_or(3),
        alpha: fixed_alpha(cfg, 0.5)?,
        ridge: cfg.ridge,
    })
}

fn scores_and_labels(data: &Dataset) -> Result<(Vec<f64>, Vec<bool>)> {
    if data.p() != 1 {
        return Err(Error::Input(format!(
            "roc input needs one score column and one label column, found {} score columns",
            data.p()
        )));
    }
    let labels = data
        .y()
        .iter()
        .map(|&v| match v {
            1.0 => Ok(true),
            0.0 => Ok(false),
            v => Err(Error::Input(format!("labels must be 0 or 1, found {v}"))),
        })
        .collect::<Result<_>>()?;
    Ok((data.x().column(0).iter().copied().collect(), labels))
}

/// Runs one subcommand and returns its result document.
pub fn execute(cfg: &RunConfig) -> Result<ResultDocument> {
    let mut input = None;
    let result = match cfg.command {
        Command::Fit => {
            let (loaded, info) = load_input(cfg)?;
            input = Some(info);
            let alpha = parse_alpha(cfg.alpha.as_deref().unwrap_or("cv"), cfg)?;
            let fitted = fit(&loaded.dataset, require_dim(cfg)?, &alpha, &fit_config(cfg))?;
            ResultPayload::Fit(FitSummary::from(&fitted))
        }
        Command::Cv => {
            let (loaded, info) = load_input(cfg)?;
            input = Some(info);
            let report = cross_validate_alpha(
                &loaded.dataset,
                require_dim(cfg)?,
                &cv_settings(cfg),
                &fit_config(cfg),
            )?;
            ResultPayload::Cv(report)
        }
        Command::Simulate => {
            let spec = ModelSpec {
                contaminated: cfg.contaminate,
                seed: cfg.seed,
                ..ModelSpec::new(
                    cfg.model,
                    cfg.dist,
                    cfg.n.unwrap_or(100),
                    cfg.p.unwrap_or(6),
                )
            };
            let report = replicate(&spec, &simulate_methods(cfg)?, cfg.reps)?;
            for m in &report.methods {
                log::info!(
                    "{} {}: angle {:.4} ({:.4}), time {:.4}s",
                    report.model,
                    m.method,
                    m.angle.mean,
                    m.angle.sd,
                    m.time_s.mean
                );
            }
            if let Some(path) = &cfg.table {
                emit_table(&report, path)?;
            }
            ResultPayload::Simulate(report)
        }
        Command::Outliers => {
            let (loaded, info) = load_input(cfg)?;
            input = Some(info);
            ResultPayload::Outliers(detect(&loaded.dataset, &outlier_config(cfg)?, cfg.seed)?)
        }
        Command::Roc => {
            let (scores, labels) = match &cfg.input {
                Some(_) => {
                    let (loaded, info) = load_input(cfg)?;
                    input = Some(info);
                    scores_and_labels(&loaded.dataset)?
                }
                None => {
                    let (data, labels) = generate_ar1_outlier_data(
                        cfg.n.unwrap_or(100),
                        cfg.p.unwrap_or(200),
                        cfg.n_outliers,
                        cfg.seed,
                    )?;
                    let oc = outlier_config(cfg)?;
                    oc.validate()?;
                    (loo_dcor_scores(&reduce(&data, &oc)?, data.y())?, labels)
                }
            };
            let curve = roc(&scores, &labels)?;
            if let Some(path) = &cfg.table {
                emit_roc(&curve, path)?;
            }
            ResultPayload::Roc(curve)
        }
    };
    Ok(ResultDocument {
        command: cfg.command,
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        config: serde_json::to_value(cfg)?,
        input,
        result,
    })
}

fn execute_and_write(cfg: &RunConfig) -> Result<()> {
    let start = std::time::Instant::now();
    let doc = execute(cfg)?;
    match &cfg.output {
        Some(path) => write_json(path, &doc)?,
        None => println!("{}", serde_json::to_string_pretty(&doc)?),
    }
    log::info!("finished in {:.3}s", start.elapsed().as_secs_f64());
    Ok(())
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        2
    } else {
        1
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 success, 1 input or validation error, 2 numerical
/// failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let cfg = match parse_args(args.into_iter().map(Into::into).collect()) {
        Ok(cfg) => cfg,
        Err(ParseOutcome::Clap(e)) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
        Err(ParseOutcome::Error(e)) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let outcome = match cfg.threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| execute_and_write(&cfg)),
            Err(e) => Err(Error::Parameter(format!("cannot start {t} threads: {e}"))),
        },
        None => execute_and_write(&cfg),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
