//! Monte Carlo experiment runner.
//!
//! A run draws `trials` independent samples (trial `t` uses stream `t` of the
//! configured seed), applies one estimator to each, and records the error
//! against the true mean together with the reference radii that apply to that
//! estimator. Quantiles use the nearest-rank convention: the `q`-quantile of
//! `N` sorted values is the value at 1-based rank `ceil(q N)`.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::distributions::{DistributionSpec, Kind};
use crate::error::EstimateError;
use crate::geomedian::minsker_estimator;
use crate::hybrid::{estimate_mean_hybrid, samplesize_gate, theorem_bound};
use crate::sample::{distance, SampleSet};
use crate::scalar_mom::{median_of_means, mom_error_bound};
use crate::spherical::{estimate_lambda_max, estimate_spherical, spherical_error_bound};

pub const CSV_HEADER: &str =
    "trial,estimator,dist,n,d,delta,seed,error,bound_eq1,bound_eq2,bound_prop1,bound_eq3,feasible,wall_ms";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 3 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Io { .. } => 3,
        }
    }
}

impl From<EstimateError> for HarnessError {
    fn from(e: EstimateError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorId {
    SampleMean,
    /// Scalar median-of-means on each coordinate separately (a baseline).
    MomCoordinatewise,
    Minsker,
    Spherical,
    Hybrid,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 5] = [
        EstimatorId::SampleMean,
        EstimatorId::MomCoordinatewise,
        EstimatorId::Minsker,
        EstimatorId::Spherical,
        EstimatorId::Hybrid,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorId::SampleMean => "sample_mean",
            EstimatorId::MomCoordinatewise => "mom_coordinatewise",
            EstimatorId::Minsker => "minsker",
            EstimatorId::Spherical => "spherical",
            EstimatorId::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorId {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        EstimatorId::ALL
            .into_iter()
            .find(|e| e.as_str() == s.trim())
            .ok_or_else(|| config_err(format!("unknown estimator {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        match s.trim() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(config_err(format!("unknown format {s:?}"))),
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        })
    }
}

/// Covariance of the sampler: `identity`, `diag:a,b,...` or `full:` followed
/// by `d*d` row-major entries.
#[derive(Debug, Clone, PartialEq)]
pub enum CovSpec {
    Identity,
    Diag(Vec<f64>),
    Full(Vec<f64>),
}

fn parse_list(s: &str) -> Result<Vec<f64>, HarnessError> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| config_err(format!("bad number {t:?}"))))
        .collect()
}

fn join_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl FromStr for CovSpec {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        let s = s.trim();
        if s == "identity" {
            return Ok(CovSpec::Identity);
        }
        if let Some(rest) = s.strip_prefix("diag:") {
            return Ok(CovSpec::Diag(parse_list(rest)?));
        }
        if let Some(rest) = s.strip_prefix("full:") {
            return Ok(CovSpec::Full(parse_list(rest)?));
        }
        Err(config_err(format!("unknown covariance {s:?}")))
    }
}

impl fmt::Display for CovSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovSpec::Identity => f.write_str("identity"),
            CovSpec::Diag(v) => write!(f, "diag:{}", join_list(v)),
            CovSpec::Full(v) => write!(f, "full:{}", join_list(v)),
        }
    }
}

impl CovSpec {
    pub fn matrix(&self, d: usize) -> Result<DMatrix<f64>, HarnessError> {
        match self {
            CovSpec::Identity => Ok(DMatrix::identity(d, d)),
            CovSpec::Diag(v) if v.len() == d => Ok(DMatrix::from_diagonal(&DVector::from_column_slice(v))),
            CovSpec::Full(v) if v.len() == d * d => Ok(DMatrix::from_row_slice(d, d, v)),
            _ => Err(config_err(format!("covariance {self} does not match d={d}"))),
        }
    }
}

/// Where the spherical estimator gets `lambda` from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaSource {
    /// The true largest eigenvalue.
    Oracle,
    /// Inflated top eigenvalue of the fitted covariance on the same sample.
    Estimated,
}

impl FromStr for LambdaSource {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        match s.trim() {
            "oracle" => Ok(LambdaSource::Oracle),
            "estimated" => Ok(LambdaSource::Estimated),
            _ => Err(config_err(format!("unknown lambda source {s:?}"))),
        }
    }
}

impl fmt::Display for LambdaSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LambdaSource::Oracle => "oracle",
            LambdaSource::Estimated => "estimated",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dist: Kind,
    pub cov: CovSpec,
    /// `None` means the zero vector.
    pub mean: Option<Vec<f64>>,
    pub estimator: EstimatorId,
    pub n: usize,
    pub d: usize,
    pub delta: f64,
    pub trials: usize,
    pub seed: u64,
    pub lambda: LambdaSource,
    /// Constant multiplying the geometric-median radius.
    pub c_eq3: f64,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    /// Record per-trial wall time; off by default so outputs are byte-stable.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dist: Kind::Gaussian,
            cov: CovSpec::Identity,
            mean: None,
            estimator: EstimatorId::SampleMean,
            n: 1000,
            d: 1,
            delta: 0.05,
            trials: 100,
            seed: 0,
            lambda: LambdaSource::Oracle,
            c_eq3: 1.0,
            out: None,
            format: OutputFormat::Csv,
            timing: false,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T, HarnessError> {
    v.trim()
        .parse()
        .map_err(|_| config_err(format!("bad value for {key}: {v:?}")))
}

impl ExperimentConfig {
    pub const KEYS: [&'static str; 14] = [
        "dist", "cov", "mean", "estimator", "n", "d", "delta", "trials", "seed", "lambda", "c_eq3", "out",
        "format", "timing",
    ];

    /// Sets one key; used for both file entries and command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let v = value.trim();
        match key.trim() {
            "dist" => self.dist = v.parse::<Kind>().map_err(|e| config_err(e.to_string()))?,
            "cov" => self.cov = v.parse()?,
            "mean" => self.mean = if v == "zero" { None } else { Some(parse_list(v)?) },
            "estimator" => self.estimator = v.parse()?,
            "n" => self.n = parse_num(key, v)?,
            "d" => self.d = parse_num(key, v)?,
            "delta" => self.delta = parse_num(key, v)?,
            "trials" => self.trials = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "lambda" => self.lambda = v.parse()?,
            "c_eq3" => self.c_eq3 = parse_num(key, v)?,
            "out" => self.out = if v == "-" { None } else { Some(PathBuf::from(v)) },
            "format" => self.format = v.parse()?,
            "timing" => self.timing = parse_num(key, v)?,
            other => return Err(config_err(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines over `self`; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), HarnessError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected key = value", i + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, HarnessError> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }

    pub fn to_text(&self) -> String {
        let mean = self.mean.as_deref().map_or_else(|| "zero".to_string(), join_list);
        let out = self
            .out
            .as_ref()
            .map_or_else(|| "-".to_string(), |p| p.display().to_string());
        let values = [
            self.dist.to_string(),
            self.cov.to_string(),
            mean,
            self.estimator.to_string(),
            self.n.to_string(),
            self.d.to_string(),
            self.delta.to_string(),
            self.trials.to_string(),
            self.seed.to_string(),
            self.lambda.to_string(),
            self.c_eq3.to_string(),
            out,
            self.format.to_string(),
            self.timing.to_string(),
        ];
        Self::KEYS
            .iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials == 0 {
            return Err(config_err("trials must be >= 1"));
        }
        if self.d == 0 || self.n == 0 {
            return Err(config_err("n and d must be >= 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(config_err(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        if let Some(m) = &self.mean {
            if m.len() != self.d {
                return Err(config_err(format!("mean has {} entries, d={}", m.len(), self.d)));
            }
        }
        self.distribution().map(|_| ())
    }

    pub fn distribution(&self) -> Result<DistributionSpec, HarnessError> {
        let mean = self.mean.clone().unwrap_or_else(|| vec![0.0; self.d]);
        Ok(DistributionSpec::with_covariance(self.dist, mean, &self.cov.matrix(self.d)?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub estimator: EstimatorId,
    pub dist: String,
    pub n: usize,
    pub d: usize,
    pub delta: f64,
    pub seed: u64,
    /// `None` when the estimator rejected the sample.
    pub error: Option<f64>,
    pub bound_eq1: Option<f64>,
    pub bound_eq2: Option<f64>,
    pub bound_prop1: Option<f64>,
    pub bound_eq3: Option<f64>,
    pub feasible: bool,
    pub wall_ms: Option<f64>,
    /// Coordinate-wise radius check for the coordinate-wise baseline.
    pub exceeded_eq1: Option<bool>,
    pub failure: Option<String>,
}

impl TrialRecord {
    fn exceeded(&self, bound: Option<f64>) -> Option<bool> {
        Some(self.error? > bound?)
    }

    pub fn exceeded_eq2(&self) -> Option<bool> {
        self.exceeded(self.bound_eq2)
    }

    pub fn exceeded_prop1(&self) -> Option<bool> {
        self.exceeded(self.bound_prop1)
    }

    pub fn exceeded_eq3(&self) -> Option<bool> {
        self.exceeded(self.bound_eq3)
    }

    pub fn csv_row(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.trial,
            self.estimator,
            self.dist,
            self.n,
            self.d,
            self.delta,
            self.seed,
            opt(self.error),
            opt(self.bound_eq1),
            opt(self.bound_eq2),
            opt(self.bound_prop1),
            opt(self.bound_eq3),
            self.feasible,
            opt(self.wall_ms),
        )
    }
}

/// `sqrt(Tr/n) + sqrt(2 lambda_max ln(1/delta) / n)`.
pub fn sub_gaussian_radius(trace: f64, lambda_max: f64, n: usize, delta: f64) -> f64 {
    let n = n as f64;
    (trace / n).sqrt() + (2.0 * lambda_max * (1.0 / delta).ln() / n).sqrt()
}

/// `c sqrt(Tr ln(1/delta) / n)`.
pub fn geometric_median_radius(trace: f64, n: usize, delta: f64, c: f64) -> f64 {
    c * (trace * (1.0 / delta).ln() / n as f64).sqrt()
}

struct Truth {
    spec: DistributionSpec,
    trace: f64,
    lambda_max: f64,
}

fn run_trial(config: &ExperimentConfig, truth: &Truth, trial: usize) -> TrialRecord {
    let start = Instant::now();
    let mut rec = TrialRecord {
        trial,
        estimator: config.estimator,
        dist: config.dist.to_string(),
        n: config.n,
        d: config.d,
        delta: config.delta,
        seed: config.seed,
        error: None,
        bound_eq1: None,
        bound_eq2: Some(sub_gaussian_radius(truth.trace, truth.lambda_max, config.n, config.delta)),
        bound_prop1: None,
        bound_eq3: None,
        feasible: true,
        wall_ms: None,
        exceeded_eq1: None,
        failure: None,
    };
    let outcome = (|| -> Result<Vec<f64>, EstimateError> {
        let samples = truth.spec.sample_stream(config.n, config.seed, trial as u64)?;
        estimate(config, truth, &samples, &mut rec)
    })();
    match outcome {
        Ok(est) => rec.error = Some(distance(&est, &truth.spec.mean)),
        Err(e) => {
            rec.feasible = false;
            rec.failure = Some(e.to_string());
        }
    }
    if config.timing {
        rec.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    rec
}

fn estimate(
    config: &ExperimentConfig,
    truth: &Truth,
    samples: &SampleSet,
    rec: &mut TrialRecord,
) -> Result<Vec<f64>, EstimateError> {
    let (n, d, delta) = (config.n, config.d, config.delta);
    match config.estimator {
        EstimatorId::SampleMean => Ok(samples.mean()),
        EstimatorId::MomCoordinatewise => {
            let mut est = Vec::with_capacity(d);
            let mut radius2 = 0.0;
            let mut exceeded = false;
            for j in 0..d {
                let m = median_of_means(&samples.column(j), delta)?.value;
                let r = mom_error_bound(truth.spec.true_cov[(j, j)], n, delta)?;
                exceeded |= (m - truth.spec.mean[j]).abs() > r;
                radius2 += r * r;
                est.push(m);
            }
            rec.bound_eq1 = Some(radius2.sqrt());
            rec.exceeded_eq1 = Some(exceeded);
            Ok(est)
        }
        EstimatorId::Minsker => {
            rec.bound_eq3 = Some(geometric_median_radius(truth.trace, n, delta, config.c_eq3));
            minsker_estimator(samples, delta)
        }
        EstimatorId::Spherical => {
            let lambda = match config.lambda {
                LambdaSource::Oracle => truth.lambda_max,
                LambdaSource::Estimated => estimate_lambda_max(samples, delta, truth.spec.kurtosis)?,
            };
            rec.bound_prop1 = Some(spherical_error_bound(lambda, d, n, delta));
            let est = estimate_spherical(samples, lambda, delta)?;
            rec.feasible = est.feasible;
            Ok(est.value)
        }
        EstimatorId::Hybrid => {
            let report = estimate_mean_hybrid(samples, delta, truth.spec.kurtosis)?;
            rec.feasible = report.all_feasible();
            Ok(report.estimate)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSummary {
    pub name: &'static str,
    /// Median of the per-trial radius.
    pub radius: f64,
    pub exceed_rate: f64,
    /// Observed `1 - delta` error quantile divided by the radius.
    pub empirical_constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub trials: usize,
    pub failed: usize,
    pub infeasible: usize,
    pub q50: f64,
    pub q90: f64,
    pub q_one_minus_delta: f64,
    pub bounds: Vec<BoundSummary>,
    /// `q_{1-delta}` divided by the theorem radius with `C = 1`.
    pub theorem_ratio: f64,
    pub nominal_regime: bool,
}

/// Nearest-rank quantile of unsorted values; `NaN` for an empty slice.
pub fn nearest_rank(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[k - 1]
}

pub fn summarize(config: &ExperimentConfig, records: &[TrialRecord]) -> Result<Summary, HarnessError> {
    let spec = config.distribution()?;
    let errors: Vec<f64> = records.iter().filter_map(|r| r.error).collect();
    let qd = nearest_rank(&errors, 1.0 - config.delta);
    let ok = errors.len().max(1) as f64;
    let mut bounds = Vec::new();
    let mut push = |name: &'static str, get: &dyn Fn(&TrialRecord) -> Option<f64>, flag: &dyn Fn(&TrialRecord) -> Option<bool>| {
        let radii: Vec<f64> = records.iter().filter_map(get).collect();
        if radii.is_empty() {
            return;
        }
        let radius = nearest_rank(&radii, 0.5);
        let exceeded = records.iter().filter(|r| flag(r) == Some(true)).count();
        bounds.push(BoundSummary {
            name,
            radius,
            exceed_rate: exceeded as f64 / ok,
            empirical_constant: qd / radius,
        });
    };
    push("eq1", &|r| r.bound_eq1, &|r| r.exceeded_eq1);
    push("eq2", &|r| r.bound_eq2, &|r| r.exceeded_eq2());
    push("prop1", &|r| r.bound_prop1, &|r| r.exceeded_prop1());
    push("eq3", &|r| r.bound_eq3, &|r| r.exceeded_eq3());
    let theorem = theorem_bound(spec.trace(), spec.lambda_max(), config.n, config.d, config.delta, 1.0);
    Ok(Summary {
        trials: records.len(),
        failed: records.iter().filter(|r| r.error.is_none()).count(),
        infeasible: records.iter().filter(|r| r.error.is_some() && !r.feasible).count(),
        q50: nearest_rank(&errors, 0.5),
        q90: nearest_rank(&errors, 0.9),
        q_one_minus_delta: qd,
        bounds,
        theorem_ratio: qd / theorem,
        nominal_regime: samplesize_gate(config.n, config.d, config.delta, spec.kurtosis),
    })
}

pub fn run_trials(config: &ExperimentConfig) -> Result<Vec<TrialRecord>, HarnessError> {
    config.validate()?;
    let spec = config.distribution()?;
    let truth = Truth {
        trace: spec.trace(),
        lambda_max: spec.lambda_max(),
        spec,
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        Ok((0..config.trials)
            .into_par_iter()
            .map(|t| run_trial(config, &truth, t))
            .collect())
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok((0..config.trials).map(|t| run_trial(config, &truth, t)).collect())
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<(Vec<TrialRecord>, Summary), HarnessError> {
    let records = run_trials(config)?;
    let summary = summarize(config, &records)?;
    Ok((records, summary))
}

pub fn render_csv(records: &[TrialRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct JsonReport<'a> {
    records: &'a [TrialRecord],
    summary: &'a Summary,
}

pub fn render_json(records: &[TrialRecord], summary: &Summary) -> String {
    let mut s = serde_json::to_string_pretty(&JsonReport { records, summary }).expect("serializable");
    s.push('\n');
    s
}

pub fn render(records: &[TrialRecord], summary: &Summary, format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => render_csv(records),
        OutputFormat::Json => render_json(records, summary),
    }
}

/// Writes the report to `path`, or to stdout when `path` is `None`.
pub fn emit_report(
    records: &[TrialRecord],
    summary: &Summary,
    format: OutputFormat,
    path: Option<&Path>,
) -> Result<(), HarnessError> {
    let body = render(records, summary, format);
    match path {
        Some(p) => fs::write(p, body).map_err(|source| HarnessError::Io {
            path: p.to_path_buf(),
            source,
        }),
        None => std::io::stdout()
            .lock()
            .write_all(body.as_bytes())
            .map_err(|source| HarnessError::Io {
                path: PathBuf::from("<stdout>"),
                source,
            }),
    }
}
