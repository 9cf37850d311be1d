//! Run configuration: a flat TOML file overlaid with command-line flags.

use std::path::{Path, PathBuf};

use clap::Args;
use ridgeless::data::TaskKind;
use ridgeless::experiments::Method;
use ridgeless::training::LossKind;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Default output directory when neither `output` nor the environment says
/// otherwise.
pub const OUT_DIR_ENV: &str = "RIDGELESS_OUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid value for `{field}`: {message}")]
    Invalid {
        field: &'static str,
        message: String,
    },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

/// Every key accepted by the config file; each also exists as a `--flag`.
#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// `synthetic` (regression), `synthetic-classes`, or a libsvm file path.
    #[arg(long)]
    pub data: Option<String>,
    /// Datasets for rftk-compare: `synthetic-classes` or libsvm paths.
    #[arg(long, value_delimiter = ',')]
    pub datasets: Option<Vec<String>>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// `regression` or `classification` (labels one-hot encoded) for files.
    #[arg(long, value_parser = parse_task)]
    pub task: Option<TaskKind>,
    /// Training fraction when splitting a dataset file.
    #[arg(long)]
    pub train_frac: Option<f64>,
    /// Standardize features on the training split (default: on for files).
    #[arg(long)]
    pub standardize: Option<bool>,

    /// Kernel bandwidth σ² of exp(−‖x−x'‖²/(2σ²)).
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Number of random features M.
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long, value_parser = parse_method)]
    pub method: Option<Method>,
    /// Ridge λ (0 = ridgeless).
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<u64>,
    /// Iteration count; takes precedence over `epochs`.
    #[arg(long)]
    pub iterations: Option<u64>,
    /// β, weight of the Frobenius trace term.
    #[arg(long)]
    pub trace_weight: Option<f64>,
    /// η, frequency step size.
    #[arg(long)]
    pub omega_rate: Option<f64>,
    /// s, frequency update period.
    #[arg(long)]
    pub omega_period: Option<u64>,
    /// `squared` or `softmax_cross_entropy`.
    #[arg(long, value_parser = parse_loss)]
    pub loss: Option<LossKind>,
    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    pub feature_counts: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub batch_sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub learning_rates: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    pub methods: Option<Vec<Method>>,
    #[arg(long)]
    pub replications: Option<usize>,
    /// Kernel methods are skipped above this many training points.
    #[arg(long)]
    pub kernel_cap: Option<usize>,
    /// Fit the kernel baseline in double-descent runs.
    #[arg(long)]
    pub kernel_baseline: Option<bool>,

    /// Output file (model JSON for fit, CSV for experiments).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write the feature map as a text record (fit only).
    #[arg(long)]
    pub feature_map_out: Option<PathBuf>,
    /// Also write the training trace CSV (fit with rf-sgd / rftk only).
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

fn parse_task(s: &str) -> Result<TaskKind, String> {
    serde_json::from_value(Value::String(s.into()))
        .map_err(|_| format!("unknown task {s:?} (expected regression or classification)"))
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    serde_json::from_value(Value::String(s.into()))
        .map_err(|_| format!("unknown loss {s:?} (expected squared or softmax_cross_entropy)"))
}

impl RunConfig {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text, path)
    }

    /// Fields set in `flags` replace those of `self`.
    pub fn overlay(self, flags: &RunConfig) -> RunConfig {
        let mut base = serde_json::to_value(self).expect("config serializes");
        let top = serde_json::to_value(flags).expect("config serializes");
        if let (Value::Object(b), Value::Object(t)) = (&mut base, top) {
            for (k, v) in t {
                if !v.is_null() {
                    b.insert(k, v);
                }
            }
        }
        serde_json::from_value(base).expect("overlay keeps the schema")
    }
}

/// Where the data comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic,
    SyntheticClasses,
    File(PathBuf),
}

impl DataSource {
    pub fn parse(s: &str) -> DataSource {
        match s {
            "synthetic" => DataSource::Synthetic,
            "synthetic-classes" => DataSource::SyntheticClasses,
            path => DataSource::File(PathBuf::from(path)),
        }
    }

    pub fn name(&self) -> String {
        match self {
            DataSource::Synthetic => "synthetic".into(),
            DataSource::SyntheticClasses => "synthetic-classes".into(),
            DataSource::File(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
        }
    }
}

/// A [`RunConfig`] with defaults applied and ranges checked.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub data: DataSource,
    pub datasets: Vec<DataSource>,
    pub n_train: usize,
    pub n_test: usize,
    pub dim: usize,
    pub noise_sd: f64,
    pub data_seed: u64,
    pub task: Option<TaskKind>,
    pub train_frac: f64,
    pub standardize: Option<bool>,
    pub bandwidth: f64,
    pub features: usize,
    pub method: Method,
    /// Unset means ridgeless for `fit`; kernel ridge in comparisons has its
    /// own default.
    pub lambda: Option<f64>,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: u64,
    pub iterations: Option<u64>,
    pub trace_weight: f64,
    pub omega_rate: f64,
    pub omega_period: u64,
    pub loss: LossKind,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub feature_counts: Option<Vec<usize>>,
    pub lambdas: Vec<f64>,
    pub ratios: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub methods: Vec<Method>,
    pub replications: usize,
    pub kernel_cap: usize,
    pub kernel_baseline: bool,
    pub output: Option<PathBuf>,
    pub feature_map_out: Option<PathBuf>,
    pub trace_out: Option<PathBuf>,
}

/// Per-command defaults that differ from the common ones.
#[derive(Clone, Copy, Debug)]
pub struct Defaults {
    pub n_train: usize,
    pub features: usize,
    pub epochs: u64,
    pub bandwidth: f64,
}

impl Defaults {
    pub const FIT: Defaults = Defaults {
        n_train: 1000,
        features: 200,
        epochs: 100,
        bandwidth: 5.0,
    };
    pub const DOUBLE_DESCENT: Defaults = Defaults {
        n_train: 2000,
        ..Defaults::FIT
    };
    pub const SGD: Defaults = Defaults {
        n_train: 2000,
        epochs: 20,
        ..Defaults::FIT
    };
    pub const COMPARE: Defaults = Defaults {
        bandwidth: 2.0,
        ..Defaults::FIT
    };
}

fn positive(field: &'static str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(
            field,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

fn non_negative(field: &'static str, v: f64) -> Result<f64, ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(
            field,
            format!("must be non-negative and finite, got {v}"),
        ))
    }
}

fn at_least_one<T: Copy + PartialOrd + From<u8> + std::fmt::Display>(
    field: &'static str,
    v: T,
) -> Result<T, ConfigError> {
    if v >= T::from(1) {
        Ok(v)
    } else {
        Err(invalid(field, "must be at least 1"))
    }
}

fn non_empty<T>(field: &'static str, v: Vec<T>) -> Result<Vec<T>, ConfigError> {
    if v.is_empty() {
        Err(invalid(field, "must not be empty"))
    } else {
        Ok(v)
    }
}

impl Resolved {
    pub fn new(cfg: RunConfig, d: Defaults) -> Result<Self, ConfigError> {
        let train_frac = cfg.train_frac.unwrap_or(0.8);
        if !(train_frac > 0.0 && train_frac < 1.0) {
            return Err(invalid(
                "train_frac",
                format!("must lie in (0, 1), got {train_frac}"),
            ));
        }
        let lambdas = cfg.lambdas.unwrap_or_else(|| vec![0.0, 1e-3, 1e-1]);
        for &l in &lambdas {
            non_negative("lambdas", l)?;
        }
        let learning_rates = cfg.learning_rates.unwrap_or_else(|| vec![0.5]);
        for &g in &learning_rates {
            non_negative("learning_rates", g)?;
        }
        let batch_sizes = cfg.batch_sizes.unwrap_or_else(|| vec![8, 32, 256]);
        for &b in &batch_sizes {
            at_least_one("batch_sizes", b)?;
        }
        if let Some(counts) = &cfg.feature_counts {
            for &m in counts {
                at_least_one("feature_counts", m)?;
            }
        }
        Ok(Resolved {
            data: DataSource::parse(cfg.data.as_deref().unwrap_or("synthetic")),
            datasets: non_empty(
                "datasets",
                cfg.datasets
                    .unwrap_or_else(|| vec!["synthetic-classes".into()])
                    .iter()
                    .map(|s| DataSource::parse(s))
                    .collect(),
            )?,
            n_train: at_least_one("n_train", cfg.n_train.unwrap_or(d.n_train))?,
            n_test: at_least_one("n_test", cfg.n_test.unwrap_or(d.n_train / 4))?,
            dim: at_least_one("dim", cfg.dim.unwrap_or(10))?,
            noise_sd: non_negative("noise_sd", cfg.noise_sd.unwrap_or(0.2))?,
            data_seed: cfg.data_seed.unwrap_or(0),
            task: cfg.task,
            train_frac,
            standardize: cfg.standardize,
            bandwidth: positive("bandwidth", cfg.bandwidth.unwrap_or(d.bandwidth))?,
            features: at_least_one("features", cfg.features.unwrap_or(d.features))?,
            method: cfg.method.unwrap_or(Method::RandomFeatures),
            lambda: cfg.lambda.map(|l| non_negative("lambda", l)).transpose()?,
            batch_size: at_least_one("batch_size", cfg.batch_size.unwrap_or(32))?,
            learning_rate: non_negative("learning_rate", cfg.learning_rate.unwrap_or(0.5))?,
            epochs: at_least_one("epochs", cfg.epochs.unwrap_or(d.epochs))?,
            iterations: cfg
                .iterations
                .map(|t| at_least_one("iterations", t))
                .transpose()?,
            trace_weight: non_negative("trace_weight", cfg.trace_weight.unwrap_or(1e-3))?,
            omega_rate: non_negative("omega_rate", cfg.omega_rate.unwrap_or(0.1))?,
            omega_period: at_least_one("omega_period", cfg.omega_period.unwrap_or(1))?,
            loss: cfg.loss.unwrap_or_default(),
            seed: cfg.seed.unwrap_or(0),
            seeds: non_empty("seeds", cfg.seeds.unwrap_or_else(|| (1..=5).collect()))?,
            feature_counts: cfg
                .feature_counts
                .map(|c| non_empty("feature_counts", c))
                .transpose()?,
            lambdas: non_empty("lambdas", lambdas)?,
            ratios: non_empty(
                "ratios",
                cfg.ratios.unwrap_or_else(|| {
                    (1..=40)
                        .map(|i| i as f64 * 0.1)
                        .filter(|r| (r - 1.0).abs() > 1e-9)
                        .collect()
                }),
            )?,
            batch_sizes: non_empty("batch_sizes", batch_sizes)?,
            learning_rates: non_empty("learning_rates", learning_rates)?,
            methods: non_empty(
                "methods",
                cfg.methods.unwrap_or_else(|| Method::ALL.to_vec()),
            )?,
            replications: at_least_one("replications", cfg.replications.unwrap_or(5))?,
            kernel_cap: cfg.kernel_cap.unwrap_or(5000),
            kernel_baseline: cfg.kernel_baseline.unwrap_or(true),
            output: cfg.output,
            feature_map_out: cfg.feature_map_out,
            trace_out: cfg.trace_out,
        })
    }

    /// λ for kernel ridge, which must be positive.
    pub fn kernel_ridge(&self, default: f64) -> Result<f64, ConfigError> {
        match self.lambda.unwrap_or(default) {
            l if l > 0.0 => Ok(l),
            l => Err(invalid(
                "lambda",
                format!("kernel-ridge needs a positive ridge, got {l}"),
            )),
        }
    }

    /// `output`, or `file_name` inside the default output directory.
    pub fn output_path(&self, file_name: &str) -> PathBuf {
        self.output.clone().unwrap_or_else(|| {
            let dir = std::env::var_os(OUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("."));
            dir.join(file_name)
        })
    }
}
