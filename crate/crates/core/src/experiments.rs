//! Seeded experiment runners: SGD factor study, double-descent sweep,
//! tunable-kernel comparison and the variance-factor curve. Each returns a
//! [`SweepResult`] whose records map one-to-one onto CSV rows.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{split, synthetic_minmax, Dataset, Standardizer, TaskKind};
use crate::error::{Error, Result};
use crate::estimators::{fit_kernel_ridge, fit_kernel_ridgeless, Predictor, RidgeSolver};
use crate::features::FeatureMap;
use crate::fmt_sig;
use crate::kernels::{
    effective_ridge_from_spectrum, kernel_matrix, variance_factor, KernelSpec, Spectrum,
    DEFAULT_RIDGE_TOL,
};
use crate::numerics::sym_eigen;
use crate::training::{
    accuracy, iterations_per_epoch, mse, rftk_train, sgd_train, sgd_train_observed,
    stochastic_error_features, LossKind, RftkConfig, SgdConfig,
};

/// A row of an experiment CSV.
pub trait CsvRecord {
    const HEADER: &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

/// Records of one experiment, in CSV order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult<R> {
    /// Name of the swept quantity.
    pub variable: String,
    pub records: Vec<R>,
    /// Seeds (or replications) per sweep point.
    pub replications: usize,
}

impl<R: CsvRecord> SweepResult<R> {
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(R::HEADER)?;
        for r in &self.records {
            out.write_record(r.fields())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Mean and sample standard deviation; `None` for an empty slice.
pub fn mean_sd(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((mean, sd))
}

/// Independent seed for stream `tag` of a base seed.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    ChaCha8Rng::seed_from_u64(base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)).next_u64()
}

/// Synthetic regression task: train/test split of one draw of
/// [`synthetic_minmax`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub n_train: usize,
    pub n_test: usize,
    pub dim: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl SyntheticTask {
    pub fn generate(&self) -> Result<(Dataset, Dataset)> {
        let all = synthetic_minmax(
            self.n_train + self.n_test,
            self.dim,
            self.noise_sd,
            self.seed,
        )?;
        Ok(all.split_at(self.n_train))
    }
}

// ---------------------------------------------------------------------------
// Variance factor

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceRecord {
    pub ratio: f64,
    /// `None` at the singular ratio 1.
    pub alpha: Option<f64>,
}

/// Marker written in place of α at ratio 1.
pub const SINGULAR_MARKER: &str = "singular";

impl CsvRecord for VarianceRecord {
    const HEADER: &'static [&'static str] = &["ratio", "alpha"];

    fn fields(&self) -> Vec<String> {
        vec![
            fmt_sig(self.ratio),
            self.alpha
                .map(fmt_sig)
                .unwrap_or_else(|| SINGULAR_MARKER.into()),
        ]
    }
}

/// α over a grid of ratios M/n, sorted ascending. Ratio 1 gives a marker row.
pub fn variance_factor_curve(ratios: &[f64]) -> Result<SweepResult<VarianceRecord>> {
    if ratios.is_empty() {
        return Err(Error::Domain("ratio grid is empty".into()));
    }
    let mut sorted = ratios.to_vec();
    sorted.sort_by(f64::total_cmp);
    let records = sorted
        .into_iter()
        .map(|ratio| match variance_factor(ratio) {
            Ok(a) => Ok(VarianceRecord {
                ratio,
                alpha: Some(a),
            }),
            Err(Error::Singularity) => Ok(VarianceRecord { ratio, alpha: None }),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        variable: "ratio".into(),
        records,
        replications: 1,
    })
}

// ---------------------------------------------------------------------------
// SGD factor study

/// One `(b, γ)` cell trained for a whole number of epochs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdCell {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdStudyConfig {
    pub task: SyntheticTask,
    pub bandwidth: f64,
    pub features: usize,
    pub cells: Vec<SgdCell>,
    /// Each seed fixes a feature map and the batch sampling.
    pub seeds: Vec<u64>,
}

impl SgdStudyConfig {
    /// Full grid over batch sizes and learning rates at a common epoch count.
    pub fn grid(batch_sizes: &[usize], learning_rates: &[f64], epochs: u64) -> Vec<SgdCell> {
        let mut cells = Vec::new();
        for &batch_size in batch_sizes {
            for &learning_rate in learning_rates {
                cells.push(SgdCell {
                    batch_size,
                    learning_rate,
                    epochs,
                });
            }
        }
        cells
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdRecord {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epoch: u64,
    pub iteration: u64,
    pub delta: f64,
    pub test_mse: f64,
    pub seed: u64,
}

impl CsvRecord for SgdRecord {
    const HEADER: &'static [&'static str] =
        &["b", "gamma", "epoch", "iter", "delta_t", "test_mse", "seed"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.batch_size.to_string(),
            fmt_sig(self.learning_rate),
            self.epoch.to_string(),
            self.iteration.to_string(),
            fmt_sig(self.delta),
            fmt_sig(self.test_mse),
            self.seed.to_string(),
        ]
    }
}

/// Result of [`run_sgd_factor_study`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdStudy {
    pub sweep: SweepResult<SgdRecord>,
    /// Cells whose weights stopped being finite, with the seed. Their records
    /// end at the last finite epoch.
    pub diverged: Vec<(SgdCell, u64)>,
}

impl SgdStudy {
    /// Seed-averaged Δ per epoch for one cell, over seeds that reached that
    /// epoch.
    pub fn mean_delta_by_epoch(&self, batch_size: usize, learning_rate: f64) -> Vec<(u64, f64)> {
        self.mean_by_epoch(batch_size, learning_rate, |r| r.delta)
    }

    pub fn mean_test_mse_by_epoch(&self, batch_size: usize, learning_rate: f64) -> Vec<(u64, f64)> {
        self.mean_by_epoch(batch_size, learning_rate, |r| r.test_mse)
    }

    fn mean_by_epoch(
        &self,
        batch_size: usize,
        learning_rate: f64,
        value: impl Fn(&SgdRecord) -> f64,
    ) -> Vec<(u64, f64)> {
        let mut by_epoch: Vec<(u64, Vec<f64>)> = Vec::new();
        for r in &self.sweep.records {
            if r.batch_size != batch_size || r.learning_rate != learning_rate {
                continue;
            }
            match by_epoch.iter_mut().find(|(e, _)| *e == r.epoch) {
                Some((_, v)) => v.push(value(r)),
                None => by_epoch.push((r.epoch, vec![value(r)])),
            }
        }
        by_epoch.sort_by_key(|(e, _)| *e);
        by_epoch
            .into_iter()
            .map(|(e, v)| (e, mean_sd(&v).map_or(f64::NAN, |(m, _)| m)))
            .collect()
    }

    pub fn is_diverged(&self, batch_size: usize, learning_rate: f64) -> bool {
        self.diverged
            .iter()
            .any(|(c, _)| c.batch_size == batch_size && c.learning_rate == learning_rate)
    }
}

/// Trains SGD for every cell and seed, recording Δ against the ridgeless
/// random-features fit and the test MSE once per epoch (epoch 0 included).
pub fn run_sgd_factor_study(cfg: &SgdStudyConfig) -> Result<SgdStudy> {
    if cfg.cells.is_empty() {
        return Err(Error::Domain("SGD study grid is empty".into()));
    }
    if cfg.seeds.is_empty() {
        return Err(Error::Domain("SGD study needs at least one seed".into()));
    }
    let (train, test) = cfg.task.generate()?;
    let n = train.len();
    let mut records = Vec::new();
    let mut diverged = Vec::new();
    for &seed in &cfg.seeds {
        let fm = FeatureMap::sample(train.dim(), cfg.features, cfg.bandwidth, seed)?;
        let phi_train = fm.apply(&train.x)?;
        let phi_test = fm.apply(&test.x)?;
        let reference = RidgeSolver::new(&phi_train)?.weights(&train.y, 0.0)?;
        for cell in &cfg.cells {
            let per_epoch = iterations_per_epoch(n, cell.batch_size);
            let sgd = SgdConfig::from_epochs(
                n,
                cell.batch_size,
                cell.learning_rate,
                cell.epochs,
                derive_seed(seed, 1),
            )?
            .record_every(per_epoch);
            let mut cell_records = Vec::new();
            let mut failure = None;
            let outcome = sgd_train_observed(&train.x, &train.y, &fm, &sgd, |cp| {
                let step = || -> Result<SgdRecord> {
                    Ok(SgdRecord {
                        batch_size: cell.batch_size,
                        learning_rate: cell.learning_rate,
                        epoch: cp.iteration / per_epoch,
                        iteration: cp.iteration,
                        delta: stochastic_error_features(cp.weights, &reference, &phi_train)?,
                        test_mse: mse(&phi_test.matmul(cp.weights)?, &test.y)?,
                        seed,
                    })
                };
                match step() {
                    Ok(r) => cell_records.push(r),
                    Err(e) => failure = Some(e),
                }
                None
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
            if outcome.diverged {
                // the final record repeats the last finite iterate
                cell_records.pop();
                diverged.push((*cell, seed));
            }
            records.extend(cell_records);
        }
    }
    records.sort_by(|a, b| {
        a.batch_size
            .cmp(&b.batch_size)
            .then(a.learning_rate.total_cmp(&b.learning_rate))
            .then(a.seed.cmp(&b.seed))
            .then(a.iteration.cmp(&b.iteration))
    });
    Ok(SgdStudy {
        sweep: SweepResult {
            variable: "b,gamma".into(),
            records,
            replications: cfg.seeds.len(),
        },
        diverged,
    })
}

// ---------------------------------------------------------------------------
// Double descent

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoubleDescentConfig {
    pub task: SyntheticTask,
    pub bandwidth: f64,
    pub feature_counts: Vec<usize>,
    /// Ridge values; 0 is the ridgeless fit.
    pub lambdas: Vec<f64>,
    /// Feature-map seeds, one curve each.
    pub seeds: Vec<u64>,
    /// Also fit the kernel predictor for every λ.
    pub kernel_baseline: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMethod {
    RandomFeatures,
    Kernel,
}

impl CurveMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveMethod::RandomFeatures => "rf",
            CurveMethod::Kernel => "kernel",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoubleDescentRecord {
    /// `None` for kernel baseline rows.
    pub features: Option<usize>,
    pub ratio: Option<f64>,
    pub lambda: f64,
    pub seed: u64,
    pub train_mse: f64,
    pub test_mse: f64,
    pub method: CurveMethod,
    /// `‖φ(X)‖²_F` on the training inputs (random-features rows only).
    pub trace_estimate: Option<f64>,
    /// Ridge implied by M < n features (ridgeless random-features rows only).
    pub effective_ridge: Option<f64>,
}

impl CsvRecord for DoubleDescentRecord {
    const HEADER: &'static [&'static str] = &[
        "M",
        "ratio",
        "lambda",
        "seed",
        "train_mse",
        "test_mse",
        "method",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            self.features.map(|m| m.to_string()).unwrap_or_default(),
            self.ratio.map(fmt_sig).unwrap_or_default(),
            fmt_sig(self.lambda),
            self.seed.to_string(),
            fmt_sig(self.train_mse),
            fmt_sig(self.test_mse),
            self.method.as_str().into(),
        ]
    }
}

impl SweepResult<DoubleDescentRecord> {
    /// Mean and standard deviation of the random-features test MSE over
    /// seeds at one `(M, λ)` point.
    pub fn rf_test_mse(&self, features: usize, lambda: f64) -> Option<(f64, f64)> {
        let v: Vec<f64> = self
            .records
            .iter()
            .filter(|r| {
                r.method == CurveMethod::RandomFeatures
                    && r.features == Some(features)
                    && r.lambda == lambda
            })
            .map(|r| r.test_mse)
            .collect();
        mean_sd(&v)
    }

    pub fn kernel_test_mse(&self, lambda: f64) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.method == CurveMethod::Kernel && r.lambda == lambda)
            .map(|r| r.test_mse)
    }
}

/// Random-features test error over a grid of feature counts and ridges, with
/// kernel baselines. Random-features rows come first, sorted by (M, λ, seed);
/// kernel rows follow, sorted by λ and tagged with the task seed.
pub fn run_double_descent(cfg: &DoubleDescentConfig) -> Result<SweepResult<DoubleDescentRecord>> {
    if cfg.feature_counts.is_empty() || cfg.lambdas.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::Domain(
            "double descent needs feature counts, ridges and seeds".into(),
        ));
    }
    if let Some(l) = cfg.lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(Error::Domain(format!(
            "ridge must be non-negative, got {l}"
        )));
    }
    let (train, test) = cfg.task.generate()?;
    let n = train.len();
    let mut counts = cfg.feature_counts.clone();
    counts.sort_unstable();
    counts.dedup();
    let mut lambdas = cfg.lambdas.clone();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();

    let spec = KernelSpec::gaussian(cfg.bandwidth)?;
    let wants_ridge = counts.iter().any(|&m| m < n) && lambdas.contains(&0.0);
    let spectrum = if wants_ridge {
        Some(Spectrum::from_eigen(&sym_eigen(&kernel_matrix(
            &train.x, &spec,
        )?)?))
    } else {
        None
    };

    let mut records = Vec::new();
    for &m in &counts {
        let effective_ridge = match &spectrum {
            Some(s) if m < n => {
                Some(effective_ridge_from_spectrum(s, m, DEFAULT_RIDGE_TOL)?.lambda)
            }
            _ => None,
        };
        for &seed in &cfg.seeds {
            let fm = FeatureMap::sample(train.dim(), m, cfg.bandwidth, seed)?;
            let phi_train = fm.apply(&train.x)?;
            let phi_test = fm.apply(&test.x)?;
            let solver = RidgeSolver::new(&phi_train)?;
            for &lambda in &lambdas {
                let w = solver.weights(&train.y, lambda)?;
                records.push(DoubleDescentRecord {
                    features: Some(m),
                    ratio: Some(m as f64 / n as f64),
                    lambda,
                    seed,
                    train_mse: mse(&phi_train.matmul(&w)?, &train.y)?,
                    test_mse: mse(&phi_test.matmul(&w)?, &test.y)?,
                    method: CurveMethod::RandomFeatures,
                    trace_estimate: Some(phi_train.frobenius_sq()),
                    effective_ridge: if lambda == 0.0 { effective_ridge } else { None },
                });
            }
        }
    }
    records.sort_by(|a, b| {
        a.features
            .cmp(&b.features)
            .then(a.lambda.total_cmp(&b.lambda))
            .then(a.seed.cmp(&b.seed))
    });
    if cfg.kernel_baseline {
        for &lambda in &lambdas {
            let model = if lambda == 0.0 {
                fit_kernel_ridgeless(&train.x, &train.y, &spec)?
            } else {
                fit_kernel_ridge(&train.x, &train.y, &spec, lambda)?
            };
            records.push(DoubleDescentRecord {
                features: None,
                ratio: None,
                lambda,
                seed: cfg.task.seed,
                train_mse: mse(&model.predict(&train.x)?, &train.y)?,
                test_mse: mse(&model.predict(&test.x)?, &test.y)?,
                method: CurveMethod::Kernel,
                trace_estimate: None,
                effective_ridge: None,
            });
        }
    }
    Ok(SweepResult {
        variable: "M".into(),
        records,
        replications: cfg.seeds.len(),
    })
}

// ---------------------------------------------------------------------------
// Tunable-kernel comparison

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "kernel-ridge")]
    KernelRidge,
    #[serde(rename = "kernel-ridgeless")]
    KernelRidgeless,
    #[serde(rename = "rf")]
    RandomFeatures,
    #[serde(rename = "rf-sgd")]
    RandomFeaturesSgd,
    #[serde(rename = "rftk")]
    Rftk,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::KernelRidge,
        Method::KernelRidgeless,
        Method::RandomFeatures,
        Method::RandomFeaturesSgd,
        Method::Rftk,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::KernelRidge => "kernel-ridge",
            Method::KernelRidgeless => "kernel-ridgeless",
            Method::RandomFeatures => "rf",
            Method::RandomFeaturesSgd => "rf-sgd",
            Method::Rftk => "rftk",
        }
    }

    pub fn is_kernel(self) -> bool {
        matches!(self, Method::KernelRidge | Method::KernelRidgeless)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Domain(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedDataset {
    pub name: String,
    pub data: Dataset,
    /// Standardize columns on each training split.
    pub standardize: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonConfig {
    pub methods: Vec<Method>,
    pub replications: usize,
    pub seed: u64,
    pub train_frac: f64,
    pub bandwidth: f64,
    pub features: usize,
    /// λ for kernel ridge.
    pub ridge: f64,
    pub batch_size: usize,
    pub epochs: u64,
    pub learning_rate: f64,
    pub trace_weight: f64,
    pub omega_rate: f64,
    pub omega_period: u64,
    pub loss: LossKind,
    /// Kernel methods are skipped on training sets larger than this.
    pub kernel_cap: usize,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        ComparisonConfig {
            methods: Method::ALL.to_vec(),
            replications: 5,
            seed: 0,
            train_frac: 0.8,
            bandwidth: 1.0,
            features: 500,
            ridge: 1e-3,
            batch_size: 32,
            epochs: 100,
            learning_rate: 0.5,
            trace_weight: 1e-3,
            omega_rate: 0.1,
            omega_period: 1,
            loss: LossKind::Squared,
            kernel_cap: 5000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRecord {
    pub dataset: String,
    pub method: Method,
    pub replication: usize,
    /// `None` when the method was skipped.
    pub accuracy: Option<f64>,
}

/// Marker for skipped cells.
pub const SKIPPED_MARKER: &str = "/";

impl CsvRecord for CompareRecord {
    const HEADER: &'static [&'static str] = &["dataset", "method", "replication", "accuracy"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.dataset.clone(),
            self.method.as_str().into(),
            self.replication.to_string(),
            self.accuracy
                .map(fmt_sig)
                .unwrap_or_else(|| SKIPPED_MARKER.into()),
        ]
    }
}

/// Summary cell of the comparison table.
#[derive(Clone, Debug, PartialEq)]
pub struct TableCell {
    pub dataset: String,
    pub method: Method,
    /// `None` when skipped.
    pub mean_sd: Option<(f64, f64)>,
}

impl SweepResult<CompareRecord> {
    /// Mean ± sd of accuracy per dataset and method, in record order.
    pub fn table(&self) -> Vec<TableCell> {
        let mut cells: Vec<(String, Method, Vec<f64>)> = Vec::new();
        for r in &self.records {
            let idx = match cells
                .iter()
                .position(|(d, m, _)| *d == r.dataset && *m == r.method)
            {
                Some(i) => i,
                None => {
                    cells.push((r.dataset.clone(), r.method, Vec::new()));
                    cells.len() - 1
                }
            };
            if let Some(a) = r.accuracy {
                cells[idx].2.push(a);
            }
        }
        cells
            .into_iter()
            .map(|(dataset, method, v)| TableCell {
                dataset,
                method,
                mean_sd: mean_sd(&v),
            })
            .collect()
    }

    pub fn mean_accuracy(&self, dataset: &str, method: Method) -> Option<f64> {
        self.table()
            .into_iter()
            .find(|c| c.dataset == dataset && c.method == method)
            .and_then(|c| c.mean_sd.map(|(m, _)| m))
    }
}

/// Test accuracy of every method on every dataset over replications. Each
/// replication draws one split, one feature map and one batch sequence shared
/// by all methods.
pub fn run_rftk_comparison(
    datasets: &[NamedDataset],
    cfg: &ComparisonConfig,
) -> Result<SweepResult<CompareRecord>> {
    if datasets.is_empty() || cfg.methods.is_empty() || cfg.replications == 0 {
        return Err(Error::Domain(
            "comparison needs datasets, methods and replications".into(),
        ));
    }
    let mut records = Vec::new();
    for ds in datasets {
        if ds.data.task != TaskKind::Classification {
            return Err(Error::Contract(format!(
                "dataset {} is not a classification set",
                ds.name
            )));
        }
        for rep in 0..cfg.replications {
            let rep_seed = derive_seed(cfg.seed, rep as u64);
            let (mut train, mut test) = split(&ds.data, cfg.train_frac, derive_seed(rep_seed, 0))?;
            if ds.standardize {
                Standardizer::fit_apply(&mut train, &mut test)?;
            }
            let fm = FeatureMap::sample(
                train.dim(),
                cfg.features,
                cfg.bandwidth,
                derive_seed(rep_seed, 1),
            )?;
            let sgd = SgdConfig::from_epochs(
                train.len(),
                cfg.batch_size,
                cfg.learning_rate,
                cfg.epochs,
                derive_seed(rep_seed, 2),
            )?;
            for &method in &cfg.methods {
                let accuracy = if method.is_kernel() && train.len() > cfg.kernel_cap {
                    None
                } else {
                    Some(comparison_accuracy(method, &train, &test, &fm, &sgd, cfg)?)
                };
                records.push(CompareRecord {
                    dataset: ds.name.clone(),
                    method,
                    replication: rep,
                    accuracy,
                });
            }
        }
    }
    Ok(SweepResult {
        variable: "method".into(),
        records,
        replications: cfg.replications,
    })
}

fn comparison_accuracy(
    method: Method,
    train: &Dataset,
    test: &Dataset,
    fm: &FeatureMap,
    sgd: &SgdConfig,
    cfg: &ComparisonConfig,
) -> Result<f64> {
    let spec = KernelSpec::gaussian(cfg.bandwidth)?;
    let prediction = match method {
        Method::KernelRidge => {
            fit_kernel_ridge(&train.x, &train.y, &spec, cfg.ridge)?.predict(&test.x)?
        }
        Method::KernelRidgeless => {
            fit_kernel_ridgeless(&train.x, &train.y, &spec)?.predict(&test.x)?
        }
        Method::RandomFeatures => {
            let phi = fm.apply(&train.x)?;
            let w = RidgeSolver::new(&phi)?.weights(&train.y, 0.0)?;
            fm.apply(&test.x)?.matmul(&w)?
        }
        Method::RandomFeaturesSgd => {
            let outcome = match cfg.loss {
                LossKind::Squared => sgd_train(&train.x, &train.y, fm, sgd)?,
                loss => rftk_train(
                    &train.x,
                    &train.y,
                    fm,
                    &RftkConfig::new(sgd.clone(), 0.0, 0.0, 1, loss)?,
                )?,
            };
            outcome.model.predict(&test.x)?
        }
        Method::Rftk => {
            let rftk = RftkConfig::new(
                sgd.clone(),
                cfg.trace_weight,
                cfg.omega_rate,
                cfg.omega_period,
                cfg.loss,
            )?;
            rftk_train(&train.x, &train.y, fm, &rftk)?
                .model
                .predict(&test.x)?
        }
    };
    accuracy(&prediction, &test.y)
}
