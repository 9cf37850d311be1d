use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use ridgeless::data::{
    load_libsvm, split, synthetic_slab_classes, Dataset, Standardizer, TaskKind,
};
use ridgeless::estimators::{fit_kernel_ridge, fit_kernel_ridgeless, fit_rf_ridge};
use ridgeless::experiments::{
    run_double_descent, run_rftk_comparison, run_sgd_factor_study, variance_factor_curve,
    ComparisonConfig, CsvRecord, DoubleDescentConfig, Method, NamedDataset, SgdStudyConfig,
    SweepResult, SyntheticTask,
};
use ridgeless::training::{
    accuracy, mse, rftk_train, sgd_train, RftkConfig, SgdConfig, TrainOutcome,
};
use ridgeless::{fmt_sig, FeatureMap, Model, Predictor};

mod config;

use config::{ConfigError, DataSource, Defaults, Resolved, RunConfig};

#[derive(Parser)]
#[command(
    name = "ridgeless",
    version,
    about = "Ridgeless regression with random Fourier features"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write it as JSON.
    Fit(RunArgs),
    /// Run an experiment sweep and write its CSV.
    Experiment {
        #[arg(value_enum)]
        name: Experiment,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Summarize a model JSON file or a feature-map text record.
    Inspect { path: PathBuf },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Flat TOML config; flags override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: RunConfig,
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    SgdFactors,
    DoubleDescent,
    RftkCompare,
    VarianceCurve,
}

impl RunArgs {
    fn resolve(&self, defaults: Defaults) -> Result<Resolved> {
        let base = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        Ok(Resolved::new(base.overlay(&self.flags), defaults)?)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => args.resolve(Defaults::FIT).and_then(|cfg| cmd_fit(&cfg)),
        Command::Experiment { name, args } => {
            let defaults = match name {
                Experiment::SgdFactors => Defaults::SGD,
                Experiment::DoubleDescent => Defaults::DOUBLE_DESCENT,
                Experiment::RftkCompare => Defaults::COMPARE,
                Experiment::VarianceCurve => Defaults::FIT,
            };
            args.resolve(defaults)
                .and_then(|cfg| cmd_experiment(name, &cfg))
        }
        Command::Inspect { path } => cmd_inspect(&path),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn load_source(source: &DataSource, cfg: &Resolved) -> Result<(Dataset, Dataset)> {
    let (mut train, mut test) = match source {
        DataSource::Synthetic => SyntheticTask {
            n_train: cfg.n_train,
            n_test: cfg.n_test,
            dim: cfg.dim,
            noise_sd: cfg.noise_sd,
            seed: cfg.data_seed,
        }
        .generate()?,
        DataSource::SyntheticClasses => {
            synthetic_slab_classes(cfg.n_train + cfg.n_test, cfg.dim, cfg.data_seed)?
                .split_at(cfg.n_train)
        }
        DataSource::File(path) => {
            let mut ds =
                load_libsvm(path, None).with_context(|| format!("loading {}", path.display()))?;
            if cfg.task == Some(TaskKind::Classification) {
                ds = ds.into_classification()?;
            }
            split(&ds, cfg.train_frac, cfg.data_seed)?
        }
    };
    if standardize(source, cfg) {
        Standardizer::fit_apply(&mut train, &mut test)?;
    }
    Ok((train, test))
}

fn standardize(source: &DataSource, cfg: &Resolved) -> bool {
    cfg.standardize
        .unwrap_or(matches!(source, DataSource::File(_)))
}

fn sgd_config(cfg: &Resolved, n: usize) -> Result<SgdConfig> {
    let sgd = match cfg.iterations {
        Some(t) => SgdConfig::new(cfg.batch_size, cfg.learning_rate, t, cfg.seed)?,
        None => SgdConfig::from_epochs(n, cfg.batch_size, cfg.learning_rate, cfg.epochs, cfg.seed)?,
    };
    Ok(sgd.record_every(ridgeless::training::iterations_per_epoch(n, cfg.batch_size)))
}

fn metric_fields(model: &impl Predictor, train: &Dataset, test: &Dataset) -> Result<String> {
    let (name, metric): (
        &str,
        fn(&ridgeless::Matrix, &ridgeless::Matrix) -> ridgeless::Result<f64>,
    ) = match train.task {
        TaskKind::Regression => ("mse", mse),
        TaskKind::Classification => ("accuracy", accuracy),
    };
    Ok(format!(
        "train_{name}={} test_{name}={}",
        fmt_sig(metric(&model.predict(&train.x)?, &train.y)?),
        fmt_sig(metric(&model.predict(&test.x)?, &test.y)?),
    ))
}

fn write_file(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut out =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write(&mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_fit(cfg: &Resolved) -> Result<()> {
    let (train, test) = load_source(&cfg.data, cfg)?;
    let spec = ridgeless::KernelSpec::gaussian(cfg.bandwidth)?;
    let fm = FeatureMap::sample(train.dim(), cfg.features, cfg.bandwidth, cfg.seed)?;
    let mut outcome: Option<TrainOutcome> = None;
    let model = match cfg.method {
        Method::KernelRidge => Model::Kernel(fit_kernel_ridge(
            &train.x,
            &train.y,
            &spec,
            cfg.kernel_ridge(0.0)?,
        )?),
        Method::KernelRidgeless => Model::Kernel(fit_kernel_ridgeless(&train.x, &train.y, &spec)?),
        Method::RandomFeatures => Model::RandomFeatures(fit_rf_ridge(
            &train.x,
            &train.y,
            &fm,
            cfg.lambda.unwrap_or(0.0),
        )?),
        Method::RandomFeaturesSgd | Method::Rftk => {
            let sgd = sgd_config(cfg, train.len())?;
            let out = if cfg.method == Method::Rftk {
                let rftk = RftkConfig::new(
                    sgd,
                    cfg.trace_weight,
                    cfg.omega_rate,
                    cfg.omega_period,
                    cfg.loss,
                )?;
                rftk_train(&train.x, &train.y, &fm, &rftk)?
            } else if cfg.loss == ridgeless::training::LossKind::Squared {
                sgd_train(&train.x, &train.y, &fm, &sgd)?
            } else {
                rftk_train(
                    &train.x,
                    &train.y,
                    &fm,
                    &RftkConfig::new(sgd, 0.0, 0.0, 1, cfg.loss)?,
                )?
            };
            let model = Model::RandomFeatures(out.model.clone());
            outcome = Some(out);
            model
        }
    };

    let path = cfg.output_path("model.json");
    write_file(&path, |w| Ok(serde_json::to_writer_pretty(w, &model)?))?;
    if let Some(fm_path) = &cfg.feature_map_out {
        match &model {
            Model::RandomFeatures(m) => {
                write_file(fm_path, |w| Ok(m.feature_map.write_text(w)?))?
            }
            Model::Kernel(_) => bail!("feature_map_out needs a random-features method"),
        }
    }
    if let Some(trace_path) = &cfg.trace_out {
        match &outcome {
            Some(out) => write_file(trace_path, |w| Ok(out.trace.write_csv(w)?))?,
            None => bail!("trace_out needs rf-sgd or rftk"),
        }
    }

    let mut line = format!("method={} n={} ", cfg.method, train.len());
    if !cfg.method.is_kernel() {
        line.push_str(&format!("M={} ", cfg.features));
    }
    if matches!(cfg.method, Method::KernelRidge | Method::RandomFeatures) {
        line.push_str(&format!("lambda={} ", fmt_sig(cfg.lambda.unwrap_or(0.0))));
    }
    line.push_str(&metric_fields(&model, &train, &test)?);
    if let Some(out) = &outcome {
        line.push_str(&format!(
            " iterations={} diverged={}",
            out.iterations_run, out.diverged
        ));
    }
    println!("{line}");
    println!("model written to {}", path.display());
    Ok(())
}

fn emit<R: CsvRecord>(cfg: &Resolved, default_name: &str, sweep: &SweepResult<R>) -> Result<()> {
    let path = cfg.output_path(default_name);
    write_file(&path, |w| Ok(sweep.write_csv(w)?))?;
    println!("{} ({} rows)", path.display(), sweep.len());
    Ok(())
}

fn cmd_experiment(name: Experiment, cfg: &Resolved) -> Result<()> {
    let task = SyntheticTask {
        n_train: cfg.n_train,
        n_test: cfg.n_test,
        dim: cfg.dim,
        noise_sd: cfg.noise_sd,
        seed: cfg.data_seed,
    };
    match name {
        Experiment::VarianceCurve => emit(
            cfg,
            "variance-curve.csv",
            &variance_factor_curve(&cfg.ratios)?,
        ),
        Experiment::DoubleDescent => {
            let n = cfg.n_train;
            let feature_counts = cfg
                .feature_counts
                .clone()
                .unwrap_or_else(|| vec![n / 8, n / 4, n / 2, n, 2 * n, 4 * n]);
            let sweep = run_double_descent(&DoubleDescentConfig {
                task,
                bandwidth: cfg.bandwidth,
                feature_counts,
                lambdas: cfg.lambdas.clone(),
                seeds: cfg.seeds.clone(),
                kernel_baseline: cfg.kernel_baseline,
            })?;
            emit(cfg, "double-descent.csv", &sweep)
        }
        Experiment::SgdFactors => {
            let study = run_sgd_factor_study(&SgdStudyConfig {
                task,
                bandwidth: cfg.bandwidth,
                features: cfg.features,
                cells: SgdStudyConfig::grid(&cfg.batch_sizes, &cfg.learning_rates, cfg.epochs),
                seeds: cfg.seeds.clone(),
            })?;
            for (cell, seed) in &study.diverged {
                eprintln!(
                    "warning: b={} gamma={} diverged for seed {seed}",
                    cell.batch_size,
                    fmt_sig(cell.learning_rate)
                );
            }
            emit(cfg, "sgd-factors.csv", &study.sweep)
        }
        Experiment::RftkCompare => {
            let mut datasets = Vec::new();
            for source in &cfg.datasets {
                let data = match source {
                    DataSource::Synthetic => {
                        bail!("rftk-compare needs classification data, not `synthetic`")
                    }
                    DataSource::SyntheticClasses => {
                        synthetic_slab_classes(cfg.n_train + cfg.n_test, cfg.dim, cfg.data_seed)?
                    }
                    DataSource::File(path) => load_libsvm(path, None)
                        .with_context(|| format!("loading {}", path.display()))?,
                };
                let data = match data.task {
                    TaskKind::Classification => data,
                    TaskKind::Regression => data.into_classification()?,
                };
                datasets.push(NamedDataset {
                    name: source.name(),
                    data,
                    standardize: standardize(source, cfg),
                });
            }
            let comparison = ComparisonConfig {
                methods: cfg.methods.clone(),
                replications: cfg.replications,
                seed: cfg.seed,
                train_frac: cfg.train_frac,
                bandwidth: cfg.bandwidth,
                features: cfg.features,
                ridge: cfg.kernel_ridge(1e-4)?,
                batch_size: cfg.batch_size,
                epochs: cfg.epochs,
                learning_rate: cfg.learning_rate,
                trace_weight: cfg.trace_weight,
                omega_rate: cfg.omega_rate,
                omega_period: cfg.omega_period,
                loss: cfg.loss,
                kernel_cap: cfg.kernel_cap,
            };
            let result = run_rftk_comparison(&datasets, &comparison)?;
            for cell in result.table() {
                match cell.mean_sd {
                    Some((m, s)) => eprintln!(
                        "{:<20} {:<17} {:.2} ± {:.2}",
                        cell.dataset,
                        cell.method,
                        100.0 * m,
                        100.0 * s
                    ),
                    None => eprintln!("{:<20} {:<17} /", cell.dataset, cell.method),
                }
            }
            emit(cfg, "rftk-compare.csv", &result)
        }
    }
}

fn cmd_inspect(path: &Path) -> Result<()> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.starts_with("rff-feature-map") {
        let fm = FeatureMap::read_text(BufReader::new(text.as_bytes()))?;
        println!("feature map: {}", path.display());
        describe_feature_map(&fm);
        return Ok(());
    }
    let model: Model = serde_json::from_str(&text)
        .with_context(|| format!("{} is neither a model nor a feature map", path.display()))?;
    println!("model: {}", path.display());
    match &model {
        Model::Kernel(m) => {
            println!("kind: kernel");
            println!("train points: {}", m.train_inputs.rows());
            println!("input dim: {}", m.train_inputs.cols());
            println!("outputs: {}", m.dual_coeffs.cols());
            println!("bandwidth: {}", fmt_sig(m.spec.bandwidth()));
            println!("lambda: {}", fmt_sig(m.ridge));
        }
        Model::RandomFeatures(m) => {
            println!("kind: random_features");
            println!("outputs: {}", m.weights.cols());
            println!("weight norm: {}", fmt_sig(m.weights.frobenius_sq().sqrt()));
            describe_feature_map(&m.feature_map);
        }
    }
    Ok(())
}

fn describe_feature_map(fm: &FeatureMap) {
    let omega = fm.omega();
    let mean_norm = (0..fm.features())
        .map(|j| {
            (0..fm.dim())
                .map(|k| omega[(k, j)].powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum::<f64>()
        / fm.features() as f64;
    println!("input dim: {}", fm.dim());
    println!("features: {}", fm.features());
    println!("bandwidth: {}", fmt_sig(fm.bandwidth()));
    println!("scale: {}", fmt_sig(fm.scale()));
    println!("seed: {}", fm.seed());
    println!("mean frequency norm: {}", fmt_sig(mean_norm));
}
