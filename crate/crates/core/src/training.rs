//! Mini-batch SGD for ridgeless random features and the tunable-kernel
//! trainer that periodically moves the frequency matrix.
//!
//! Both trainers share one engine. A weight step is
//! `W ← W − (γ/b) Σ_{i∈B} φ(xᵢ)ᵀ gᵢ` where `gᵢ = f(xᵢ) − yᵢ` for the squared
//! loss and `gᵢ = softmax(f(xᵢ)) − yᵢ` for cross-entropy. Batches are drawn
//! uniformly with replacement from a ChaCha8 stream seeded by the config, and
//! that stream is used for nothing else, so runs with the same seed see the
//! same batches whatever else they do.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Predictor, RFModel};
use crate::features::{accumulate_frobenius_grad, FeatureMap};
use crate::numerics::Matrix;

/// How each iteration picks its examples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// `b` indices drawn uniformly with replacement.
    #[default]
    WithReplacement,
    /// Every example once per iteration, in order; turns SGD into full-batch
    /// gradient descent.
    FullBatch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub iterations: u64,
    pub seed: u64,
    /// Trace records are taken every `record_every` iterations, plus at the
    /// start and at the end.
    pub record_every: u64,
    #[serde(default)]
    pub sampling: Sampling,
}

impl SgdConfig {
    pub fn new(batch_size: usize, learning_rate: f64, iterations: u64, seed: u64) -> Result<Self> {
        let cfg = SgdConfig {
            batch_size,
            learning_rate,
            iterations,
            seed,
            record_every: iterations.max(1),
            sampling: Sampling::WithReplacement,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `epochs · ⌈n/b⌉` iterations.
    pub fn from_epochs(
        n: usize,
        batch_size: usize,
        learning_rate: f64,
        epochs: u64,
        seed: u64,
    ) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Domain("batch size must be at least 1".into()));
        }
        SgdConfig::new(
            batch_size,
            learning_rate,
            epochs * iterations_per_epoch(n, batch_size),
            seed,
        )
    }

    pub fn record_every(mut self, every: u64) -> Self {
        self.record_every = every.max(1);
        self
    }

    pub fn sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Domain("batch size must be at least 1".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Domain("iteration count must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Domain(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.record_every == 0 {
            return Err(Error::Domain("record_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Iterations per pass over `n` examples with batch size `b`.
pub fn iterations_per_epoch(n: usize, batch_size: usize) -> u64 {
    n.div_ceil(batch_size.max(1)) as u64
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Squared,
    SoftmaxCrossEntropy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RftkConfig {
    pub sgd: SgdConfig,
    /// β, weight of `‖φ(X)‖²_F` in the objective.
    pub trace_weight: f64,
    /// η, step size of the frequency updates.
    pub omega_rate: f64,
    /// s, frequency updates happen every `s` weight updates.
    pub omega_period: u64,
    pub loss: LossKind,
}

impl RftkConfig {
    pub fn new(
        sgd: SgdConfig,
        trace_weight: f64,
        omega_rate: f64,
        omega_period: u64,
        loss: LossKind,
    ) -> Result<Self> {
        let cfg = RftkConfig {
            sgd,
            trace_weight,
            omega_rate,
            omega_period,
            loss,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.sgd.validate()?;
        if !(self.trace_weight >= 0.0 && self.trace_weight.is_finite()) {
            return Err(Error::Domain(format!(
                "β must be non-negative, got {}",
                self.trace_weight
            )));
        }
        if !(self.omega_rate >= 0.0 && self.omega_rate.is_finite()) {
            return Err(Error::Domain(format!(
                "η must be non-negative, got {}",
                self.omega_rate
            )));
        }
        if self.omega_period == 0 {
            return Err(Error::Domain(
                "frequency update period must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: u64,
    pub epoch: f64,
    /// Data-fit loss over the full training set.
    pub train_loss: f64,
    /// `‖φ(X)‖²_F` on the training inputs.
    pub trace_frobenius: f64,
    pub test_metric: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainTrace {
    pub const CSV_HEADER: [&'static str; 5] = [
        "iter",
        "epoch",
        "train_loss",
        "trace_frobenius",
        "test_metric",
    ];

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Writes `iter,epoch,train_loss,trace_frobenius,test_metric`; a missing
    /// test metric is an empty field.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(Self::CSV_HEADER)?;
        for r in &self.records {
            out.write_record([
                r.iteration.to_string(),
                crate::fmt_sig(r.epoch),
                crate::fmt_sig(r.train_loss),
                crate::fmt_sig(r.trace_frobenius),
                r.test_metric.map(crate::fmt_sig).unwrap_or_default(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Training state handed to observers at every recorded iteration.
pub struct Checkpoint<'a> {
    pub iteration: u64,
    pub weights: &'a Matrix,
    pub feature_map: &'a FeatureMap,
    /// φ(X) for the current feature map.
    pub train_features: &'a Matrix,
}

impl Checkpoint<'_> {
    pub fn model(&self) -> RFModel {
        RFModel {
            weights: self.weights.clone(),
            feature_map: self.feature_map.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Final model; after divergence, the last iterate with finite weights.
    /// Carries the learned feature map for the tunable-kernel trainer.
    pub model: RFModel,
    pub trace: TrainTrace,
    pub diverged: bool,
    /// Weight updates actually applied.
    pub iterations_run: u64,
}

impl TrainOutcome {
    pub fn feature_map(&self) -> &FeatureMap {
        &self.model.feature_map
    }
}

/// Mini-batch SGD on the squared loss from `W₀ = 0` with constant step.
pub fn sgd_train(x: &Matrix, y: &Matrix, fm: &FeatureMap, cfg: &SgdConfig) -> Result<TrainOutcome> {
    sgd_train_observed(x, y, fm, cfg, |_| None)
}

/// [`sgd_train`] with a callback at every recorded iteration; the callback's
/// return value is stored as the record's test metric.
pub fn sgd_train_observed(
    x: &Matrix,
    y: &Matrix,
    fm: &FeatureMap,
    cfg: &SgdConfig,
    observer: impl FnMut(&Checkpoint<'_>) -> Option<f64>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    Engine::new(x, y, fm, cfg, LossKind::Squared, None)?.run(observer)
}

/// Joint training of weights and frequencies.
///
/// Every iteration takes one weight step on a sampled batch. Every `s`-th
/// iteration, after the weight step, Ω moves by `−η ∂L/∂Ω` where the data
/// term of `L` is averaged over the same batch and the `β‖φ(X)‖²_F` term uses
/// all training inputs. Phases never change.
pub fn rftk_train(
    x: &Matrix,
    y: &Matrix,
    fm: &FeatureMap,
    cfg: &RftkConfig,
) -> Result<TrainOutcome> {
    rftk_train_observed(x, y, fm, cfg, |_| None)
}

pub fn rftk_train_observed(
    x: &Matrix,
    y: &Matrix,
    fm: &FeatureMap,
    cfg: &RftkConfig,
    observer: impl FnMut(&Checkpoint<'_>) -> Option<f64>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let schedule = OmegaSchedule {
        trace_weight: cfg.trace_weight,
        rate: cfg.omega_rate,
        period: cfg.omega_period,
    };
    Engine::new(x, y, fm, &cfg.sgd, cfg.loss, Some(schedule))?.run(observer)
}

struct OmegaSchedule {
    trace_weight: f64,
    rate: f64,
    period: u64,
}

struct Engine<'a> {
    x: &'a Matrix,
    y: &'a Matrix,
    fm: FeatureMap,
    phi: Matrix,
    trace_frobenius: f64,
    weights: Matrix,
    cfg: &'a SgdConfig,
    loss: LossKind,
    omega: Option<OmegaSchedule>,
}

impl<'a> Engine<'a> {
    fn new(
        x: &'a Matrix,
        y: &'a Matrix,
        fm: &FeatureMap,
        cfg: &'a SgdConfig,
        loss: LossKind,
        omega: Option<OmegaSchedule>,
    ) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if x.rows() != y.rows() {
            return Err(Error::dims("training targets", x.rows(), y.rows()));
        }
        let phi = fm.apply(x)?;
        let trace_frobenius = phi.frobenius_sq();
        Ok(Engine {
            x,
            y,
            fm: fm.clone(),
            phi,
            trace_frobenius,
            weights: Matrix::zeros(fm.features(), y.cols()),
            cfg,
            loss,
            omega,
        })
    }

    fn run(
        mut self,
        mut observer: impl FnMut(&Checkpoint<'_>) -> Option<f64>,
    ) -> Result<TrainOutcome> {
        let n = self.x.rows();
        let m = self.fm.features();
        let c = self.y.cols();
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let mut batch = Vec::with_capacity(self.cfg.batch_size.max(n));
        let mut grad = Matrix::zeros(m, c);
        let mut scratch = Matrix::zeros(m, c);
        let mut trace = TrainTrace::default();
        let mut diverged = false;
        let mut done = 0;

        if !self.record(0, &mut trace, &mut observer) {
            diverged = true;
        }
        for t in 1..=self.cfg.iterations {
            if diverged {
                break;
            }
            self.sample_batch(&mut rng, &mut batch);
            self.weight_gradient(&batch, &mut grad);
            let step = self.cfg.learning_rate / batch.len() as f64;
            let mut finite = true;
            for ((s, &w), &g) in scratch
                .as_mut_slice()
                .iter_mut()
                .zip(self.weights.as_slice())
                .zip(grad.as_slice())
            {
                *s = w - step * g;
                finite &= s.is_finite();
            }
            if !finite {
                diverged = true;
                break;
            }
            std::mem::swap(&mut self.weights, &mut scratch);
            done = t;

            if let Some(sched) = &self.omega {
                if sched.rate != 0.0 && t % sched.period == 0 && !self.omega_step(&batch) {
                    diverged = true;
                    break;
                }
            }
            if (t % self.cfg.record_every == 0 || t == self.cfg.iterations)
                && !self.record(t, &mut trace, &mut observer)
            {
                diverged = true;
            }
        }
        Ok(TrainOutcome {
            model: RFModel {
                weights: self.weights,
                feature_map: self.fm,
            },
            trace,
            diverged,
            iterations_run: done,
        })
    }

    fn sample_batch(&self, rng: &mut ChaCha8Rng, batch: &mut Vec<usize>) {
        batch.clear();
        let n = self.x.rows();
        match self.cfg.sampling {
            Sampling::WithReplacement => {
                batch.extend((0..self.cfg.batch_size).map(|_| rng.random_range(0..n)));
            }
            Sampling::FullBatch => batch.extend(0..n),
        }
    }

    /// `Σ_{i∈B} φ(xᵢ)ᵀ gᵢ` into `grad`.
    fn weight_gradient(&self, batch: &[usize], grad: &mut Matrix) {
        let c = self.y.cols();
        let mut f = vec![0.0; c];
        grad.as_mut_slice().fill(0.0);
        for &i in batch {
            let phi_i = self.phi.row(i);
            predict_row(phi_i, &self.weights, &mut f);
            output_gradient(self.loss, &mut f, self.y.row(i));
            for (j, &p) in phi_i.iter().enumerate() {
                for (g, &r) in grad.row_mut(j).iter_mut().zip(&f) {
                    *g += p * r;
                }
            }
        }
    }

    /// One frequency update; returns false if Ω became non-finite.
    fn omega_step(&mut self, batch: &[usize]) -> bool {
        let sched = self.omega.as_ref().expect("omega schedule");
        let mut grad = Matrix::zeros(self.fm.dim(), self.fm.features());
        let rows = batch.iter().map(|&i| (self.x.row(i), self.y.row(i)));
        accumulate_data_grad_omega(
            &self.fm,
            &self.weights,
            rows,
            batch.len(),
            self.loss,
            true,
            &mut grad,
        );
        if sched.trace_weight != 0.0 {
            accumulate_frobenius_grad(&self.fm, self.x, sched.trace_weight, &mut grad);
        }
        let rate = sched.rate;
        let mut omega = self.fm.omega().clone();
        for (w, g) in omega.as_mut_slice().iter_mut().zip(grad.as_slice()) {
            *w -= rate * g;
        }
        if omega.as_slice().iter().any(|v| !v.is_finite()) {
            return false;
        }
        self.fm.set_omega(omega);
        self.phi = self.fm.apply(self.x).expect("input width checked at start");
        self.trace_frobenius = self.phi.frobenius_sq();
        true
    }

    fn record(
        &self,
        iteration: u64,
        trace: &mut TrainTrace,
        observer: &mut impl FnMut(&Checkpoint<'_>) -> Option<f64>,
    ) -> bool {
        let train_loss = data_loss(&self.phi, &self.weights, self.y, self.loss);
        let checkpoint = Checkpoint {
            iteration,
            weights: &self.weights,
            feature_map: &self.fm,
            train_features: &self.phi,
        };
        let test_metric = observer(&checkpoint);
        trace.records.push(TraceRecord {
            iteration,
            epoch: iteration as f64 * self.cfg.batch_size as f64 / self.x.rows() as f64,
            train_loss,
            trace_frobenius: self.trace_frobenius,
            test_metric,
        });
        train_loss.is_finite()
    }
}

#[inline]
fn predict_row(phi_i: &[f64], weights: &Matrix, out: &mut [f64]) {
    out.fill(0.0);
    for (j, &p) in phi_i.iter().enumerate() {
        for (o, &w) in out.iter_mut().zip(weights.row(j)) {
            *o += p * w;
        }
    }
}

/// Turns predictions `f` into the per-example output gradient used by the
/// weight step: `f − y` (squared) or `softmax(f) − y` (cross-entropy).
#[inline]
fn output_gradient(loss: LossKind, f: &mut [f64], y: &[f64]) {
    if loss == LossKind::SoftmaxCrossEntropy {
        softmax_in_place(f);
    }
    for (v, &t) in f.iter_mut().zip(y) {
        *v -= t;
    }
}

fn softmax_in_place(f: &mut [f64]) {
    let max = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in f.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in f.iter_mut() {
        *v /= total;
    }
}

/// Per-example loss: `‖f − y‖²` or `−Σₖ yₖ log softmax(f)ₖ`.
fn example_loss(loss: LossKind, f: &[f64], y: &[f64]) -> f64 {
    match loss {
        LossKind::Squared => f.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum(),
        LossKind::SoftmaxCrossEntropy => {
            let max = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_total = f.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            f.iter().zip(y).map(|(v, t)| t * (log_total - v)).sum()
        }
    }
}

fn data_loss(phi: &Matrix, weights: &Matrix, y: &Matrix, loss: LossKind) -> f64 {
    let mut f = vec![0.0; y.cols()];
    let mut total = 0.0;
    for i in 0..phi.rows() {
        predict_row(phi.row(i), weights, &mut f);
        total += example_loss(loss, &f, y.row(i));
    }
    total / phi.rows() as f64
}

/// Adds `∂/∂Ω (1/count) Σ ℓ(φ(xᵢ)W, yᵢ)` over `rows` into `grad`.
///
/// With `weight_step_convention` the squared-loss output gradient is `f − y`
/// (the convention of the weight step) rather than the exact `2(f − y)`.
fn accumulate_data_grad_omega<'r>(
    fm: &FeatureMap,
    weights: &Matrix,
    rows: impl Iterator<Item = (&'r [f64], &'r [f64])>,
    count: usize,
    loss: LossKind,
    weight_step_convention: bool,
    grad: &mut Matrix,
) {
    let m = fm.features();
    let amp = fm.amplitude();
    let out_scale = if loss == LossKind::Squared && !weight_step_convention {
        2.0
    } else {
        1.0
    };
    let mut z = vec![0.0; m];
    let mut phi_i = vec![0.0; m];
    let mut f = vec![0.0; weights.cols()];
    for (xi, yi) in rows {
        fm.activations_into(xi, &mut z);
        for (p, &zj) in phi_i.iter_mut().zip(&z) {
            *p = amp * zj.cos();
        }
        predict_row(&phi_i, weights, &mut f);
        output_gradient(loss, &mut f, yi);
        // ∂f_k/∂ωⱼ = −amp · sin(zⱼ) · W_jk · xᵢ
        for (j, zj) in z.iter_mut().enumerate() {
            let back: f64 = weights.row(j).iter().zip(&f).map(|(w, g)| w * g).sum();
            *zj = -amp * zj.sin() * back * out_scale / count as f64;
        }
        for (k, &xk) in xi.iter().enumerate() {
            for (g, &s) in grad.row_mut(k).iter_mut().zip(&z) {
                *g += s * xk;
            }
        }
    }
}

fn check_objective_inputs(weights: &Matrix, fm: &FeatureMap, x: &Matrix, y: &Matrix) -> Result<()> {
    fm.check_input(x, "rftk objective")?;
    if x.rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if x.rows() != y.rows() {
        return Err(Error::dims("rftk objective targets", x.rows(), y.rows()));
    }
    if weights.rows() != fm.features() || weights.cols() != y.cols() {
        return Err(Error::dims(
            "rftk objective weights",
            format!("{}x{}", fm.features(), y.cols()),
            format!("{}x{}", weights.rows(), weights.cols()),
        ));
    }
    Ok(())
}

/// `L(W, Ω) = (1/n) Σᵢ ℓ(φ(xᵢ)W, yᵢ) + β ‖φ(X)‖²_F`.
pub fn rftk_loss(
    weights: &Matrix,
    fm: &FeatureMap,
    x: &Matrix,
    y: &Matrix,
    trace_weight: f64,
    loss: LossKind,
) -> Result<f64> {
    check_objective_inputs(weights, fm, x, y)?;
    let phi = fm.apply(x)?;
    Ok(data_loss(&phi, weights, y, loss) + trace_weight * phi.frobenius_sq())
}

/// Exact gradients `(∂L/∂W, ∂L/∂Ω)` of [`rftk_loss`] over the full data.
pub fn rftk_gradients(
    weights: &Matrix,
    fm: &FeatureMap,
    x: &Matrix,
    y: &Matrix,
    trace_weight: f64,
    loss: LossKind,
) -> Result<(Matrix, Matrix)> {
    check_objective_inputs(weights, fm, x, y)?;
    let n = x.rows();
    let phi = fm.apply(x)?;
    let scale = if loss == LossKind::Squared { 2.0 } else { 1.0 } / n as f64;
    let mut residual = Matrix::zeros(n, y.cols());
    let mut f = vec![0.0; y.cols()];
    for i in 0..n {
        predict_row(phi.row(i), weights, &mut f);
        output_gradient(loss, &mut f, y.row(i));
        for (r, v) in residual.row_mut(i).iter_mut().zip(&f) {
            *r = v * scale;
        }
    }
    let grad_w = phi.t_matmul(&residual)?;
    let mut grad_omega = Matrix::zeros(fm.dim(), fm.features());
    let rows = (0..n).map(|i| (x.row(i), y.row(i)));
    accumulate_data_grad_omega(fm, weights, rows, n, loss, false, &mut grad_omega);
    if trace_weight != 0.0 {
        accumulate_frobenius_grad(fm, x, trace_weight, &mut grad_omega);
    }
    Ok((grad_w, grad_omega))
}

/// Δ = mean |f_t(xᵢ) − f_ref(xᵢ)| over the rows of `x` (and all outputs).
pub fn stochastic_error(model: &RFModel, reference: &RFModel, x: &Matrix) -> Result<f64> {
    if model.feature_map != reference.feature_map {
        return Err(Error::Contract(
            "stochastic error compares models built on different feature maps".into(),
        ));
    }
    let phi = model.feature_map.apply(x)?;
    stochastic_error_features(&model.weights, &reference.weights, &phi)
}

/// Δ from precomputed features: mean |φ(W − W_ref)|.
pub fn stochastic_error_features(
    weights: &Matrix,
    reference: &Matrix,
    phi: &Matrix,
) -> Result<f64> {
    let gap = phi.matmul(&weights.sub(reference)?)?;
    Ok(gap.as_slice().iter().map(|v| v.abs()).sum::<f64>() / gap.as_slice().len().max(1) as f64)
}

/// Mean squared error over all entries.
pub fn mse(prediction: &Matrix, target: &Matrix) -> Result<f64> {
    let diff = prediction.sub(target)?;
    Ok(diff.frobenius_sq() / diff.rows().max(1) as f64)
}

/// Fraction of rows whose argmax matches the argmax of the one-hot target.
pub fn accuracy(prediction: &Matrix, one_hot: &Matrix) -> Result<f64> {
    if prediction.shape() != one_hot.shape() {
        return Err(Error::dims(
            "accuracy",
            format!("{:?}", one_hot.shape()),
            format!("{:?}", prediction.shape()),
        ));
    }
    let hits = (0..prediction.rows())
        .filter(|&i| argmax(prediction.row(i)) == argmax(one_hot.row(i)))
        .count();
    Ok(hits as f64 / prediction.rows().max(1) as f64)
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| {
            if x > bv {
                (i, x)
            } else {
                (bi, bv)
            }
        })
        .0
}

/// Test-set MSE of a model; handy as an observer body.
pub fn test_mse(model: &impl Predictor, x: &Matrix, y: &Matrix) -> Result<f64> {
    mse(&model.predict(x)?, y)
}
