//! Datasets: libsvm text I/O, synthetic tasks, splits and standardization.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::training::argmax;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Regression,
    Classification,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Matrix,
    pub task: TaskKind,
    /// Class names in one-hot column order, for classification.
    pub class_labels: Option<Vec<String>>,
}

impl Dataset {
    pub fn regression(x: Matrix, y: Matrix) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::dims("Dataset targets", x.rows(), y.rows()));
        }
        Ok(Dataset {
            x,
            y,
            task: TaskKind::Regression,
            class_labels: None,
        })
    }

    /// Classification dataset with one-hot targets.
    pub fn classification(x: Matrix, y: Matrix, class_labels: Vec<String>) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::dims("Dataset targets", x.rows(), y.rows()));
        }
        if y.cols() != class_labels.len() {
            return Err(Error::dims("Dataset classes", class_labels.len(), y.cols()));
        }
        for i in 0..y.rows() {
            let row = y.row(i);
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            if ones != 1 || row.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Contract(format!("target row {i} is not one-hot")));
            }
        }
        Ok(Dataset {
            x,
            y,
            task: TaskKind::Classification,
            class_labels: Some(class_labels),
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn outputs(&self) -> usize {
        self.y.cols()
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(indices),
            y: self.y.select_rows(indices),
            task: self.task,
            class_labels: self.class_labels.clone(),
        }
    }

    /// First `k` rows and the rest.
    pub fn split_at(&self, k: usize) -> (Dataset, Dataset) {
        let k = k.min(self.len());
        let head: Vec<usize> = (0..k).collect();
        let tail: Vec<usize> = (k..self.len()).collect();
        (self.select(&head), self.select(&tail))
    }

    /// Turns a single raw label column into one-hot targets. Classes are the
    /// distinct labels in ascending numeric order.
    pub fn into_classification(self) -> Result<Dataset> {
        if self.y.cols() != 1 {
            return Err(Error::Contract(format!(
                "expected one raw label column, found {}",
                self.y.cols()
            )));
        }
        let raw = self.y.col_to_vec(0);
        let mut classes = raw.clone();
        classes.sort_by(f64::total_cmp);
        classes.dedup();
        let y = one_hot(&raw, &classes)?;
        let names = classes.iter().map(|c| format_label(*c)).collect();
        Dataset::classification(self.x, y, names)
    }

    /// Class index per row (argmax of the one-hot targets).
    pub fn class_indices(&self) -> Vec<usize> {
        (0..self.len()).map(|i| argmax(self.y.row(i))).collect()
    }

    /// Writes `x1..xd,y1..yc` with a header row.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let header: Vec<String> = (1..=self.dim())
            .map(|j| format!("x{j}"))
            .chain((1..=self.outputs()).map(|j| format!("y{j}")))
            .collect();
        out.write_record(&header)?;
        for i in 0..self.len() {
            let row: Vec<String> = self
                .x
                .row(i)
                .iter()
                .chain(self.y.row(i))
                .map(|&v| crate::fmt_sig(v))
                .collect();
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn format_label(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

/// One-hot rows for `labels` against the ordered `classes`.
pub fn one_hot<L: PartialEq + std::fmt::Debug>(labels: &[L], classes: &[L]) -> Result<Matrix> {
    let mut y = Matrix::zeros(labels.len(), classes.len());
    for (i, label) in labels.iter().enumerate() {
        let c = classes
            .iter()
            .position(|k| k == label)
            .ok_or_else(|| Error::UnknownLabel(format!("{label:?}")))?;
        y[(i, c)] = 1.0;
    }
    Ok(y)
}

/// Reads a libsvm file (`label idx:val ...`, 1-based indices).
pub fn load_libsvm(path: impl AsRef<Path>, n_features: Option<usize>) -> Result<Dataset> {
    parse_libsvm(BufReader::new(File::open(path)?), n_features)
}

/// Parses libsvm text. Missing entries are zero and labels stay raw in a
/// single target column; the width is the largest index seen unless
/// `n_features` is given.
pub fn parse_libsvm(r: impl BufRead, n_features: Option<usize>) -> Result<Dataset> {
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut width = 0;
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("invalid label {label_tok:?}"),
        })?;
        let mut entries = Vec::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                message: format!("expected index:value, found {tok:?}"),
            })?;
            let index: usize = idx.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("invalid feature index {idx:?}"),
            })?;
            if index == 0 {
                return Err(Error::Parse {
                    line: lineno,
                    message: "feature indices are 1-based".into(),
                });
            }
            let value: f64 = val.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("invalid feature value {val:?}"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("non-finite feature value {val:?}"),
                });
            }
            if let Some(limit) = n_features {
                if index > limit {
                    return Err(Error::FeatureBounds {
                        line: lineno,
                        index,
                        n_features: limit,
                    });
                }
            }
            width = width.max(index);
            entries.push((index - 1, value));
        }
        labels.push(label);
        rows.push(entries);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = n_features.unwrap_or(width);
    let mut x = Matrix::zeros(rows.len(), d);
    for (i, entries) in rows.iter().enumerate() {
        for &(j, v) in entries {
            x[(i, j)] = v;
        }
    }
    Dataset::regression(x, Matrix::column(&labels)?)
}

/// Writes every feature (zeros included) so reading back is exact.
/// Classification datasets write their class names as labels.
pub fn write_libsvm(mut w: impl Write, ds: &Dataset) -> Result<()> {
    for i in 0..ds.len() {
        let label = match &ds.class_labels {
            Some(names) => names[argmax(ds.y.row(i))].clone(),
            None if ds.outputs() == 1 => format!("{:?}", ds.y[(i, 0)]),
            None => {
                return Err(Error::Contract(
                    "libsvm output needs a single target column or class labels".into(),
                ))
            }
        };
        write!(w, "{label}")?;
        for (j, v) in ds.x.row(i).iter().enumerate() {
            write!(w, " {}:{v:?}", j + 1)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// `y = min(−wᵀx, wᵀx) + ε` with `x, w ~ N(0, I_d)` and `ε ~ N(0, noise_sd²)`.
/// `w` is drawn once per seed, before the samples.
pub fn synthetic_minmax(n: usize, d: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    minmax_with_direction(n, d, noise_sd, seed).map(|(ds, _)| ds)
}

fn minmax_with_direction(
    n: usize,
    d: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<(Dataset, Vec<f64>)> {
    if n == 0 || d == 0 {
        return Err(Error::Domain(format!(
            "need n, d >= 1, got n = {n}, d = {d}"
        )));
    }
    let noise = Normal::new(0.0, noise_sd)
        .map_err(|e| Error::Domain(format!("noise_sd {noise_sd}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut x = Matrix::zeros(n, d);
    let mut y = Matrix::zeros(n, 1);
    for i in 0..n {
        let row = x.row_mut(i);
        for v in row.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let proj: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum();
        let eps = if noise_sd > 0.0 {
            noise.sample(&mut rng)
        } else {
            0.0
        };
        y[(i, 0)] = (-proj).min(proj) + eps;
    }
    Ok((Dataset::regression(x, y)?, w))
}

/// Two-class version of the min-max task: class "1" when `|wᵀx| / ‖w‖` is
/// below the median of `|N(0, 1)|`, so the classes are balanced in
/// expectation and separated by a pair of parallel hyperplanes.
pub fn synthetic_slab_classes(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    const HALF_NORMAL_MEDIAN: f64 = 0.674_489_750_196_081_7;
    let (base, w) = minmax_with_direction(n, d, 0.0, seed)?;
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let labels: Vec<usize> = (0..n)
        .map(|i| usize::from(-base.y[(i, 0)] / norm < HALF_NORMAL_MEDIAN))
        .collect();
    let y = one_hot(&labels, &[0, 1])?;
    Dataset::classification(base.x, y, vec!["0".into(), "1".into()])
}

/// Seeded random split into `(train, test)` with `round(frac · n)` training rows.
pub fn split(ds: &Dataset, train_frac: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Domain(format!(
            "train fraction must lie in (0, 1), got {train_frac}"
        )));
    }
    let perm = permutation(ds.len(), seed);
    let k = ((train_frac * ds.len() as f64).round() as usize).min(ds.len());
    Ok((ds.select(&perm[..k]), ds.select(&perm[k..])))
}

pub(crate) fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    perm
}

/// Per-column affine standardization fitted on one matrix and applied to
/// others.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Columns with zero spread keep scale 1.
    pub fn fit(x: &Matrix) -> Self {
        let n = x.rows().max(1) as f64;
        let d = x.cols();
        let mut mean = vec![0.0; d];
        for i in 0..x.rows() {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for i in 0..x.rows() {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v > 0.0 { v.sqrt() } else { 1.0 })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::dims(
                "Standardizer::apply",
                self.mean.len(),
                x.cols(),
            ));
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    /// Fits on `train` and standardizes both datasets' inputs.
    pub fn fit_apply(train: &mut Dataset, test: &mut Dataset) -> Result<Standardizer> {
        let st = Standardizer::fit(&train.x);
        train.x = st.apply(&train.x)?;
        test.x = st.apply(&test.x)?;
        Ok(st)
    }
}
