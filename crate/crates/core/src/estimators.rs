//! Closed-form predictors: kernel ridge, kernel ridgeless, ridgeless random
//! features and the spectral form of full-batch gradient descent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::kernels::{cross_kernel, kernel_matrix, KernelSpec};
use crate::numerics::{default_rcond, sym_eigen, Matrix};

pub trait Predictor {
    fn predict(&self, x: &Matrix) -> Result<Matrix>;
}

/// Dual-form kernel predictor `f(x) = K(x, X) α`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelModel {
    pub dual_coeffs: Matrix,
    pub train_inputs: Matrix,
    pub spec: KernelSpec,
    /// 0 for the ridgeless (pseudo-inverse) fit.
    pub ridge: f64,
}

/// Primal random-features predictor `f(x) = φ(x) W`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RFModel {
    pub weights: Matrix,
    pub feature_map: FeatureMap,
}

impl RFModel {
    pub fn new(weights: Matrix, feature_map: FeatureMap) -> Result<Self> {
        if weights.rows() != feature_map.features() {
            return Err(Error::dims(
                "RFModel::new",
                feature_map.features(),
                weights.rows(),
            ));
        }
        Ok(RFModel {
            weights,
            feature_map,
        })
    }

    pub fn zeros(feature_map: FeatureMap, outputs: usize) -> Self {
        RFModel {
            weights: Matrix::zeros(feature_map.features(), outputs),
            feature_map,
        }
    }

    /// Predictions from precomputed features φ(X).
    pub fn predict_features(&self, phi: &Matrix) -> Result<Matrix> {
        phi.matmul(&self.weights)
    }
}

impl Predictor for KernelModel {
    fn predict(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.train_inputs.cols() {
            return Err(Error::dims(
                "KernelModel::predict",
                self.train_inputs.cols(),
                x.cols(),
            ));
        }
        cross_kernel(x, &self.train_inputs, &self.spec)?.matmul(&self.dual_coeffs)
    }
}

impl Predictor for RFModel {
    fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.predict_features(&self.feature_map.apply(x)?)
    }
}

/// Any fitted model, as stored in model files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Kernel(KernelModel),
    RandomFeatures(RFModel),
}

impl Predictor for Model {
    fn predict(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Model::Kernel(m) => m.predict(x),
            Model::RandomFeatures(m) => m.predict(x),
        }
    }
}

fn check_targets(x: &Matrix, y: &Matrix, context: &'static str) -> Result<()> {
    if x.rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if x.rows() != y.rows() {
        return Err(Error::dims(
            context,
            format!("{} target rows", x.rows()),
            y.rows(),
        ));
    }
    Ok(())
}

/// Kernel ridgeless interpolant `α = K(X, X)† Y`.
pub fn fit_kernel_ridgeless(x: &Matrix, y: &Matrix, spec: &KernelSpec) -> Result<KernelModel> {
    check_targets(x, y, "fit_kernel_ridgeless")?;
    let n = x.rows();
    let k = kernel_matrix(x, spec)?;
    let dual_coeffs = sym_eigen(&k)?.pinv_apply(y, default_rcond(n, n))?;
    Ok(KernelModel {
        dual_coeffs,
        train_inputs: x.clone(),
        spec: *spec,
        ridge: 0.0,
    })
}

/// Kernel ridge regression `α = (K + λnI)⁻¹ Y`.
pub fn fit_kernel_ridge(
    x: &Matrix,
    y: &Matrix,
    spec: &KernelSpec,
    lambda: f64,
) -> Result<KernelModel> {
    check_targets(x, y, "fit_kernel_ridge")?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!(
            "ridge must be positive (use fit_kernel_ridgeless for λ = 0), got {lambda}"
        )));
    }
    let n = x.rows();
    let shift = lambda * n as f64;
    let k = kernel_matrix(x, spec)?;
    let dual_coeffs = sym_eigen(&k)?.apply_spectral(y, |_| true, |d| 1.0 / (d.max(0.0) + shift))?;
    Ok(KernelModel {
        dual_coeffs,
        train_inputs: x.clone(),
        spec: *spec,
        ridge: lambda,
    })
}

/// Minimum-norm least-squares weights `W = (φᵀφ)† φᵀ Y`.
///
/// Solves on whichever side is smaller: the M × M Gram matrix when M ≤ n,
/// otherwise `W = φᵀ (φφᵀ)† Y` through the n × n feature kernel.
pub fn fit_rf_ridgeless(x: &Matrix, y: &Matrix, fm: &FeatureMap) -> Result<RFModel> {
    check_targets(x, y, "fit_rf_ridgeless")?;
    let phi = fm.apply(x)?;
    let weights = RidgeSolver::new(&phi)?.weights(y, 0.0)?;
    RFModel::new(weights, fm.clone())
}

/// Random-features ridge regression `W = (φᵀφ + λnI)⁻¹ φᵀ Y`, solved on the
/// smaller side like [`fit_rf_ridgeless`]. `λ = 0` falls back to the
/// ridgeless solution.
pub fn fit_rf_ridge(x: &Matrix, y: &Matrix, fm: &FeatureMap, lambda: f64) -> Result<RFModel> {
    check_targets(x, y, "fit_rf_ridge")?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!(
            "ridge must be non-negative, got {lambda}"
        )));
    }
    let phi = fm.apply(x)?;
    let solver = RidgeSolver::new(&phi)?;
    RFModel::new(solver.weights(y, lambda)?, fm.clone())
}

/// One eigendecomposition of the smaller Gram matrix of φ(X), reused for any
/// number of ridge values.
pub struct RidgeSolver<'a> {
    phi: &'a Matrix,
    eig: crate::numerics::SymEigen,
    primal: bool,
}

impl<'a> RidgeSolver<'a> {
    pub fn new(phi: &'a Matrix) -> Result<Self> {
        let (n, m) = phi.shape();
        let primal = m <= n;
        let eig = sym_eigen(&if primal { phi.gram() } else { phi.outer_gram() })?;
        Ok(RidgeSolver { phi, eig, primal })
    }

    /// Weights for ridge `λ` (`λ = 0` is the minimum-norm ridgeless fit).
    pub fn weights(&self, y: &Matrix, lambda: f64) -> Result<Matrix> {
        let (n, m) = self.phi.shape();
        let shift = lambda * n as f64;
        let cutoff = default_rcond(n, m) * self.eig.max_value().max(0.0);
        let solve = |rhs: &Matrix| {
            if lambda == 0.0 {
                self.eig.pinv_apply(rhs, default_rcond(n, m))
            } else {
                self.eig
                    .apply_spectral(rhs, |k| k > cutoff && k > 0.0, |k| 1.0 / (k + shift))
            }
        };
        if self.primal {
            solve(&self.phi.t_matmul(y)?)
        } else {
            self.phi.t_matmul(&solve(y)?)
        }
    }
}

/// `1 − (1 − q)^t`, accurate for small `q`.
fn geometric_gain(q: f64, t: u64) -> f64 {
    if q > 0.0 && q < 1.0 {
        -(t as f64 * (-q).ln_1p()).exp_m1()
    } else {
        1.0 - (1.0 - q).powf(t as f64)
    }
}

/// Weights after `t` full-batch gradient steps from `W₀ = 0`:
/// `W_t = [I − (I − (γ/n)φᵀφ)ᵗ] (φᵀφ)† φᵀ Y`, evaluated in the eigenbasis of
/// whichever Gram matrix is smaller. Step sizes above [`gd_step_limit`] are
/// honoured; the result then tracks the diverging iteration.
pub fn gd_closed_form(
    x: &Matrix,
    y: &Matrix,
    fm: &FeatureMap,
    step: f64,
    t: u64,
) -> Result<RFModel> {
    check_targets(x, y, "gd_closed_form")?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Domain(format!(
            "learning rate must be positive, got {step}"
        )));
    }
    let phi = fm.apply(x)?;
    let (n, m) = phi.shape();
    let nf = n as f64;
    let cutoff_rcond = default_rcond(n, m);
    let spectral = |k: f64| geometric_gain(step * k / nf, t) / k;
    let weights = if m <= n {
        let eig = sym_eigen(&phi.gram())?;
        let cutoff = cutoff_rcond * eig.max_value().max(0.0);
        eig.apply_spectral(&phi.t_matmul(y)?, |k| k > cutoff && k > 0.0, spectral)?
    } else {
        let eig = sym_eigen(&phi.outer_gram())?;
        let cutoff = cutoff_rcond * eig.max_value().max(0.0);
        let dual = eig.apply_spectral(y, |k| k > cutoff && k > 0.0, spectral)?;
        phi.t_matmul(&dual)?
    };
    RFModel::new(weights, fm.clone())
}

/// `n / λ_max(φᵀφ)`: learning rates below this keep full-batch descent
/// monotone.
pub fn gd_step_limit(x: &Matrix, fm: &FeatureMap) -> Result<f64> {
    let phi = fm.apply(x)?;
    let (n, m) = phi.shape();
    let g = if m <= n { phi.gram() } else { phi.outer_gram() };
    Ok(n as f64 / sym_eigen(&g)?.max_value())
}
