//! Gaussian kernel evaluation and spectral diagnostics of kernel matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{bisect, default_rcond, sym_eigen, Matrix, SymEigen};

/// Gaussian kernel `K(x, x') = exp(-‖x - x'‖² / (2σ²))`.
///
/// `bandwidth` stores σ². Other shift-invariant kernels can be added as new
/// variants; an implementation must be symmetric and positive semi-definite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    bandwidth: f64,
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::Domain(format!(
                "kernel bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Ok(KernelSpec { bandwidth })
    }

    /// σ².
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    #[inline]
    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        (-sq / (2.0 * self.bandwidth)).exp()
    }
}

pub fn kernel_eval(x: &[f64], y: &[f64], spec: &KernelSpec) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dims("kernel_eval", x.len(), y.len()));
    }
    Ok(spec.eval_unchecked(x, y))
}

/// `K(X, X)`: symmetric with an exactly unit diagonal.
pub fn kernel_matrix(x: &Matrix, spec: &KernelSpec) -> Result<Matrix> {
    let n = x.rows();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut k = Matrix::identity(n);
    for i in 0..n {
        for j in 0..i {
            let v = spec.eval_unchecked(x.row(i), x.row(j));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// `K(A, B)` with rows of `A` against rows of `B`.
pub fn cross_kernel(a: &Matrix, b: &Matrix, spec: &KernelSpec) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(Error::dims("cross_kernel", a.cols(), b.cols()));
    }
    Ok(Matrix::from_fn(a.rows(), b.rows(), |i, j| {
        spec.eval_unchecked(a.row(i), b.row(j))
    }))
}

/// Empirical effective dimension `Ñ(λ) = Tr[K (K + λnI)⁻¹]`.
pub fn effective_dimension(k: &Matrix, lambda: f64) -> Result<f64> {
    k.require_square("effective_dimension")?;
    check_lambda(lambda)?;
    let spectrum = Spectrum::of(k)?;
    Ok(spectrum.effective_dimension(lambda))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    Ok(())
}

/// Clamped, rank-truncated eigenvalues of a PSD kernel matrix.
#[derive(Clone, Debug)]
pub struct Spectrum {
    n: usize,
    values: Vec<f64>,
}

impl Spectrum {
    pub fn of(k: &Matrix) -> Result<Self> {
        let eig = sym_eigen(k)?;
        Ok(Spectrum::from_eigen(&eig))
    }

    /// Eigenvalues below the default cutoff are set to zero.
    pub fn from_eigen(eig: &SymEigen) -> Self {
        let n = eig.dim();
        let cutoff = default_rcond(n, n) * eig.max_value().max(0.0);
        let values = eig
            .values
            .iter()
            .map(|&v| if v > cutoff { v } else { 0.0 })
            .collect();
        Spectrum { n, values }
    }

    pub fn rank(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn effective_dimension(&self, lambda: f64) -> f64 {
        let shift = lambda * self.n as f64;
        self.values.iter().map(|&d| d / (d + shift)).sum()
    }
}

/// Solution of `Ñ(λ) = M` for an underparameterized feature count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveRidge {
    pub lambda: f64,
    /// M / n.
    pub ratio: f64,
    /// `|Ñ(λ)/n − M/n|` at the returned λ.
    pub residual: f64,
}

pub const DEFAULT_RIDGE_TOL: f64 = 1e-10;

/// The ridge λ at which kernel ridge regression carries the same effective
/// dimension as `features` random features: `Tr[K (K + λnI)⁻¹] = M`.
///
/// The search runs in `ln λ`, starting from the bracket `[tol/n, λ_max n]`
/// and widening it by decades until the residual changes sign.
pub fn effective_ridge(k: &Matrix, features: usize, tol: f64) -> Result<EffectiveRidge> {
    k.require_square("effective_ridge")?;
    let spectrum = Spectrum::of(k)?;
    effective_ridge_from_spectrum(&spectrum, features, tol)
}

pub fn effective_ridge_from_spectrum(
    spectrum: &Spectrum,
    features: usize,
    tol: f64,
) -> Result<EffectiveRidge> {
    let n = spectrum.n;
    if features == 0 {
        return Err(Error::Domain("feature count must be positive".into()));
    }
    if features > n {
        return Err(Error::Domain(format!(
            "M = {features} exceeds n = {n}: no effective ridge in the overparameterized regime"
        )));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Domain(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let nf = n as f64;
    let target = features as f64;
    let ratio = target / nf;
    let rank = spectrum.rank();
    if rank < features {
        return Err(Error::Infeasible { rank, features });
    }
    if rank == features {
        return Ok(EffectiveRidge {
            lambda: 0.0,
            ratio,
            residual: 0.0,
        });
    }

    let g = |u: f64| spectrum.effective_dimension(u.exp()) - target;
    let lambda_max = spectrum.values[0];
    let step = std::f64::consts::LN_10;
    let mut lo = (tol / nf).ln();
    let mut hi = (lambda_max * nf).ln();
    for _ in 0..64 {
        if g(lo) > 0.0 {
            break;
        }
        lo -= step;
    }
    for _ in 0..64 {
        if g(hi) < 0.0 {
            break;
        }
        hi += step;
    }
    let root = bisect(g, lo, hi, tol, 4096)?;
    let lambda = root.x.exp();
    let residual = (spectrum.effective_dimension(lambda) - target).abs() / nf;
    Ok(EffectiveRidge {
        lambda,
        ratio,
        residual,
    })
}

/// Variance factor α of the random-features error as a function of M/n:
/// `r/(r−1)` above the interpolation threshold, `1/(1−r)` below it.
pub fn variance_factor(ratio: f64) -> Result<f64> {
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::Domain(format!(
            "ratio must be positive, got {ratio}"
        )));
    }
    if ratio == 1.0 {
        return Err(Error::Singularity);
    }
    Ok(if ratio > 1.0 {
        ratio / (ratio - 1.0)
    } else {
        1.0 / (1.0 - ratio)
    })
}
