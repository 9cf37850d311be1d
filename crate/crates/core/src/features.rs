//! Random Fourier features for the Gaussian kernel.
//!
//! A [`FeatureMap`] evaluates `φⱼ(x) = (c/√M)·cos(ωⱼᵀx + bⱼ)` with frequencies
//! `ωⱼ ~ N(0, σ⁻² I)` and phases `bⱼ ~ U[0, 2π)`. With `c = √2` the inner
//! product `⟨φ(x), φ(x')⟩` is an unbiased estimate of
//! `exp(-‖x − x'‖²/(2σ²))`; `c = 1` gives half the kernel.

use std::f64::consts::{SQRT_2, TAU};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{kernel_matrix, KernelSpec};
use crate::numerics::Matrix;

pub const DEFAULT_SCALE: f64 = SQRT_2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    /// d × M frequency matrix; column j is ωⱼ.
    omega: Matrix,
    phases: Vec<f64>,
    bandwidth: f64,
    scale: f64,
    seed: u64,
}

impl FeatureMap {
    /// Samples `features` frequencies for `dim`-dimensional inputs with the
    /// default scale √2.
    pub fn sample(dim: usize, features: usize, bandwidth: f64, seed: u64) -> Result<Self> {
        if dim == 0 || features == 0 {
            return Err(Error::Domain(format!(
                "feature map needs d >= 1 and M >= 1, got d = {dim}, M = {features}"
            )));
        }
        KernelSpec::gaussian(bandwidth)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inv_sigma = bandwidth.sqrt().recip();
        let mut omega = Matrix::zeros(dim, features);
        for j in 0..features {
            for k in 0..dim {
                let z: f64 = StandardNormal.sample(&mut rng);
                omega[(k, j)] = z * inv_sigma;
            }
        }
        let phases = (0..features).map(|_| rng.random_range(0.0..TAU)).collect();
        Ok(FeatureMap {
            omega,
            phases,
            bandwidth,
            scale: DEFAULT_SCALE,
            seed,
        })
    }

    /// Builds a map from explicit parameters.
    pub fn from_parts(
        omega: Matrix,
        phases: Vec<f64>,
        bandwidth: f64,
        scale: f64,
        seed: u64,
    ) -> Result<Self> {
        if omega.rows() == 0 || omega.cols() == 0 {
            return Err(Error::Domain("frequency matrix must be non-empty".into()));
        }
        if phases.len() != omega.cols() {
            return Err(Error::dims(
                "FeatureMap::from_parts",
                omega.cols(),
                phases.len(),
            ));
        }
        if let Some(bad) = phases.iter().find(|p| !(0.0..TAU).contains(*p)) {
            return Err(Error::Domain(format!("phase {bad} outside [0, 2π)")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Domain(format!(
                "scale must be positive, got {scale}"
            )));
        }
        KernelSpec::gaussian(bandwidth)?;
        Ok(FeatureMap {
            omega,
            phases,
            bandwidth,
            scale,
            seed,
        })
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Domain(format!(
                "scale must be positive, got {scale}"
            )));
        }
        self.scale = scale;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.omega.rows()
    }

    pub fn features(&self) -> usize {
        self.omega.cols()
    }

    pub fn omega(&self) -> &Matrix {
        &self.omega
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn kernel(&self) -> KernelSpec {
        KernelSpec::gaussian(self.bandwidth).expect("bandwidth validated at construction")
    }

    /// `c/√M`, the amplitude of every feature.
    #[inline]
    pub fn amplitude(&self) -> f64 {
        self.scale / (self.features() as f64).sqrt()
    }

    /// Replaces the frequency matrix, keeping everything else.
    pub(crate) fn set_omega(&mut self, omega: Matrix) {
        debug_assert_eq!(omega.shape(), self.omega.shape());
        self.omega = omega;
    }

    pub(crate) fn check_input(&self, x: &Matrix, context: &'static str) -> Result<()> {
        if x.cols() != self.dim() {
            return Err(Error::dims(
                context,
                format!("{} input columns", self.dim()),
                x.cols(),
            ));
        }
        Ok(())
    }

    /// Pre-activations `zⱼ = ωⱼᵀx + bⱼ`, accumulated in a fixed order.
    #[inline]
    pub(crate) fn activations_into(&self, x: &[f64], z: &mut [f64]) {
        z.copy_from_slice(&self.phases);
        for (k, &xk) in x.iter().enumerate() {
            for (zj, &w) in z.iter_mut().zip(self.omega.row(k)) {
                *zj += xk * w;
            }
        }
    }

    /// φ(x) for one input row, written into `out`.
    #[inline]
    pub(crate) fn apply_row_into(&self, x: &[f64], out: &mut [f64]) {
        self.activations_into(x, out);
        let a = self.amplitude();
        for v in out.iter_mut() {
            *v = a * v.cos();
        }
    }

    /// Feature matrix φ(X), one row per input.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x, "FeatureMap::apply")?;
        let m = self.features();
        let mut out = Matrix::zeros(x.rows(), m);
        for i in 0..x.rows() {
            self.apply_row_into(x.row(i), out.row_mut(i));
        }
        Ok(out)
    }

    /// Serializes to the flat text record: header, shape, bandwidth, scale,
    /// seed, then Ω row by row and the phases on the last line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "rff-feature-map v1");
        let _ = writeln!(s, "{} {}", self.dim(), self.features());
        let _ = writeln!(s, "{:?} {:?} {}", self.bandwidth, self.scale, self.seed);
        for k in 0..self.dim() {
            let row: Vec<String> = self.omega.row(k).iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        let phases: Vec<String> = self.phases.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(s, "{}", phases.join(" "));
        s
    }

    pub fn write_text(&self, mut w: impl Write) -> Result<()> {
        w.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn read_text(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, line)) => Ok((i + 1, line?)),
                None => Err(Error::Parse {
                    line: 0,
                    message: format!("unexpected end of input, expected {what}"),
                }),
            }
        };
        let (line, header) = next("header")?;
        if header.trim() != "rff-feature-map v1" {
            return Err(Error::Parse {
                line,
                message: format!("unknown header {header:?}"),
            });
        }
        let (line, shape) = next("shape")?;
        let shape: Vec<usize> = parse_fields(&shape, line)?;
        let [dim, features] = shape[..] else {
            return Err(Error::Parse {
                line,
                message: "expected `d M`".into(),
            });
        };
        let (line, meta) = next("bandwidth, scale and seed")?;
        let fields: Vec<&str> = meta.split_whitespace().collect();
        let [bw, sc, sd] = fields[..] else {
            return Err(Error::Parse {
                line,
                message: "expected `bandwidth scale seed`".into(),
            });
        };
        let bandwidth = parse_one::<f64>(bw, line)?;
        let scale = parse_one::<f64>(sc, line)?;
        let seed = parse_one::<u64>(sd, line)?;
        let mut data = Vec::with_capacity(dim * features);
        for _ in 0..dim {
            let (line, row) = next("frequency row")?;
            let row: Vec<f64> = parse_fields(&row, line)?;
            if row.len() != features {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {features} frequencies, found {}", row.len()),
                });
            }
            data.extend(row);
        }
        let (line, phases) = next("phases")?;
        let phases: Vec<f64> = parse_fields(&phases, line)?;
        let omega = Matrix::from_vec(dim, features, data)?;
        FeatureMap::from_parts(omega, phases, bandwidth, scale, seed)
    }
}

fn parse_one<T: std::str::FromStr>(s: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| Error::Parse {
        line,
        message: format!("{s:?}: {e}"),
    })
}

fn parse_fields<T: std::str::FromStr>(s: &str, line: usize) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split_whitespace().map(|f| parse_one(f, line)).collect()
}

/// Largest entrywise gap between `φ(X)φ(X)ᵀ` and the exact kernel matrix.
pub fn kernel_approx_error(fm: &FeatureMap, x: &Matrix, spec: &KernelSpec) -> Result<f64> {
    if fm.bandwidth() != spec.bandwidth() {
        return Err(Error::Contract(format!(
            "feature map bandwidth {} differs from kernel bandwidth {}",
            fm.bandwidth(),
            spec.bandwidth()
        )));
    }
    let phi = fm.apply(x)?;
    let approx = phi.outer_gram();
    let exact = kernel_matrix(x, spec)?;
    Ok(approx.sub(&exact)?.max_abs())
}

/// `‖φ(X)‖²_F = Tr(φ(X)φ(X)ᵀ)`, the feature-space estimate of `Tr(K)`.
pub fn trace_estimate(fm: &FeatureMap, x: &Matrix) -> Result<f64> {
    Ok(fm.apply(x)?.frobenius_sq())
}

/// Gradient of `‖φ(X)‖²_F` with respect to Ω (d × M). Column j is
/// `−(c²/M) Σᵢ sin(2(ωⱼᵀxᵢ + bⱼ)) xᵢ`.
pub fn frobenius_grad_omega(fm: &FeatureMap, x: &Matrix) -> Result<Matrix> {
    fm.check_input(x, "frobenius_grad_omega")?;
    let mut grad = Matrix::zeros(fm.dim(), fm.features());
    accumulate_frobenius_grad(fm, x, 1.0, &mut grad);
    Ok(grad)
}

/// Adds `weight · ∂‖φ(X)‖²_F/∂Ω` into `grad`.
pub(crate) fn accumulate_frobenius_grad(
    fm: &FeatureMap,
    x: &Matrix,
    weight: f64,
    grad: &mut Matrix,
) {
    let m = fm.features();
    let coef = -weight * fm.scale() * fm.scale() / m as f64;
    let mut z = vec![0.0; m];
    for i in 0..x.rows() {
        let xi = x.row(i);
        fm.activations_into(xi, &mut z);
        for v in z.iter_mut() {
            *v = coef * (2.0 * *v).sin();
        }
        for (k, &xk) in xi.iter().enumerate() {
            for (g, &s) in grad.row_mut(k).iter_mut().zip(&z) {
                *g += s * xk;
            }
        }
    }
}
