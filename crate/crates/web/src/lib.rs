//! Browser demo: three small computations exposed to JavaScript. Every export
//! returns a flat `Float64Array`; the layout is given on each function.

use wasm_bindgen::prelude::*;

use ridgeless::experiments::{run_double_descent, DoubleDescentConfig, SyntheticTask};
use ridgeless::features::kernel_approx_error;
use ridgeless::kernels::variance_factor;
use ridgeless::{FeatureMap, KernelSpec, Matrix, Result};

/// `[r₀, α₀, r₁, α₁, …]` for `points` ratios evenly spaced on
/// `(0, max_ratio]`. α is NaN where it is undefined (ratio 1).
pub fn variance_points(max_ratio: f64, points: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * points);
    for i in 1..=points {
        let r = max_ratio * i as f64 / points as f64;
        out.push(r);
        out.push(variance_factor(r).unwrap_or(f64::NAN));
    }
    out
}

/// `[M₀, e₀, M₁, e₁, …]`: max-pair kernel approximation error for each
/// feature count on `n` standard-normal points in `dim` dimensions.
pub fn approximation_points(
    n: usize,
    dim: usize,
    bandwidth: f64,
    counts: &[usize],
    seed: u64,
) -> Result<Vec<f64>> {
    let x = gaussian_points(n, dim, seed);
    let spec = KernelSpec::gaussian(bandwidth)?;
    let mut out = Vec::with_capacity(2 * counts.len());
    for &m in counts {
        let fm = FeatureMap::sample(dim, m, bandwidth, seed.wrapping_add(1))?;
        out.push(m as f64);
        out.push(kernel_approx_error(&fm, &x, &spec)?);
    }
    Ok(out)
}

/// Ratios M/n used by [`double_descent_points`].
pub const DESCENT_RATIOS: [f64; 11] = [0.125, 0.25, 0.5, 0.75, 0.9, 1.0, 1.1, 1.5, 2.0, 3.0, 4.0];

/// `[r₀, mse₀, r₁, mse₁, …, kernel_mse]`: seed-averaged random-features test
/// MSE at each ratio of [`DESCENT_RATIOS`] followed by the kernel baseline.
pub fn double_descent_points(
    n: usize,
    bandwidth: f64,
    noise_sd: f64,
    lambda: f64,
    seeds: u64,
) -> Result<Vec<f64>> {
    let counts: Vec<usize> = DESCENT_RATIOS
        .iter()
        .map(|r| ((r * n as f64).round() as usize).max(1))
        .collect();
    let sweep = run_double_descent(&DoubleDescentConfig {
        task: SyntheticTask {
            n_train: n,
            n_test: n,
            dim: 5,
            noise_sd,
            seed: 0,
        },
        bandwidth,
        feature_counts: counts.clone(),
        lambdas: vec![lambda],
        seeds: (1..=seeds.max(1)).collect(),
        kernel_baseline: true,
    })?;
    let mut out = Vec::with_capacity(2 * counts.len() + 1);
    for &m in &counts {
        out.push(m as f64 / n as f64);
        out.push(
            sweep
                .rf_test_mse(m, lambda)
                .map_or(f64::NAN, |(mean, _)| mean),
        );
    }
    out.push(sweep.kernel_test_mse(lambda).unwrap_or(f64::NAN));
    Ok(out)
}

fn gaussian_points(n: usize, dim: usize, seed: u64) -> Matrix {
    // the synthetic regression inputs are N(0, I)
    ridgeless::data::synthetic_minmax(n.max(1), dim.max(1), 0.0, seed)
        .map(|ds| ds.x)
        .unwrap_or_else(|_| Matrix::zeros(n, dim))
}

fn js(e: ridgeless::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = varianceCurve)]
pub fn variance_curve(max_ratio: f64, points: usize) -> Vec<f64> {
    variance_points(max_ratio, points)
}

#[wasm_bindgen(js_name = kernelApproximation)]
pub fn kernel_approximation(
    n: usize,
    dim: usize,
    bandwidth: f64,
    counts: Vec<u32>,
    seed: u32,
) -> std::result::Result<Vec<f64>, JsError> {
    let counts: Vec<usize> = counts.into_iter().map(|c| c as usize).collect();
    approximation_points(n, dim, bandwidth, &counts, seed as u64).map_err(js)
}

#[wasm_bindgen(js_name = doubleDescent)]
pub fn double_descent(
    n: usize,
    bandwidth: f64,
    noise_sd: f64,
    lambda: f64,
    seeds: u32,
) -> std::result::Result<Vec<f64>, JsError> {
    double_descent_points(n, bandwidth, noise_sd, lambda, seeds as u64).map_err(js)
}
