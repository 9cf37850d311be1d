//! Dense linear algebra and root finding.
//!
//! [`Matrix`] is a small row-major matrix type that guarantees finite entries.
//! Heavy kernels (matrix products, symmetric eigendecomposition) are delegated
//! to `faer` running sequentially, which keeps results bit-identical from run
//! to run on a given machine.

use std::ops::{Index, IndexMut};

use faer::{Mat, MatRef, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of finite `f64` values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRecord", into = "MatrixRecord")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MatrixRecord {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<MatrixRecord> for Matrix {
    type Error = Error;

    fn try_from(r: MatrixRecord) -> Result<Self> {
        Matrix::from_vec(r.rows, r.cols, r.data)
    }
}

impl From<Matrix> for MatrixRecord {
    fn from(m: Matrix) -> Self {
        MatrixRecord {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

impl Matrix {
    /// Builds a matrix from row-major entries. Rejects wrong lengths and
    /// non-finite values.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::dims(
                "Matrix::from_vec",
                format!("{} entries", rows * cols),
                format!("{} entries", data.len()),
            ));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "Matrix::from_vec",
                index,
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dims(
                    "Matrix::from_rows",
                    format!("{cols} columns"),
                    format!("{} columns in row {i}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Matrix::from_vec(rows.len(), cols, data)
    }

    /// Column vector from a slice.
    pub fn column(values: &[f64]) -> Result<Self> {
        Matrix::from_vec(values.len(), 1, values.to_vec())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut data = vec![0.0; n * n];
        for (i, &d) in diag.iter().enumerate() {
            data[i * n + i] = d;
        }
        Matrix::from_vec(n, n, data)
    }

    /// Internal constructor; callers guarantee finiteness.
    pub(crate) fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col_to_vec(&self, j: usize) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.data[i * self.cols + j])
            .collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Rows selected by index, in the given order (duplicates allowed).
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix::from_raw(indices.len(), self.cols, data)
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::dims("Matrix::vstack", self.cols, other.cols));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Matrix::from_raw(self.rows + other.rows, self.cols, data))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Matrix {
        Matrix::from_raw(
            self.rows,
            self.cols,
            self.data.iter().map(|v| v * factor).collect(),
        )
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "Matrix::sub", |a, b| a - b)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "Matrix::add", |a, b| a + b)
    }

    fn zip_with(
        &self,
        other: &Matrix,
        context: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::dims(
                context,
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Matrix::from_raw(self.rows, self.cols, data))
    }

    /// `self + shift * I` for square matrices.
    pub fn add_diagonal(&self, shift: f64) -> Result<Matrix> {
        self.require_square("Matrix::add_diagonal")?;
        let mut out = self.clone();
        for i in 0..self.rows {
            out.data[i * self.cols + i] += shift;
        }
        Ok(out)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let scale = self.max_abs().max(1.0);
        (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol * scale))
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::dims(
                "Matrix::matmul",
                format!("{} rows on the right", self.cols),
                other.rows,
            ));
        }
        Ok(from_faer(
            self.to_faer().as_ref() * other.to_faer().as_ref(),
        ))
    }

    /// `selfᵀ * other`.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::dims("Matrix::t_matmul", self.rows, other.rows));
        }
        Ok(from_faer(
            self.to_faer().as_ref().transpose() * other.to_faer().as_ref(),
        ))
    }

    /// `self * otherᵀ`.
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::dims("Matrix::matmul_t", self.cols, other.cols));
        }
        Ok(from_faer(
            self.to_faer().as_ref() * other.to_faer().as_ref().transpose(),
        ))
    }

    /// Symmetric Gram matrix `selfᵀ self` (cols × cols).
    pub fn gram(&self) -> Matrix {
        let f = self.to_faer();
        symmetrized(from_faer(f.as_ref().transpose() * f.as_ref()))
    }

    /// Symmetric outer Gram matrix `self selfᵀ` (rows × rows).
    pub fn outer_gram(&self) -> Matrix {
        let f = self.to_faer();
        symmetrized(from_faer(f.as_ref() * f.as_ref().transpose()))
    }

    pub(crate) fn require_square(&self, context: &'static str) -> Result<()> {
        if self.rows != self.cols {
            return Err(Error::dims(
                context,
                "square matrix",
                format!("{}x{}", self.rows, self.cols),
            ));
        }
        Ok(())
    }

    pub(crate) fn to_faer(&self) -> Mat<f64> {
        Mat::from_fn(self.rows, self.cols, |i, j| self.data[i * self.cols + j])
    }
}

fn from_faer(m: impl AsMatRef) -> Matrix {
    let m = m.as_mat_ref();
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

trait AsMatRef {
    fn as_mat_ref(&self) -> MatRef<'_, f64>;
}

impl AsMatRef for Mat<f64> {
    fn as_mat_ref(&self) -> MatRef<'_, f64> {
        self.as_ref()
    }
}

impl AsMatRef for MatRef<'_, f64> {
    fn as_mat_ref(&self) -> MatRef<'_, f64> {
        *self
    }
}

/// Copies the lower triangle onto the upper one so symmetry is exact.
fn symmetrized(mut m: Matrix) -> Matrix {
    let n = m.rows;
    for i in 0..n {
        for j in 0..i {
            let v = m.data[i * n + j];
            m.data[j * n + i] = v;
        }
    }
    m
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Eigendecomposition of a symmetric matrix.
///
/// Eigenvalues are sorted in descending order; `vectors` holds the matching
/// orthonormal eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

/// Symmetric eigendecomposition. The input is symmetrized as `(A + Aᵀ)/2`.
pub fn sym_eigen(a: &Matrix) -> Result<SymEigen> {
    a.require_square("sym_eigen")?;
    let n = a.rows();
    if n == 0 {
        return Ok(SymEigen {
            values: Vec::new(),
            vectors: Matrix::zeros(0, 0),
        });
    }
    let sym = Mat::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let evd = sym.self_adjoint_eigen(Side::Lower).map_err(|e| {
        Error::Numerical(format!(
            "symmetric eigensolver failed on {n}x{n} input: {e:?}"
        ))
    })?;
    let s = evd.S().column_vector();
    let u = evd.U();
    // faer returns ascending eigenvalues.
    let values: Vec<f64> = (0..n).rev().map(|k| s[k]).collect();
    let vectors = Matrix::from_fn(n, n, |i, k| u[(i, n - 1 - k)]);
    if let Some(index) = vectors
        .data
        .iter()
        .chain(&values)
        .position(|v| !v.is_finite())
    {
        return Err(Error::NonFinite {
            context: "sym_eigen",
            index,
        });
    }
    Ok(SymEigen { values, vectors })
}

impl SymEigen {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn max_value(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    /// Number of eigenvalues strictly above `rcond * λ_max`.
    pub fn rank(&self, rcond: f64) -> usize {
        let cutoff = rcond * self.max_value().max(0.0);
        self.values
            .iter()
            .filter(|&&v| v > cutoff && v > 0.0)
            .count()
    }

    /// `V diag(f(λ)) Vᵀ B`, restricted to eigenpairs where `keep(λ)` holds.
    pub fn apply_spectral(
        &self,
        b: &Matrix,
        keep: impl Fn(f64) -> bool,
        f: impl Fn(f64) -> f64,
    ) -> Result<Matrix> {
        let n = self.dim();
        if b.rows() != n {
            return Err(Error::dims("SymEigen::apply_spectral", n, b.rows()));
        }
        let kept: Vec<usize> = (0..n).filter(|&k| keep(self.values[k])).collect();
        let v = &self.vectors;
        let vk = Mat::from_fn(n, kept.len(), |i, c| v[(i, kept[c])]);
        let mut coef = vk.as_ref().transpose() * b.to_faer().as_ref();
        for (c, &k) in kept.iter().enumerate() {
            let w = f(self.values[k]);
            for j in 0..coef.ncols() {
                coef[(c, j)] *= w;
            }
        }
        let out = from_faer(vk.as_ref() * coef.as_ref());
        if let Some(index) = out.data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: "SymEigen::apply_spectral",
                index,
            });
        }
        Ok(out)
    }

    /// `A† B` with eigenvalues `≤ rcond * λ_max` treated as zero.
    pub fn pinv_apply(&self, b: &Matrix, rcond: f64) -> Result<Matrix> {
        let cutoff = rcond * self.max_value().max(0.0);
        self.apply_spectral(b, |l| l > cutoff && l > 0.0, |l| 1.0 / l)
    }
}

/// Default relative eigenvalue cutoff for pseudo-inverses of `n`-sample,
/// `m`-feature Gram matrices.
pub fn default_rcond(n: usize, m: usize) -> f64 {
    1e-12 * n.max(m).max(1) as f64
}

/// Minimum-norm solution `A† B` for symmetric positive semi-definite `A`.
pub fn pseudo_inverse_apply(a: &Matrix, b: &Matrix, rcond: f64) -> Result<Matrix> {
    a.require_square("pseudo_inverse_apply")?;
    if b.rows() != a.rows() {
        return Err(Error::dims("pseudo_inverse_apply", a.rows(), b.rows()));
    }
    if rcond.is_nan() || rcond < 0.0 {
        return Err(Error::Domain(format!(
            "rcond must be non-negative, got {rcond}"
        )));
    }
    sym_eigen(a)?.pinv_apply(b, rcond)
}

/// Outcome of a bisection search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Root {
    pub x: f64,
    pub f_x: f64,
    pub iterations: usize,
}

/// Bisection on a sign-changing function, returning the full report.
///
/// Stops when `|f(x)| <= tol`, when the bracket is narrower than `tol`, or when
/// the midpoint can no longer be split in floating point.
pub fn bisect(
    mut f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Root> {
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut fa = f(a);
    let fb = f(b);
    if fa.is_nan() || fb.is_nan() {
        return Err(Error::Numerical("bisection objective returned NaN".into()));
    }
    if fa == 0.0 {
        return Ok(Root {
            x: a,
            f_x: fa,
            iterations: 0,
        });
    }
    if fb == 0.0 {
        return Ok(Root {
            x: b,
            f_x: fb,
            iterations: 0,
        });
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NotBracketed {
            lo: a,
            hi: b,
            f_lo: fa,
            f_hi: fb,
        });
    }
    for iterations in 1..=max_iter {
        let mid = a + 0.5 * (b - a);
        let fm = f(mid);
        if fm.is_nan() {
            return Err(Error::Numerical(format!(
                "bisection objective is NaN at {mid}"
            )));
        }
        if fm.abs() <= tol || b - a <= tol || mid <= a || mid >= b {
            return Ok(Root {
                x: mid,
                f_x: fm,
                iterations,
            });
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Err(Error::NoConvergence {
        what: "bisection",
        iterations: max_iter,
    })
}

/// Root of a monotone function on `[lo, hi]` by bisection.
pub fn bisect_root(
    f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    bisect(f, lo, hi, tol, max_iter).map(|r| r.x)
}
