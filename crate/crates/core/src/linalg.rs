//! Small dense linear-algebra kernel.
//!
//! Everything here is row-major `f64`, sized for desk-scale problems
//! (a few thousand rows at most). Factorizations are plain Cholesky; spectral
//! norms come from Jacobi (small) or Lanczos (large) on the smaller Gram matrix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Relative Cholesky pivot floor: a pivot below `PIVOT_FLOOR * max(diag)`
/// declares the matrix not positive definite.
pub const PIVOT_FLOOR: f64 = 1e-12;

/// Krylov dimension cap for [`spectral_norm`] (the space is exhausted earlier
/// for Gram matrices smaller than this).
pub const POWER_ITER_CAP: usize = 10_000;

/// Default relative tolerance for [`spectral_norm`].
pub const POWER_ITER_TOL: f64 = 1e-10;

/// Gram matrices up to this size use the direct symmetric eigensolver.
pub const DIRECT_EIGEN_MAX_DIM: usize = 96;
const JACOBI_SWEEP_CAP: usize = 60;

const POWER_START_SEED: u64 = 0x5eed_0f_5eed;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("empty operand")]
    EmptyOperand,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite entry at index {0}")]
    NonFinite(usize),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("not positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("power iteration did not converge after {iterations} iterations (best estimate {estimate})")]
    NotConverged { estimate: f64, iterations: usize },
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Dense row-major real matrix with finite entries.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for DenseMatrix {
    type Error = LinalgError;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        DenseMatrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl From<DenseMatrix> for RawMatrix {
    fn from(m: DenseMatrix) -> Self {
        RawMatrix {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            let row = self.row(r);
            let shown: Vec<String> = row.iter().take(8).map(|v| format!("{v:>10.4e}")).collect();
            writeln!(f, "  {}", shown.join(" "))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite(i));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let mut m = Self::zeros(rows, cols);
        for (c, col) in columns.iter().enumerate() {
            if col.len() != rows {
                return Err(LinalgError::DimensionMismatch(format!(
                    "column {c} has length {}, expected {rows}",
                    col.len()
                )));
            }
            for (r, &v) in col.iter().enumerate() {
                m.data[r * cols + c] = v;
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// Columns in the given order (duplicates allowed).
    pub fn select_columns(&self, idx: &[usize]) -> Self {
        let mut m = Self::zeros(self.rows, idx.len());
        for r in 0..self.rows {
            let src = self.row(r);
            let dst = &mut m.data[r * idx.len()..(r + 1) * idx.len()];
            for (d, &c) in dst.iter_mut().zip(idx) {
                *d = src[c];
            }
        }
        m
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &r in idx {
            data.extend_from_slice(self.row(r));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Principal submatrix on `idx`.
    pub fn select_principal(&self, idx: &[usize]) -> Self {
        Self::from_fn(idx.len(), idx.len(), |i, j| self.get(idx[i], idx[j]))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `selfᵀ x`.
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "tr_matvec dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            axpy(xr, self.row(r), &mut out);
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for (k, &a) in self.row(r).iter().enumerate() {
                if a != 0.0 {
                    axpy(a, other.row(k), dst);
                }
            }
        }
        out
    }

    /// `selfᵀ other`.
    pub fn tr_matmul(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows, "tr_matmul dimension mismatch");
        let mut out = Self::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                if a != 0.0 {
                    axpy(a, b_row, &mut out.data[i * other.cols..(i + 1) * other.cols]);
                }
            }
        }
        out
    }

    /// `selfᵀ self`.
    pub fn gram(&self) -> Self {
        let mut g = self.tr_matmul(self);
        g.symmetrize();
        g
    }

    /// `self selfᵀ`.
    pub fn outer_gram(&self) -> Self {
        let mut g = Self::from_fn(self.rows, self.rows, |i, j| {
            if j < i {
                0.0
            } else {
                dot(self.row(i), self.row(j))
            }
        });
        for i in 0..self.rows {
            for j in 0..i {
                g.data[i * self.rows + j] = g.data[j * self.rows + i];
            }
        }
        g
    }

    pub fn symmetrize(&mut self) {
        let n = self.rows;
        debug_assert_eq!(n, self.cols);
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                self.data[i * n + j] = v;
                self.data[j * n + i] = v;
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add_to_diag(&mut self, idx: impl IntoIterator<Item = usize>, v: f64) {
        for i in idx {
            self.data[i * self.cols + i] += v;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        norm_inf(&self.data)
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.rows;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.data[i * n + j] - self.data[j * n + i]).abs());
            }
        }
        worst
    }
}

/// A sorted subset of the columns of a parent matrix (the `A_T` notation).
#[derive(Debug, Clone)]
pub struct ColumnSubset<'a> {
    parent: &'a DenseMatrix,
    indices: Vec<usize>,
}

impl<'a> ColumnSubset<'a> {
    pub fn new(parent: &'a DenseMatrix, indices: Vec<usize>) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LinalgError::DimensionMismatch(
                "column subset indices must be strictly increasing".into(),
            ));
        }
        if let Some(&last) = indices.last() {
            if last >= parent.cols() {
                return Err(LinalgError::DimensionMismatch(format!(
                    "column index {last} out of range for {} columns",
                    parent.cols()
                )));
            }
        }
        Ok(Self { parent, indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn to_matrix(&self) -> DenseMatrix {
        self.parent.select_columns(&self.indices)
    }

    /// `A_T b_T` for a vector indexed like the subset.
    pub fn matvec(&self, coef: &[f64]) -> Vec<f64> {
        assert_eq!(coef.len(), self.indices.len());
        (0..self.parent.rows())
            .map(|r| {
                let row = self.parent.row(r);
                self.indices.iter().zip(coef).map(|(&c, &b)| row[c] * b).sum()
            })
            .collect()
    }

    /// `A_Tᵀ v`.
    pub fn tr_matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.parent.rows());
        let mut out = vec![0.0; self.indices.len()];
        for (r, &vr) in v.iter().enumerate() {
            let row = self.parent.row(r);
            for (o, &c) in out.iter_mut().zip(&self.indices) {
                *o += row[c] * vr;
            }
        }
        out
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(m: &DenseMatrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(LinalgError::DimensionMismatch(format!(
                "Cholesky needs a square matrix, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        let n = m.rows();
        let max_diag = (0..n).map(|i| m.get(i, i)).fold(0.0f64, f64::max);
        let floor = PIVOT_FLOOR * max_diag;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = m.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > floor) || d <= 0.0 {
                return Err(LinalgError::NotPositiveDefinite { index: j, pivot: d });
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = m.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.l[i * n + k] * z[k];
            }
            z[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * z[k];
            }
            z[i] = s / self.l[i * n + i];
        }
        z
    }

    pub fn solve_mat(&self, b: &DenseMatrix) -> DenseMatrix {
        assert_eq!(b.rows(), self.n);
        let mut out = DenseMatrix::zeros(b.rows(), b.cols());
        for c in 0..b.cols() {
            let x = self.solve_vec(&b.column(c));
            for (r, v) in x.into_iter().enumerate() {
                out.set(r, c, v);
            }
        }
        out
    }

    pub fn inverse(&self) -> DenseMatrix {
        let mut inv = self.solve_mat(&DenseMatrix::identity(self.n));
        inv.symmetrize();
        inv
    }
}

/// Solves `M X = B` for symmetric positive definite `M`.
pub fn solve_spd(m: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if m.rows() != m.cols() || b.rows() != m.rows() {
        return Err(LinalgError::DimensionMismatch(format!(
            "solve_spd with M {}x{} and B {}x{}",
            m.rows(),
            m.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let asym = m.max_asymmetry();
    if asym > 1e-10 * m.max_abs().max(1.0) {
        return Err(LinalgError::NotSymmetric(asym));
    }
    Ok(Cholesky::factor(m)?.solve_mat(b))
}

/// Numerical rank of a symmetric positive semidefinite matrix via diagonally
/// pivoted Cholesky, with the same relative pivot floor as [`Cholesky`].
pub fn psd_rank(g: &DenseMatrix) -> usize {
    let n = g.rows();
    if n == 0 {
        return 0;
    }
    let mut a = g.clone();
    let max_diag = (0..n).map(|i| a.get(i, i)).fold(0.0f64, f64::max);
    if max_diag <= 0.0 {
        return 0;
    }
    let floor = PIVOT_FLOOR * max_diag;
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut rank = 0;
    while !remaining.is_empty() {
        let (pos, &p) = remaining
            .iter()
            .enumerate()
            .max_by(|(_, &i), (_, &j)| a.get(i, i).total_cmp(&a.get(j, j)))
            .expect("non-empty");
        let d = a.get(p, p);
        if d <= floor {
            break;
        }
        rank += 1;
        remaining.swap_remove(pos);
        // Schur complement update on the remaining block.
        for &i in &remaining {
            let lip = a.get(i, p) / d;
            for &j in &remaining {
                let v = a.get(i, j) - lip * a.get(p, j);
                a.set(i, j, v);
            }
        }
    }
    rank
}

/// Largest singular value, by power iteration on the smaller of `MᵀM` and
/// `MMᵀ` from a fixed-seed start vector.
pub fn spectral_norm(m: &DenseMatrix, tol: f64) -> Result<f64> {
    if m.is_empty() {
        return Err(LinalgError::EmptyOperand);
    }
    let g = if m.cols() <= m.rows() { m.gram() } else { m.outer_gram() };
    if g.rows() <= DIRECT_EIGEN_MAX_DIM {
        let top = symmetric_eigenvalues(&g).into_iter().fold(0.0f64, f64::max);
        return Ok(top.sqrt());
    }
    Ok(power_iteration_sym(&g, tol)?.sqrt())
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations (unsorted).
pub fn symmetric_eigenvalues(g: &DenseMatrix) -> Vec<f64> {
    let n = g.rows();
    let mut a = g.clone();
    a.symmetrize();
    let total = a.frobenius_norm();
    if total == 0.0 {
        return vec![0.0; n];
    }
    for _sweep in 0..JACOBI_SWEEP_CAP {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j).powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
            }
        }
    }
    (0..n).map(|i| a.get(i, i)).collect()
}

/// Spectral norm with the empty-matrix convention `‖[]‖₂ = 0`.
pub fn spectral_norm_or_zero(m: &DenseMatrix) -> Result<f64> {
    if m.is_empty() {
        return Ok(0.0);
    }
    spectral_norm(m, POWER_ITER_TOL)
}

/// Dominant eigenvalue of a symmetric positive semidefinite matrix by Lanczos
/// with full reorthogonalization. Stops when the Ritz residual `|β_k s_k|`
/// is below `tol · θ` or the Krylov space is exhausted (then exact).
fn power_iteration_sym(g: &DenseMatrix, tol: f64) -> Result<f64> {
    let n = g.rows();
    if g.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_START_SEED);
    let mut q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.5).collect();
    let nq = norm2(&q);
    q.iter_mut().for_each(|x| *x /= nq);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let (mut alpha, mut beta) = (Vec::new(), Vec::new());
    let mut theta = 0.0;
    let cap = n.min(POWER_ITER_CAP);
    for k in 0..cap {
        let mut r = g.matvec(&q);
        let a = dot(&q, &r);
        alpha.push(a);
        basis.push(q);
        // Two Gram–Schmidt passes keep the basis orthogonal to working precision.
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &r);
                axpy(-c, b, &mut r);
            }
        }
        let b = norm2(&r);
        let prev = theta;
        theta = tridiagonal_max_eigenvalue(&alpha, &beta);
        let last = tridiagonal_last_component(&alpha, &beta, theta);
        let settled = k > 0 && (theta - prev).abs() <= tol * theta.abs() && b * last.abs() <= tol * theta.abs();
        if settled || b <= f64::EPSILON * theta.abs() || k + 1 == cap {
            return Ok(theta);
        }
        beta.push(b);
        q = r.into_iter().map(|x| x / b).collect();
    }
    Err(LinalgError::NotConverged {
        estimate: theta.max(0.0),
        iterations: cap,
    })
}

/// Number of eigenvalues of the symmetric tridiagonal `(a, b)` below `x`.
fn sturm_count(a: &[f64], b: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..a.len() {
        let off = if i == 0 { 0.0 } else { b[i - 1] * b[i - 1] / d };
        d = a[i] - x - off;
        if d == 0.0 {
            d = -f64::EPSILON * (a[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Largest eigenvalue of a symmetric tridiagonal matrix by bisection.
fn tridiagonal_max_eigenvalue(a: &[f64], b: &[f64]) -> f64 {
    let k = a.len();
    let radius = |i: usize| (if i > 0 { b[i - 1].abs() } else { 0.0 }) + (if i + 1 < k { b[i].abs() } else { 0.0 });
    let mut lo = (0..k).map(|i| a[i] - radius(i)).fold(f64::INFINITY, f64::min);
    let mut hi = (0..k).map(|i| a[i] + radius(i)).fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(a, b, mid) == k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Last component of the unit eigenvector of the tridiagonal for eigenvalue
/// `theta`, by one inverse-iteration-like forward recurrence from the top.
fn tridiagonal_last_component(a: &[f64], b: &[f64], theta: f64) -> f64 {
    let k = a.len();
    if k == 1 {
        return 1.0;
    }
    // Solve (T − θI)s = 0 by the three-term recurrence from s₀ = 1, scaled as
    // it goes; small subdiagonals fall back to a unit last component.
    let mut s = vec![0.0; k];
    s[0] = 1.0;
    for i in 0..k - 1 {
        if b[i].abs() < f64::MIN_POSITIVE.sqrt() {
            return 1.0;
        }
        let prev = if i > 0 { b[i - 1] * s[i - 1] } else { 0.0 };
        s[i + 1] = -((a[i] - theta) * s[i] + prev) / b[i];
        let scale = s[i + 1].abs().max(s[i].abs());
        if scale > 1e100 {
            s.iter_mut().for_each(|v| *v /= scale);
        }
    }
    let ns = norm2(&s);
    if ns.is_finite() && ns > 0.0 {
        s[k - 1] / ns
    } else {
        1.0
    }
}

/// Index permutation sorting by non-increasing magnitude; ties keep ascending index.
pub fn sort_desc_by_abs(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[j].abs().total_cmp(&v[i].abs()).then(i.cmp(&j)));
    idx
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four independent accumulators let the compiler vectorize.
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};
    use rand_distr::StandardNormal;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    /// One-sided Jacobi SVD; independent of the power-iteration path.
    fn jacobi_singular_values(m: &DenseMatrix) -> Vec<f64> {
        let mut a = if m.rows() >= m.cols() { m.clone() } else { m.transpose() };
        let (rows, cols) = (a.rows(), a.cols());
        for _sweep in 0..100 {
            let mut off = 0.0f64;
            for p in 0..cols {
                for q in p + 1..cols {
                    let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                    for r in 0..rows {
                        let (x, y) = (a.get(r, p), a.get(r, q));
                        alpha += x * x;
                        beta += y * y;
                        gamma += x * y;
                    }
                    off = off.max(gamma.abs() / (alpha * beta).sqrt().max(1e-300));
                    if gamma.abs() < 1e-300 {
                        continue;
                    }
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let t = if zeta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for r in 0..rows {
                        let (x, y) = (a.get(r, p), a.get(r, q));
                        a.set(r, p, c * x - s * y);
                        a.set(r, q, s * x + c * y);
                    }
                }
            }
            if off < 1e-15 {
                break;
            }
        }
        let mut sv: Vec<f64> = (0..cols).map(|c| norm2(&a.column(c))).collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }

    fn gaussian_elimination(m: &DenseMatrix, b: &[f64]) -> Vec<f64> {
        let n = m.rows();
        let mut a: Vec<Vec<f64>> = (0..n)
            .map(|r| {
                let mut row = m.row(r).to_vec();
                row.push(b[r]);
                row
            })
            .collect();
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            for r in col + 1..n {
                let f = a[r][col] / a[col][col];
                for c in col..=n {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
            x[r] = (a[r][n] - s) / a[r][r];
        }
        x
    }

    #[test]
    fn spectral_norm_identity_and_diag() {
        let i3 = DenseMatrix::identity(3);
        assert!((spectral_norm(&i3, POWER_ITER_TOL).unwrap() - 1.0).abs() < 1e-12);
        let d = DenseMatrix::from_diag(&[3.0, -4.0]);
        assert!((spectral_norm(&d, POWER_ITER_TOL).unwrap() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn spectral_norm_matches_jacobi_svd() {
        let m = random_matrix(6, 4, 11);
        let sv = jacobi_singular_values(&m);
        let est = spectral_norm(&m, POWER_ITER_TOL).unwrap();
        assert!((est - sv[0]).abs() < 1e-8, "{est} vs {}", sv[0]);
    }

    #[test]
    fn spectral_norm_empty_is_error() {
        let e = DenseMatrix::zeros(0, 3);
        assert_eq!(spectral_norm(&e, 1e-10), Err(LinalgError::EmptyOperand));
        assert_eq!(spectral_norm_or_zero(&e), Ok(0.0));
    }

    #[test]
    fn solve_spd_basic_cases() {
        let b = random_matrix(4, 3, 2);
        let x = solve_spd(&DenseMatrix::identity(4), &b).unwrap();
        assert!(x.sub(&b).frobenius_norm() < 1e-14);

        let two = DenseMatrix::identity(4).scale(2.0);
        let x = solve_spd(&two, &DenseMatrix::identity(4)).unwrap();
        assert!(x.sub(&DenseMatrix::identity(4).scale(0.5)).frobenius_norm() < 1e-14);
    }

    #[test]
    fn solve_spd_matches_gaussian_elimination() {
        let a = random_matrix(5, 3, 5);
        let mut m = a.gram();
        m.add_to_diag(0..3, 0.1);
        let e1 = DenseMatrix::new(3, 1, vec![1.0, 0.0, 0.0]).unwrap();
        let x = solve_spd(&m, &e1).unwrap();
        let oracle = gaussian_elimination(&m, &[1.0, 0.0, 0.0]);
        for i in 0..3 {
            assert!((x.get(i, 0) - oracle[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn solve_spd_rejects_singular() {
        let a = DenseMatrix::new(2, 2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(
            solve_spd(&a, &DenseMatrix::identity(2)),
            Err(LinalgError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn non_finite_rejected() {
        assert_eq!(
            DenseMatrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(LinalgError::NonFinite(1))
        );
    }

    #[test]
    fn psd_rank_detects_duplicate_column() {
        let a = random_matrix(6, 3, 9);
        let dup = a.select_columns(&[0, 1, 2, 1]);
        assert_eq!(psd_rank(&a.gram()), 3);
        assert_eq!(psd_rank(&dup.gram()), 3);
    }

    #[test]
    fn sort_examples() {
        assert_eq!(sort_desc_by_abs(&[0.2, -1.0, 0.5]), vec![1, 2, 0]);
        assert_eq!(sort_desc_by_abs(&[]), Vec::<usize>::new());
        assert_eq!(sort_desc_by_abs(&[0.3, -0.3]), vec![0, 1]);
    }

    #[test]
    fn column_subset_validates() {
        let a = random_matrix(3, 4, 1);
        assert!(ColumnSubset::new(&a, vec![0, 2]).is_ok());
        assert!(ColumnSubset::new(&a, vec![2, 0]).is_err());
        assert!(ColumnSubset::new(&a, vec![4]).is_err());
        let s = ColumnSubset::new(&a, vec![1, 3]).unwrap();
        let direct = a.select_columns(&[1, 3]).matvec(&[1.0, -2.0]);
        assert_eq!(s.matvec(&[1.0, -2.0]), direct);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn norm_of_transpose(rows in 1usize..8, cols in 1usize..8, seed in 0u64..1000) {
            let m = random_matrix(rows, cols, seed);
            let a = spectral_norm(&m, POWER_ITER_TOL).unwrap();
            let b = spectral_norm(&m.transpose(), POWER_ITER_TOL).unwrap();
            prop_assert!((a - b).abs() <= 1e-8 * a.max(1.0));
        }

        #[test]
        fn norm_submultiplicative(k in 1usize..6, seed in 0u64..1000) {
            let m = random_matrix(5, k, seed);
            let n = random_matrix(k, 4, seed + 1);
            let lhs = spectral_norm(&m.matmul(&n), POWER_ITER_TOL).unwrap();
            let rhs = spectral_norm(&m, POWER_ITER_TOL).unwrap() * spectral_norm(&n, POWER_ITER_TOL).unwrap();
            prop_assert!(lhs <= rhs + 1e-8);
        }

        #[test]
        fn spd_round_trip(n in 1usize..7, seed in 0u64..1000) {
            let a = random_matrix(n + 2, n, seed);
            let mut m = a.gram();
            m.add_to_diag(0..n, 0.05);
            let b = random_matrix(n, 2, seed + 7);
            let x = solve_spd(&m, &b).unwrap();
            prop_assert!(m.matmul(&x).sub(&b).frobenius_norm() <= 1e-8 * b.frobenius_norm());
        }

        #[test]
        fn sort_is_permutation(v in proptest::collection::vec(-10.0f64..10.0, 0..20)) {
            let p = sort_desc_by_abs(&v);
            let mut seen = p.clone();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..v.len()).collect::<Vec<_>>());
            for w in p.windows(2) {
                prop_assert!(v[w[0]].abs() >= v[w[1]].abs());
            }
        }
    }
}
