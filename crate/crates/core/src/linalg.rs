//! Dense complex linear algebra over small composite Hilbert spaces.
//!
//! Basis conventions used throughout the crate: a two-level atom has
//! `|e> = (1, 0)` and `|g> = (0, 1)`; a cavity mode truncated at `n_max`
//! photons uses the Fock basis `|0>, ..., |n_max>` in ascending order.
//! Composite spaces are ordered `atom1 ⊗ atom2 ⊗ atom3 ⊗ cavity`, skipping
//! whichever subsystems are absent, and the last tensor factor varies
//! fastest in a flattened index.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use thiserror::Error;

/// Largest `‖H − H†‖_max` accepted as Hermitian by [`expm_unitary`].
pub const HERMITIAN_TOL: f64 = 1e-8;
/// Unitarity tolerance reported by [`ComplexMatrix::is_unitary`] callers.
pub const UNITARY_TOL: f64 = 1e-10;
/// Normalization slack accepted by [`fidelity_up_to_phase`].
pub const NORM_TOL: f64 = 1e-8;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not Hermitian (max |H - H†| = {deviation:.3e})")]
    NonHermitianInput { deviation: f64 },
    #[error("subsystem index {index} out of range for {n_subsystems} subsystems")]
    BadSubsystemIndex { index: usize, n_subsystems: usize },
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch { expected: Vec<usize>, found: Vec<usize> },
    #[error("state is not normalized (norm² = {norm_sqr})")]
    NotNormalized { norm_sqr: f64 },
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Row-major dense complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::InvalidShape(format!("{rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(LinalgError::InvalidShape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; panics on ragged input.
    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let data = rows.iter().flatten().copied().collect();
        Self::new(rows.len(), cols, data).expect("non-empty rows")
    }

    /// Builds a matrix from real entries given row by row.
    pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> Self {
        let data = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::new(rows, cols, data).expect("entry count matches shape")
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![ONE; n])
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    /// `|a><b|` for two column vectors.
    pub fn outer(a: &[C64], b: &[C64]) -> Self {
        Self::from_fn(a.len(), b.len(), |i, j| a[i] * b[j].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn dagger(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| x * s).collect() }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let (n, m) = (self.rows, other.cols);
        let mut out = vec![ZERO; n * m];
        for i in 0..n {
            let out_row = &mut out[i * m..(i + 1) * m];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Self { rows: n, cols: m, data: out }
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len(), "mul_vec shape mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// `self^n` by repeated squaring.
    pub fn pow(&self, mut n: u64) -> Self {
        assert!(self.is_square(), "pow of non-square matrix");
        let mut result = Self::identity(self.rows);
        let mut base = self.clone();
        while n > 0 {
            if n & 1 == 1 {
                result = result.matmul(&base);
            }
            n >>= 1;
            if n > 0 {
                base = base.matmul(&base);
            }
        }
        result
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// `‖M − M†‖_max`; infinite for non-square matrices.
    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut dev = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                dev = dev.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() <= tol
    }

    /// `‖M†M − I‖_max`.
    pub fn unitarity_deviation(&self) -> f64 {
        self.dagger().matmul(self).max_abs_diff(&Self::identity(self.cols))
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.is_square() && self.unitarity_deviation() <= tol
    }

    /// Hermitian part `(M + M†)/2`.
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5)
    }

    fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    fn from_nalgebra(m: &DMatrix<C64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(i) {
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "add shape mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
        ComplexMatrix { rows: self.rows, cols: self.cols, data }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "sub shape mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        ComplexMatrix { rows: self.rows, cols: self.cols, data }
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (p, q) = (b.rows, b.cols);
    let mut out = ComplexMatrix::zeros(a.rows * p, a.cols * q);
    let out_cols = out.cols;
    for i in 0..a.rows {
        for j in 0..a.cols {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            for k in 0..p {
                let base = (i * p + k) * out_cols + j * q;
                for (o, &bkl) in out.data[base..base + q].iter_mut().zip(b.row(k)) {
                    *o = aij * bkl;
                }
            }
        }
    }
    out
}

/// Kronecker product of a sequence of factors, folded left to right.
pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a ComplexMatrix>) -> ComplexMatrix {
    factors
        .into_iter()
        .fold(ComplexMatrix::identity(1), |acc, f| kron(&acc, f))
}

/// Tensor product of column vectors.
pub fn kron_vec(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().flat_map(|&x| b.iter().map(move |&y| x * y)).collect()
}

/// Eigendecomposition `H = V diag(values) V†` of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn new(h: &ComplexMatrix) -> Result<Self> {
        if !h.is_square() {
            return Err(LinalgError::InvalidShape(format!(
                "eigendecomposition of a {}x{} matrix",
                h.rows, h.cols
            )));
        }
        let deviation = h.hermitian_deviation();
        if deviation > HERMITIAN_TOL {
            return Err(LinalgError::NonHermitianInput { deviation });
        }
        let eig = SymmetricEigen::new(h.hermitian_part().to_nalgebra());
        Ok(Self {
            values: eig.eigenvalues.iter().copied().collect(),
            vectors: ComplexMatrix::from_nalgebra(&eig.eigenvectors),
        })
    }

    /// `V f(values) V†`.
    pub fn map(&self, f: impl Fn(f64) -> C64) -> ComplexMatrix {
        let n = self.values.len();
        let scaled: Vec<C64> = self.values.iter().map(|&x| f(x)).collect();
        let v = &self.vectors;
        let mut out = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            for k in 0..n {
                let vik = v[(i, k)] * scaled[k];
                if vik == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += vik * v[(j, k)].conj();
                }
            }
        }
        out
    }

    /// `e^{−iHt}`.
    pub fn propagator(&self, t: f64) -> ComplexMatrix {
        self.map(|x| C64::from_polar(1.0, -x * t))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `e^{−iHt}` for Hermitian `H`, via eigendecomposition.
pub fn expm_unitary(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    Ok(HermitianEigen::new(h)?.propagator(t))
}

fn checked_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(LinalgError::InvalidShape(format!("subsystem dims {dims:?}")));
    }
    Ok(dims.iter().product())
}

/// Splits a flat index into per-subsystem digits (last subsystem fastest).
pub fn unravel(mut index: usize, dims: &[usize]) -> Vec<usize> {
    let mut digits = vec![0; dims.len()];
    for (d, &n) in digits.iter_mut().zip(dims).rev() {
        *d = index % n;
        index /= n;
    }
    digits
}

pub fn ravel(digits: &[usize], dims: &[usize]) -> usize {
    digits.iter().zip(dims).fold(0, |acc, (&d, &n)| acc * n + d)
}

/// Lifts `op`, acting on `targets` (in the order given), to the full space
/// with identity on every other subsystem.
pub fn embed_operator(op: &ComplexMatrix, targets: &[usize], dims: &[usize]) -> Result<ComplexMatrix> {
    let total = checked_dims(dims)?;
    for &t in targets {
        if t >= dims.len() {
            return Err(LinalgError::BadSubsystemIndex { index: t, n_subsystems: dims.len() });
        }
    }
    let mut seen = targets.to_vec();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != targets.len() || targets.is_empty() {
        return Err(LinalgError::InvalidShape(format!("target list {targets:?}")));
    }
    let sub_dims: Vec<usize> = targets.iter().map(|&t| dims[t]).collect();
    let sub_total: usize = sub_dims.iter().product();
    if op.rows != sub_total || op.cols != sub_total {
        return Err(LinalgError::DimensionMismatch {
            expected: vec![sub_total, sub_total],
            found: vec![op.rows, op.cols],
        });
    }
    let mut out = ComplexMatrix::zeros(total, total);
    let mut sub_col = vec![0; targets.len()];
    for row in 0..total {
        let row_digits = unravel(row, dims);
        let sub_row: Vec<usize> = targets.iter().map(|&t| row_digits[t]).collect();
        let r = ravel(&sub_row, &sub_dims);
        let mut col_digits = row_digits.clone();
        for c in 0..sub_total {
            let v = op[(r, c)];
            if v == ZERO {
                continue;
            }
            sub_col.copy_from_slice(&unravel(c, &sub_dims));
            for (&t, &d) in targets.iter().zip(&sub_col) {
                col_digits[t] = d;
            }
            out[(row, ravel(&col_digits, dims))] = v;
        }
    }
    Ok(out)
}

/// Pure state vector over a composite space.
///
/// Collapse branches are allowed to be subnormalized; `norm_sqr` carries
/// their probability.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    dims: Vec<usize>,
    amplitudes: Vec<C64>,
}

impl PureState {
    pub fn new(dims: Vec<usize>, amplitudes: Vec<C64>) -> Result<Self> {
        let total = checked_dims(&dims)?;
        if amplitudes.len() != total {
            return Err(LinalgError::DimensionMismatch {
                expected: vec![total],
                found: vec![amplitudes.len()],
            });
        }
        let norm_sqr: f64 = amplitudes.iter().map(C64::norm_sqr).sum();
        if !norm_sqr.is_finite() || norm_sqr > 1.0 + NORM_TOL {
            return Err(LinalgError::NotNormalized { norm_sqr });
        }
        Ok(Self { dims, amplitudes })
    }

    pub fn basis(dims: Vec<usize>, index: usize) -> Result<Self> {
        let total = checked_dims(&dims)?;
        if index >= total {
            return Err(LinalgError::InvalidShape(format!("basis index {index} >= {total}")));
        }
        let mut amplitudes = vec![ZERO; total];
        amplitudes[index] = ONE;
        Ok(Self { dims, amplitudes })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(C64::norm_sqr).sum()
    }

    /// Rescales to unit norm; `None` for the zero vector.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm_sqr().sqrt();
        (n > 0.0).then(|| Self {
            dims: self.dims.clone(),
            amplitudes: self.amplitudes.iter().map(|a| a / n).collect(),
        })
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        if self.dims != other.dims {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dims.clone(),
                found: other.dims.clone(),
            });
        }
        Ok(self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn tensor(&self, other: &Self) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self { dims, amplitudes: kron_vec(&self.amplitudes, &other.amplitudes) }
    }

    /// Applies `op` to the subsystems in `targets`.
    pub fn apply(&self, op: &ComplexMatrix, targets: &[usize]) -> Result<Self> {
        let full = if targets.len() == self.dims.len() && targets.iter().enumerate().all(|(i, &t)| i == t) {
            if op.rows != self.amplitudes.len() || op.cols != self.amplitudes.len() {
                return Err(LinalgError::DimensionMismatch {
                    expected: vec![self.amplitudes.len(); 2],
                    found: vec![op.rows, op.cols],
                });
            }
            None
        } else {
            Some(embed_operator(op, targets, &self.dims)?)
        };
        let amplitudes = full.as_ref().unwrap_or(op).mul_vec(&self.amplitudes);
        Ok(Self { dims: self.dims.clone(), amplitudes })
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self { dims: self.dims.clone(), amplitudes: self.amplitudes.iter().map(|a| a * s).collect() }
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            dims: self.dims.clone(),
            matrix: ComplexMatrix::outer(&self.amplitudes, &self.amplitudes),
        }
    }
}

/// `|<a|b>|²` for normalized states; blind to global phase.
pub fn fidelity_up_to_phase(a: &PureState, b: &PureState) -> Result<f64> {
    for s in [a, b] {
        let norm_sqr = s.norm_sqr();
        if (norm_sqr - 1.0).abs() > NORM_TOL {
            return Err(LinalgError::NotNormalized { norm_sqr });
        }
    }
    Ok(a.inner(b)?.norm_sqr().min(1.0))
}

/// Density operator over a composite space.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    dims: Vec<usize>,
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    pub const HERMITIAN_TOL: f64 = 1e-10;
    pub const TRACE_TOL: f64 = 1e-10;
    pub const EIGEN_TOL: f64 = 1e-8;

    /// Validates Hermiticity, trace in (0, 1] and positivity.
    pub fn new(dims: Vec<usize>, matrix: ComplexMatrix) -> Result<Self> {
        let rho = Self::from_parts(dims, matrix)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Shape checks only; used for intermediate operators in integrators.
    pub fn from_parts(dims: Vec<usize>, matrix: ComplexMatrix) -> Result<Self> {
        let total = checked_dims(&dims)?;
        if matrix.rows != total || matrix.cols != total {
            return Err(LinalgError::DimensionMismatch {
                expected: vec![total, total],
                found: vec![matrix.rows, matrix.cols],
            });
        }
        Ok(Self { dims, matrix })
    }

    pub fn validate(&self) -> Result<()> {
        let dev = self.matrix.hermitian_deviation();
        if dev > Self::HERMITIAN_TOL {
            return Err(LinalgError::InvalidDensityMatrix(format!("not Hermitian ({dev:.3e})")));
        }
        let tr = self.matrix.trace();
        if tr.im.abs() > Self::TRACE_TOL || tr.re <= 0.0 || tr.re > 1.0 + Self::TRACE_TOL {
            return Err(LinalgError::InvalidDensityMatrix(format!("trace {tr}")));
        }
        let min_eig = self.min_eigenvalue()?;
        if min_eig < -Self::EIGEN_TOL {
            return Err(LinalgError::InvalidDensityMatrix(format!("eigenvalue {min_eig:.3e}")));
        }
        Ok(())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(HermitianEigen::new(&self.matrix.hermitian_part())?.min_value())
    }

    pub fn tensor(&self, other: &Self) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self { dims, matrix: kron(&self.matrix, &other.matrix) }
    }

    /// `<psi|rho|psi>`.
    pub fn expectation_in(&self, psi: &PureState) -> Result<f64> {
        if psi.dims != self.dims {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dims.clone(),
                found: psi.dims.clone(),
            });
        }
        let v = self.matrix.mul_vec(&psi.amplitudes);
        Ok(psi.amplitudes.iter().zip(&v).map(|(a, b)| a.conj() * b).sum::<C64>().re)
    }
}

/// Traces out every subsystem not listed in `keep`.
///
/// The result keeps the surviving subsystems in their original order.
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let matrix = partial_trace_matrix(rho.matrix(), rho.dims(), keep)?;
    let kept_dims = keep_sorted(keep, rho.dims().len())?.iter().map(|&k| rho.dims[k]).collect();
    DensityMatrix::from_parts(kept_dims, matrix)
}

fn keep_sorted(keep: &[usize], n: usize) -> Result<Vec<usize>> {
    if keep.is_empty() {
        return Err(LinalgError::InvalidShape("empty keep set".into()));
    }
    let mut sorted = keep.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if let Some(&bad) = sorted.iter().find(|&&k| k >= n) {
        return Err(LinalgError::BadSubsystemIndex { index: bad, n_subsystems: n });
    }
    Ok(sorted)
}

/// Partial trace of an arbitrary (not necessarily positive) operator.
pub fn partial_trace_matrix(op: &ComplexMatrix, dims: &[usize], keep: &[usize]) -> Result<ComplexMatrix> {
    let total = checked_dims(dims)?;
    if op.rows != total || op.cols != total {
        return Err(LinalgError::DimensionMismatch {
            expected: vec![total, total],
            found: vec![op.rows, op.cols],
        });
    }
    let keep = keep_sorted(keep, dims.len())?;
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !keep.contains(i)).collect();
    let kept_dims: Vec<usize> = keep.iter().map(|&k| dims[k]).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&k| dims[k]).collect();
    let n_kept: usize = kept_dims.iter().product();
    let n_traced: usize = traced_dims.iter().product();

    // full index for every (kept, traced) pair
    let mut index = vec![0usize; n_kept * n_traced];
    let mut digits = vec![0usize; dims.len()];
    for k in 0..n_kept {
        let kd = unravel(k, &kept_dims);
        for (&pos, &d) in keep.iter().zip(&kd) {
            digits[pos] = d;
        }
        for t in 0..n_traced {
            let td = unravel(t, &traced_dims);
            for (&pos, &d) in traced.iter().zip(&td) {
                digits[pos] = d;
            }
            index[k * n_traced + t] = ravel(&digits, dims);
        }
    }

    let mut out = ComplexMatrix::zeros(n_kept, n_kept);
    for i in 0..n_kept {
        for j in 0..n_kept {
            out[(i, j)] = (0..n_traced)
                .map(|t| op[(index[i * n_traced + t], index[j * n_traced + t])])
                .sum();
        }
    }
    Ok(out)
}

/// `½ Σ|λᵢ(a − b)|`.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dims != b.dims {
        return Err(LinalgError::DimensionMismatch { expected: a.dims.clone(), found: b.dims.clone() });
    }
    let diff = (&a.matrix - &b.matrix).hermitian_part();
    Ok(0.5 * HermitianEigen::new(&diff)?.values.iter().map(|x| x.abs()).sum::<f64>())
}

/// Standard single-mode and two-level operators in the crate's basis.
pub mod ops {
    use super::{ComplexMatrix, C64};

    pub fn sigma_x() -> ComplexMatrix {
        ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0])
    }

    pub fn sigma_y() -> ComplexMatrix {
        let i = C64::i();
        ComplexMatrix::from_rows(&[vec![C64::default(), -i], vec![i, C64::default()]])
    }

    pub fn sigma_z() -> ComplexMatrix {
        ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, -1.0])
    }

    /// `S⁺ = |e><g|`.
    pub fn sigma_plus() -> ComplexMatrix {
        ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0])
    }

    /// `S⁻ = |g><e|`.
    pub fn sigma_minus() -> ComplexMatrix {
        ComplexMatrix::from_real(2, 2, &[0.0, 0.0, 1.0, 0.0])
    }

    /// `|e><e|`.
    pub fn excited_projector() -> ComplexMatrix {
        ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 0.0])
    }

    /// `|g><g|`.
    pub fn ground_projector() -> ComplexMatrix {
        ComplexMatrix::from_real(2, 2, &[0.0, 0.0, 0.0, 1.0])
    }

    /// Cavity annihilation operator on `levels` Fock states.
    pub fn annihilation(levels: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(levels, levels, |i, j| {
            if j == i + 1 {
                C64::new((j as f64).sqrt(), 0.0)
            } else {
                C64::default()
            }
        })
    }

    pub fn creation(levels: usize) -> ComplexMatrix {
        annihilation(levels).dagger()
    }

    pub fn number(levels: usize) -> ComplexMatrix {
        let diag: Vec<C64> = (0..levels).map(|n| C64::new(n as f64, 0.0)).collect();
        ComplexMatrix::from_diagonal(&diag)
    }
}
