//! Dense linear-algebra kernels shared by the solvers.
//!
//! * [`DenseMatrix`]: column-major dense storage.
//! * [`GrowableFactorization`]: incremental Gram-Schmidt QR of a growing set
//!   of selected columns, used to apply the orthogonal projector onto the
//!   complement of their span without ever forming it.
//! * [`GramCholesky`]: Cholesky factor of an active-set Gram matrix with
//!   O(|S|²) insertion and deletion.

use thiserror::Error;

/// A column is degenerate when its projected norm falls below this fraction
/// of its original norm.
pub const DEGENERATE_RELATIVE_NORM: f64 = 1e-10;

/// Smallest admissible diagonal entry of a Gram Cholesky factor.
pub const MIN_CHOLESKY_PIVOT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix must have at least one row")]
    EmptyRows,
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("column {index} is out of range ({cols} columns)")]
    IndexOutOfRange { index: usize, cols: usize },
    #[error("column {index} is already part of the factorization")]
    AlreadyPresent { index: usize },
    #[error("column {index} lies in the span of the current support")]
    DegenerateAtom { index: usize },
    #[error("support columns are linearly dependent")]
    RankDeficient,
    #[error("Gram matrix lost positive definiteness when adding column {index}")]
    SingularGram { index: usize },
}

pub type Result<T> = std::result::Result<T, LinalgError>;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Dense real matrix stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from column-major entries, rejecting non-finite values.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 {
            return Err(LinalgError::EmptyRows);
        }
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite {
                row: pos % rows,
                col: pos / rows,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        let mut col_major = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                col_major[j * rows + i] = data[i * cols + j];
            }
        }
        Self::from_col_major(rows, cols, col_major)
    }

    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            if c.len() != rows {
                return Err(LinalgError::DimensionMismatch {
                    expected: rows,
                    found: c.len(),
                });
            }
            data.extend_from_slice(c);
        }
        Self::from_col_major(rows, columns.len(), data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1, "matrix must have at least one row");
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

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.rows + row]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[col * self.rows + row] = value;
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.rows)
    }

    pub fn as_col_major(&self) -> &[f64] {
        &self.data
    }

    /// `A x`
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len(), self.cols)?;
        let mut out = vec![0.0; self.rows];
        for (c, &xj) in self.columns().zip(x) {
            if xj != 0.0 {
                axpy(xj, c, &mut out);
            }
        }
        Ok(out)
    }

    /// `Aᵀ v`
    pub fn tr_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v.len(), self.rows)?;
        Ok(self.columns().map(|c| dot(c, v)).collect())
    }

    /// Sub-matrix made of the listed columns, in order.
    pub fn select_columns(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(self.rows * indices.len());
        for &j in indices {
            if j >= self.cols {
                return Err(LinalgError::IndexOutOfRange {
                    index: j,
                    cols: self.cols,
                });
            }
            data.extend_from_slice(self.col(j));
        }
        Ok(Self {
            rows: self.rows,
            cols: indices.len(),
            data,
        })
    }

    fn check_len(&self, found: usize, expected: usize) -> Result<()> {
        if found != expected {
            Err(LinalgError::DimensionMismatch { expected, found })
        } else {
            Ok(())
        }
    }
}

/// Incremental QR factorization `A_S = Q R` of the columns of `base` indexed
/// by a growing support `S`.
///
/// `Q` is stored column by column and kept orthonormal by classical
/// Gram-Schmidt with one reorthogonalization pass. The projector
/// `P = I - Q Qᵀ` onto the orthogonal complement of `span(A_S)` is only ever
/// applied through `Q`.
#[derive(Debug, Clone)]
pub struct GrowableFactorization<'a> {
    base: &'a DenseMatrix,
    support: Vec<usize>,
    basis: Vec<Vec<f64>>,
    // column k holds R[0..=k, k]
    triangular: Vec<Vec<f64>>,
}

impl<'a> GrowableFactorization<'a> {
    pub fn new(base: &'a DenseMatrix) -> Self {
        Self {
            base,
            support: Vec::new(),
            basis: Vec::new(),
            triangular: Vec::new(),
        }
    }

    /// Factorization of `base` restricted to `support`, appended in order.
    pub fn with_support(base: &'a DenseMatrix, support: &[usize]) -> Result<Self> {
        let mut f = Self::new(base);
        for &j in support {
            f.append(j)?;
        }
        Ok(f)
    }

    pub fn base(&self) -> &'a DenseMatrix {
        self.base
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// Dense `n1 × n1` upper-triangular factor.
    pub fn triangular(&self) -> DenseMatrix {
        let n = self.len();
        let mut r = DenseMatrix::zeros(n.max(1), n);
        for (k, col) in self.triangular.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                r.set(i, k, v);
            }
        }
        r
    }

    /// Appends column `index` of the base matrix to the support. On error the
    /// factorization is left unchanged.
    pub fn append(&mut self, index: usize) -> Result<()> {
        if index >= self.base.cols() {
            return Err(LinalgError::IndexOutOfRange {
                index,
                cols: self.base.cols(),
            });
        }
        if self.support.contains(&index) {
            return Err(LinalgError::AlreadyPresent { index });
        }
        let column = self.base.col(index);
        let original = norm2(column);
        let mut v = column.to_vec();
        let mut coeffs = vec![0.0; self.len() + 1];
        for _ in 0..2 {
            let proj: Vec<f64> = self.basis.iter().map(|q| dot(q, &v)).collect();
            for (q, (&c, acc)) in self.basis.iter().zip(proj.iter().zip(coeffs.iter_mut())) {
                axpy(-c, q, &mut v);
                *acc += c;
            }
        }
        let rem = norm2(&v);
        if original == 0.0 || rem < DEGENERATE_RELATIVE_NORM * original {
            return Err(LinalgError::DegenerateAtom { index });
        }
        v.iter_mut().for_each(|x| *x /= rem);
        coeffs[self.len()] = rem;
        self.basis.push(v);
        self.triangular.push(coeffs);
        self.support.push(index);
        Ok(())
    }

    /// `P v = v - Q (Qᵀ v)`.
    pub fn project_residual(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.base.rows() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.base.rows(),
                found: v.len(),
            });
        }
        let mut out = v.to_vec();
        self.project_in_place(&mut out);
        Ok(out)
    }

    /// In-place projection, modified Gram-Schmidt order.
    pub(crate) fn project_in_place(&self, v: &mut [f64]) {
        for q in &self.basis {
            let c = dot(q, v);
            axpy(-c, q, v);
        }
    }

    /// `Qᵀ v` and the projected remainder `P v`.
    fn split(&self, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut rem = v.to_vec();
        let coeffs = self
            .basis
            .iter()
            .map(|q| {
                let c = dot(q, &rem);
                axpy(-c, q, &mut rem);
                c
            })
            .collect();
        (coeffs, rem)
    }

    /// Least-squares coefficients `A_S⁺ y` (via `R x = Qᵀ y`) and the residual
    /// `y - A_S x`.
    pub fn least_squares(&self, y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if y.len() != self.base.rows() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.base.rows(),
                found: y.len(),
            });
        }
        let (mut x, _) = self.split(y);
        let n = x.len();
        for k in (0..n).rev() {
            x[k] /= self.triangular[k][k];
            let xk = x[k];
            for i in 0..k {
                x[i] -= self.triangular[k][i] * xk;
            }
        }
        let mut residual = y.to_vec();
        for (&j, &xj) in self.support.iter().zip(&x) {
            axpy(-xj, self.base.col(j), &mut residual);
        }
        // One pass of projection cleans the O(eps·cond) drift of the direct residual.
        self.project_in_place(&mut residual);
        Ok((x, residual))
    }
}

/// Least-squares amplitudes of `y` on the columns of `matrix` indexed by
/// `support`. Returns the coefficients and the residual.
pub fn least_squares_on_support(
    matrix: &DenseMatrix,
    support: &[usize],
    y: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let f = GrowableFactorization::with_support(matrix, support).map_err(|e| match e {
        LinalgError::DegenerateAtom { .. } | LinalgError::AlreadyPresent { .. } => {
            LinalgError::RankDeficient
        }
        other => other,
    })?;
    f.least_squares(y)
}

/// Lower-triangular Cholesky factor `L` of the Gram matrix `A_Sᵀ A_S` of an
/// ordered active set `S`.
#[derive(Debug, Clone, Default)]
pub struct GramCholesky {
    active: Vec<usize>,
    // row i holds L[i, 0..=i]
    factor: Vec<Vec<f64>>,
}

impl GramCholesky {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    /// Dense copy of the factor (for inspection and tests).
    pub fn factor(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        self.factor
            .iter()
            .map(|row| {
                let mut full = row.clone();
                full.resize(n, 0.0);
                full
            })
            .collect()
    }

    /// Appends column `index` of `matrix` to the active set. O(|S|² + rows·|S|).
    pub fn insert(&mut self, matrix: &DenseMatrix, index: usize) -> Result<()> {
        if index >= matrix.cols() {
            return Err(LinalgError::IndexOutOfRange {
                index,
                cols: matrix.cols(),
            });
        }
        if self.active.contains(&index) {
            return Err(LinalgError::SingularGram { index });
        }
        let a = matrix.col(index);
        let cross: Vec<f64> = self.active.iter().map(|&j| dot(matrix.col(j), a)).collect();
        let mut row = self.forward(&cross);
        let diag_sq = dot(a, a) - dot(&row, &row);
        if diag_sq.is_nan() || diag_sq <= 0.0 || diag_sq.sqrt() < MIN_CHOLESKY_PIVOT {
            return Err(LinalgError::SingularGram { index });
        }
        row.push(diag_sq.sqrt());
        self.factor.push(row);
        self.active.push(index);
        Ok(())
    }

    /// Removes the element at `position` in the active ordering and restores
    /// the factor of the reduced Gram matrix by a rank-one update of the
    /// trailing block. O(|S|²).
    pub fn delete(&mut self, position: usize) -> Result<usize> {
        let n = self.len();
        if position >= n {
            return Err(LinalgError::IndexOutOfRange {
                index: position,
                cols: n,
            });
        }
        let removed = self.active.remove(position);
        self.factor.remove(position);
        // Trailing rows carry the removed column; fold it back in with Givens
        // style rank-one updates: L22' L22'ᵀ = L22 L22ᵀ + v vᵀ.
        let mut v: Vec<f64> = self.factor[position..]
            .iter_mut()
            .map(|row| row.remove(position))
            .collect();
        let m = v.len();
        for k in 0..m {
            let row_k = position + k;
            let lkk = self.factor[row_k][row_k];
            let r = lkk.hypot(v[k]);
            let c = r / lkk;
            let s = v[k] / lkk;
            self.factor[row_k][row_k] = r;
            for i in (k + 1)..m {
                let row_i = position + i;
                let lik = (self.factor[row_i][row_k] + s * v[i]) / c;
                self.factor[row_i][row_k] = lik;
                v[i] = c * v[i] - s * lik;
            }
        }
        Ok(removed)
    }

    /// `(A_Sᵀ A_S)⁻¹ rhs` by forward and back substitution.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.len() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.len(),
                found: rhs.len(),
            });
        }
        let mut z = self.forward(rhs);
        for i in (0..z.len()).rev() {
            let mut acc = z[i];
            for k in (i + 1)..z.len() {
                acc -= self.factor[k][i] * z[k];
            }
            z[i] = acc / self.factor[i][i];
        }
        Ok(z)
    }

    // L z = b
    fn forward(&self, b: &[f64]) -> Vec<f64> {
        let mut z = Vec::with_capacity(b.len());
        for (i, row) in self.factor.iter().enumerate() {
            let acc = b[i] - dot(&row[..i], &z);
            z.push(acc / row[i]);
        }
        z
    }
}
