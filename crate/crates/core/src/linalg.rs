//! Small dense real linear algebra.
//!
//! Everything here is sized for problems with a few dozen unknowns at most:
//! a row-major matrix, a plain vector, and one partially pivoted LU
//! factorization that backs every solve and inverse in the crate. The
//! componentwise order `u ⪯ v` used throughout the bound computations also
//! lives here.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Relative pivot magnitude below which a matrix is declared singular.
pub const PIVOT_RELATIVE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is singular (pivot {pivot_index} below threshold)")]
    SingularMatrix { pivot_index: usize },
    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },
    #[error("ragged rows: row {row} has {actual} entries, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        actual: usize,
    },
}

/// Dense real vector with finite entries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseVector {
    entries: Vec<f64>,
}

impl DenseVector {
    pub fn new(entries: Vec<f64>) -> Result<Self, LinalgError> {
        if let Some(index) = entries.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite { index });
        }
        Ok(Self { entries })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: vec![0.0; dim],
        }
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        Self {
            entries: vec![value; dim],
        }
    }

    /// The `i`-th unit vector of dimension `dim`.
    pub fn unit(dim: usize, i: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.entries[i] = 1.0;
        v
    }

    pub(crate) fn from_vec_unchecked(entries: Vec<f64>) -> Self {
        debug_assert!(entries.iter().all(|v| v.is_finite()));
        Self { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.entries
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.entries.iter()
    }

    pub fn norm_inf(&self) -> f64 {
        self.entries.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::from_vec_unchecked(self.entries.iter().map(|v| v * factor).collect())
    }

    pub fn add(&self, other: &Self) -> Result<Self, LinalgError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, LinalgError> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Componentwise maximum.
    pub fn max(&self, other: &Self) -> Result<Self, LinalgError> {
        self.zip_with(other, f64::max)
    }

    /// Componentwise minimum.
    pub fn min(&self, other: &Self) -> Result<Self, LinalgError> {
        self.zip_with(other, f64::min)
    }

    /// Concatenates `self` and `other` into one vector.
    pub fn concat(&self, other: &Self) -> Self {
        let mut entries = self.entries.clone();
        entries.extend_from_slice(&other.entries);
        Self::from_vec_unchecked(entries)
    }

    /// Splits into the first `at` entries and the rest.
    pub fn split_at(&self, at: usize) -> (Self, Self) {
        let (head, tail) = self.entries.split_at(at);
        (
            Self::from_vec_unchecked(head.to_vec()),
            Self::from_vec_unchecked(tail.to_vec()),
        )
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self, LinalgError> {
        check_dim(self.dim(), other.dim())?;
        Ok(Self::from_vec_unchecked(
            self.entries
                .iter()
                .zip(&other.entries)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }
}

impl Index<usize> for DenseVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.entries[i]
    }
}

impl IndexMut<usize> for DenseVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.entries[i]
    }
}

/// `[v1, v2, …]`; a precision such as `{:.4}` applies to every entry.
impl fmt::Display for DenseVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, v) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            match f.precision() {
                Some(p) => write!(f, "{v:.p$}")?,
                None => write!(f, "{v}")?,
            }
        }
        write!(f, "]")
    }
}

impl From<DenseVector> for Vec<f64> {
    fn from(v: DenseVector) -> Self {
        v.entries
    }
}

impl TryFrom<Vec<f64>> for DenseVector {
    type Error = LinalgError;

    fn try_from(entries: Vec<f64>) -> Result<Self, LinalgError> {
        Self::new(entries)
    }
}

impl Serialize for DenseVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.entries.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DenseVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let entries = Vec::<f64>::deserialize(deserializer)?;
        Self::new(entries).map_err(serde::de::Error::custom)
    }
}

/// Dense real matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self, LinalgError> {
        check_dim(rows * cols, entries.len())?;
        if let Some(index) = entries.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite { index });
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    /// Builds a matrix from row arrays. An empty slice gives a 0×0 matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut entries = Vec::with_capacity(rows.len() * cols);
        for (row, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(LinalgError::RaggedRows {
                    row,
                    expected: cols,
                    actual: r.len(),
                });
            }
            entries.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, entries)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diagonal(values: &[f64]) -> Result<Self, LinalgError> {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        Self::new(m.rows, m.cols, m.entries)
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

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> DenseVector {
        DenseVector::from_vec_unchecked((0..self.rows).map(|i| self[(i, j)]).collect())
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, LinalgError> {
        check_dim(self.rows, other.rows)?;
        check_dim(self.cols, other.cols)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, LinalgError> {
        self.add(&other.scale(-1.0))
    }

    /// `self + shift·I`.
    pub fn shift_diagonal(&self, shift: f64) -> Result<Self, LinalgError> {
        self.require_square()?;
        let mut m = self.clone();
        for i in 0..self.rows {
            m[(i, i)] += shift;
        }
        Ok(m)
    }

    pub fn mul_vec(&self, v: &DenseVector) -> Result<DenseVector, LinalgError> {
        check_dim(self.cols, v.dim())?;
        let mut out = vec![0.0; self.rows];
        self.mul_slice_into(v.as_slice(), &mut out);
        Ok(DenseVector::from_vec_unchecked(out))
    }

    /// `out = self · v` on raw slices; used by the integrator's hot loop.
    pub(crate) fn mul_slice_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    pub fn mul_mat(&self, other: &Self) -> Result<Self, LinalgError> {
        check_dim(self.cols, other.rows)?;
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// Assembles `[[tl, tr], [bl, br]]`.
    pub fn block(tl: &Self, tr: &Self, bl: &Self, br: &Self) -> Result<Self, LinalgError> {
        check_dim(tl.rows, tr.rows)?;
        check_dim(bl.rows, br.rows)?;
        check_dim(tl.cols, bl.cols)?;
        check_dim(tr.cols, br.cols)?;
        let rows = tl.rows + bl.rows;
        let cols = tl.cols + tr.cols;
        let mut out = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                out[(i, j)] = match (i < tl.rows, j < tl.cols) {
                    (true, true) => tl[(i, j)],
                    (true, false) => tr[(i, j - tl.cols)],
                    (false, true) => bl[(i - tl.rows, j)],
                    (false, false) => br[(i - tl.rows, j - tl.cols)],
                };
            }
        }
        Ok(out)
    }

    /// Largest entry, or `-inf` for an empty matrix.
    pub fn max_entry(&self) -> f64 {
        self.entries
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// First `(row, col)` whose entry is below `-tol`.
    pub fn first_negative(&self, tol: f64) -> Option<(usize, usize)> {
        self.entries
            .iter()
            .position(|&v| v < -tol)
            .map(|k| (k / self.cols, k % self.cols))
    }

    /// First off-diagonal `(row, col)` whose entry is below `-tol`.
    pub fn first_negative_off_diagonal(&self, tol: f64) -> Option<(usize, usize)> {
        (0..self.rows)
            .flat_map(|i| (0..self.cols).map(move |j| (i, j)))
            .find(|&(i, j)| i != j && self[(i, j)] < -tol)
    }

    pub fn lu(&self) -> Result<LuDecomposition, LinalgError> {
        LuDecomposition::new(self)
    }

    pub fn solve(&self, rhs: &DenseVector) -> Result<DenseVector, LinalgError> {
        solve(self, rhs)
    }

    pub fn inverse(&self) -> Result<DenseMatrix, LinalgError> {
        inverse(self)
    }

    fn require_square(&self) -> Result<(), LinalgError> {
        if self.is_square() {
            Ok(())
        } else {
            Err(LinalgError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            })
        }
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.entries[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.entries[i * self.cols + j]
    }
}

impl fmt::Display for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v:>10.4}")).collect();
            writeln!(f, "[{}]", row.join(" "))?;
        }
        Ok(())
    }
}

impl Serialize for DenseMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DenseMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        Self::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Partially pivoted LU factorization `P·M = L·U`.
#[derive(Debug, Clone)]
pub struct LuDecomposition {
    lu: DenseMatrix,
    pivots: Vec<usize>,
}

impl LuDecomposition {
    pub fn new(m: &DenseMatrix) -> Result<Self, LinalgError> {
        m.require_square()?;
        let n = m.rows;
        let mut lu = m.clone();
        let mut pivots: Vec<usize> = (0..n).collect();

        // Reference scale: the largest candidate in the first pivot column.
        let reference = (0..n).fold(0.0_f64, |acc, i| acc.max(lu[(i, 0)].abs()));
        let reference = if reference > 0.0 {
            reference
        } else {
            m.entries.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
        };
        let threshold = PIVOT_RELATIVE_TOLERANCE * reference;

        for k in 0..n {
            let (p, magnitude) =
                (k..n)
                    .map(|i| (i, lu[(i, k)].abs()))
                    .fold(
                        (k, -1.0),
                        |best, cand| if cand.1 > best.1 { cand } else { best },
                    );
            if magnitude <= threshold || magnitude == 0.0 {
                return Err(LinalgError::SingularMatrix { pivot_index: k });
            }
            if p != k {
                for j in 0..n {
                    lu.entries.swap(k * n + j, p * n + j);
                }
                pivots.swap(k, p);
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let factor = lu[(i, k)] / pivot;
                lu[(i, k)] = factor;
                if factor != 0.0 {
                    for j in k + 1..n {
                        lu[(i, j)] -= factor * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Self { lu, pivots })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows
    }

    pub fn solve(&self, rhs: &DenseVector) -> Result<DenseVector, LinalgError> {
        let n = self.dim();
        check_dim(n, rhs.dim())?;
        let mut x: Vec<f64> = self.pivots.iter().map(|&p| rhs[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[(i, j)] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[(i, j)] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[(i, i)];
        }
        DenseVector::new(x)
    }

    pub fn inverse(&self) -> Result<DenseMatrix, LinalgError> {
        let n = self.dim();
        let mut inv = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let col = self.solve(&DenseVector::unit(n, j))?;
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Ok(inv)
    }
}

/// Solves `m · x = rhs` by partially pivoted LU.
pub fn solve(m: &DenseMatrix, rhs: &DenseVector) -> Result<DenseVector, LinalgError> {
    m.require_square()?;
    check_dim(m.rows, rhs.dim())?;
    m.lu()?.solve(rhs)
}

/// `m⁻¹`, assembled column by column from solves against unit vectors.
pub fn inverse(m: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    m.lu()?.inverse()
}

/// `u ⪯ v` with additive slack: `u_i ≤ v_i + slack` for every `i`.
pub fn cmp_leq(u: &DenseVector, v: &DenseVector, slack: f64) -> Result<bool, LinalgError> {
    check_dim(u.dim(), v.dim())?;
    Ok(u.iter().zip(v.iter()).all(|(a, b)| *a <= b + slack))
}

/// Strict positivity `v ≻ threshold`.
pub fn all_greater(v: &DenseVector, threshold: f64) -> bool {
    v.iter().all(|&x| x > threshold)
}

fn check_dim(expected: usize, actual: usize) -> Result<(), LinalgError> {
    if expected == actual {
        Ok(())
    } else {
        Err(LinalgError::DimensionMismatch { expected, actual })
    }
}
