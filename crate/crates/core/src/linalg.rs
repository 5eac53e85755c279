//! Small dense matrices and the controllability tests for the three
//! non-invasive feedback laws.
//!
//! The matrices handled here are tiny (state dimensions of a handful), so
//! everything is plain row-major storage with Gaussian elimination.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use crate::error::{Error, Result};

/// Default relative pivot threshold for rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Dense real matrix in row-major order.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
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
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major entries. Entries must be finite.
    pub fn from_row_slice(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix entries must be finite".into()));
        }
        Ok(Self {
            rows,
            cols,
            data: entries.to_vec(),
        })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flat_map(|row| row.iter().copied()).collect();
        Self::from_row_slice(r, c, &flat)
    }

    /// Column vector.
    pub fn column(entries: &[f64]) -> Result<Self> {
        Self::from_row_slice(entries.len(), 1, entries)
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
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
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn try_mul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        Ok(out)
    }

    fn zip_with(&self, rhs: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(Error::Dimension(format!(
                "shape {}x{} vs {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    pub fn try_add(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn try_sub(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, |a, b| a - b)
    }

    /// Horizontal concatenation `[self, rhs]`.
    pub fn hstack(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.rows != rhs.rows {
            return Err(Error::Dimension("hstack needs equal row counts".into()));
        }
        let cols = self.cols + rhs.cols;
        let mut out = Matrix::zeros(self.rows, cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = self[(i, j)];
            }
            for j in 0..rhs.cols {
                out[(i, self.cols + j)] = rhs[(i, j)];
            }
        }
        Ok(out)
    }

    /// Vertical concatenation `[self; rhs]`.
    pub fn vstack(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.cols {
            return Err(Error::Dimension("vstack needs equal column counts".into()));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&rhs.data);
        Ok(Matrix {
            rows: self.rows + rhs.rows,
            cols: self.cols,
            data,
        })
    }

    /// Determinant by partial-pivot LU.
    pub fn det(&self) -> Result<f64> {
        if !self.is_square() {
            return Err(Error::Dimension("determinant of a non-square matrix".into()));
        }
        let n = self.rows;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
                .unwrap_or(col);
            let p = a[pivot * n + col];
            if p == 0.0 {
                return Ok(0.0);
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot * n + j);
                }
                det = -det;
            }
            det *= p;
            for i in col + 1..n {
                let factor = a[i * n + col] / p;
                if factor != 0.0 {
                    for j in col..n {
                        a[i * n + j] -= factor * a[col * n + j];
                    }
                }
            }
        }
        Ok(det)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &Matrix {
    type Output = Matrix;

    fn mul(self, rhs: &Matrix) -> Matrix {
        self.try_mul(rhs).expect("matrix product shape mismatch")
    }
}

impl Add for &Matrix {
    type Output = Matrix;

    fn add(self, rhs: &Matrix) -> Matrix {
        self.try_add(rhs).expect("matrix sum shape mismatch")
    }
}

impl Sub for &Matrix {
    type Output = Matrix;

    fn sub(self, rhs: &Matrix) -> Matrix {
        self.try_sub(rhs).expect("matrix difference shape mismatch")
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|j| format!("{:>12.6e}", self[(i, j)]))
                .collect();
            writeln!(f, "  {}", row.join(", "))?;
        }
        write!(f, "]")
    }
}

/// Outcome of probing a matrix pencil `A0 + λ A1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PencilReport {
    pub regular: bool,
    /// Probe value with the largest `|det(A0 + λ A1)|`.
    pub sample_a: f64,
    pub probe_dets: Vec<(f64, f64)>,
}

/// Numerical rank by row reduction. Pivots smaller than `tol` times the
/// largest absolute entry count as zero.
pub fn mat_rank(m: &Matrix, tol: f64) -> usize {
    let (rows, cols) = (m.rows(), m.cols());
    let scale = m.max_abs();
    if rows == 0 || cols == 0 || scale == 0.0 {
        return 0;
    }
    let threshold = tol * scale;
    let mut a = m.as_slice().to_vec();
    let mut rank = 0;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let pivot = (rank..rows)
            .max_by(|&i, &j| a[i * cols + col].abs().total_cmp(&a[j * cols + col].abs()))
            .unwrap();
        let p = a[pivot * cols + col];
        if p.abs() <= threshold {
            continue;
        }
        for j in 0..cols {
            a.swap(rank * cols + j, pivot * cols + j);
        }
        for i in rank + 1..rows {
            let factor = a[i * cols + col] / p;
            if factor != 0.0 {
                for j in col..cols {
                    a[i * cols + j] -= factor * a[rank * cols + j];
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Controllability matrix `[B, AB, ..., A^{n-1}B]`.
pub fn controllability_matrix(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::Dimension("A must be square".into()));
    }
    if b.rows() != a.rows() {
        return Err(Error::Dimension(format!(
            "B has {} rows, A is {}x{}",
            b.rows(),
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();
    let mut out = Matrix::zeros(n, 0);
    let mut block = b.clone();
    for k in 0..n {
        out = out.hstack(&block)?;
        if k + 1 < n {
            block = a.try_mul(&block)?;
        }
    }
    Ok(out)
}

fn full_row_rank(m: &Matrix, tol: f64) -> bool {
    mat_rank(m, tol) == m.rows()
}

/// Washout-filter controllability: `(A, B)` controllable and `A` regular.
pub fn washout_controllable(a: &Matrix, b: &Matrix, tol: f64) -> Result<bool> {
    let r = controllability_matrix(a, b)?;
    Ok(full_row_rank(&r, tol) && full_row_rank(a, tol))
}

/// Parameter-control controllability: `(f_x, f_mu)` controllable.
pub fn param_controllable(f_x: &Matrix, f_mu: &Matrix, tol: f64) -> Result<bool> {
    if f_mu.cols() != 1 {
        return Err(Error::Dimension("f_mu must be a column".into()));
    }
    let r = controllability_matrix(f_x, f_mu)?;
    Ok(full_row_rank(&r, tol))
}

/// `a f_x R_u + R_mu` for a scalar input.
pub fn zie_condition_matrix(f_x: &Matrix, f_mu: &Matrix, f_u: &Matrix, a: f64) -> Result<Matrix> {
    if f_u.cols() != 1 || f_mu.cols() != 1 {
        return Err(Error::Dimension("ZIE needs scalar input and parameter".into()));
    }
    let r_u = controllability_matrix(f_x, f_u)?;
    let r_mu = controllability_matrix(f_x, f_mu)?;
    f_x.try_mul(&r_u)?.scale(a).try_add(&r_mu)
}

/// Zero-in-equilibrium controllability at input weight `a`: the matrix
/// `a f_x R_u + R_mu` is regular.
pub fn zie_controllable(f_x: &Matrix, f_mu: &Matrix, f_u: &Matrix, a: f64, tol: f64) -> Result<bool> {
    let m = zie_condition_matrix(f_x, f_mu, f_u, a)?;
    Ok(full_row_rank(&m, tol))
}

/// Product of the row norms, an upper bound on `|det|`.
pub fn hadamard_bound(m: &Matrix) -> f64 {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| m[(i, j)] * m[(i, j)]).sum::<f64>().sqrt())
        .product()
}

/// Integer probe points `0, 1, -1, 2, -2, ...`, `count` of them.
pub fn default_probes(count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| {
            let m = k.div_ceil(2) as f64;
            if k % 2 == 1 {
                m
            } else {
                -m
            }
        })
        .collect()
}

/// Regularity of the pencil `A0 + λ A1` using the integer probe set.
pub fn pencil_regular(a0: &Matrix, a1: &Matrix, tol: f64) -> Result<PencilReport> {
    let probes = default_probes(a0.rows() + 1);
    pencil_regular_with(a0, a1, &probes, tol)
}

/// Regularity of `A0 + λ A1` from determinant probes at `probes`.
///
/// `det(A0 + λ A1)` is a polynomial of degree at most `n`, so `n + 1`
/// distinct probes decide whether it vanishes identically.
pub fn pencil_regular_with(a0: &Matrix, a1: &Matrix, probes: &[f64], tol: f64) -> Result<PencilReport> {
    if !a0.is_square() || a0.rows() != a1.rows() || a0.cols() != a1.cols() {
        return Err(Error::Dimension("pencil needs equal square matrices".into()));
    }
    let n = a0.rows();
    if probes.len() < n + 1 {
        return Err(Error::InvalidInput(format!(
            "{} probes for a pencil of size {n}",
            probes.len()
        )));
    }
    let mut probe_dets = Vec::with_capacity(probes.len());
    let mut best = (probes[0], -1.0_f64);
    let mut regular = false;
    for &lambda in probes {
        let m = a0.try_add(&a1.scale(lambda))?;
        let det = m.det()?;
        let bound = hadamard_bound(&m);
        if bound > 0.0 && det.abs() > tol * bound {
            regular = true;
        }
        if det.abs() > best.1 {
            best = (lambda, det.abs());
        }
        probe_dets.push((lambda, det));
    }
    Ok(PencilReport {
        regular,
        sample_a: best.0,
        probe_dets,
    })
}
