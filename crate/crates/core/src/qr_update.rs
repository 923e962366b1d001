//! Dense QR factorization `A = QR` of an `n × k` matrix (`k ≤ n`) kept up to
//! date under column insertion and deletion with Givens rotations.
//!
//! `Qᵀ` and `R` are stored row-major so that a rotation of two rows touches
//! contiguous memory.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QrError {
    #[error("singular R: diagonal {index} is {value:e}")]
    Singular { index: usize, value: f64 },
    #[error("dimension mismatch")]
    Dimension,
}

/// Relative threshold on `|R_kk| / ‖R‖_F` below which `R` is singular.
pub const SINGULAR_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct QrState {
    n: usize,
    k: usize,
    /// `Qᵀ`, `n × n`, row-major.
    qt: Vec<f64>,
    /// `R`, `n × k`, row-major.
    r: Vec<f64>,
}

/// `(c, s)` with `[c s; −s c] (a, b)ᵀ = (ρ, 0)`.
fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let h = a.hypot(b);
        (a / h, b / h)
    }
}

fn rotate_rows(buf: &mut [f64], width: usize, i: usize, j: usize, from: usize, c: f64, s: f64) {
    debug_assert!(i < j);
    let (head, tail) = buf.split_at_mut(j * width);
    let ri = &mut head[i * width + from..(i + 1) * width];
    let rj = &mut tail[from..width];
    for (x, y) in ri.iter_mut().zip(rj.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a + s * b;
        *y = -s * a + c * b;
    }
}

impl QrState {
    /// Factorization of a matrix with no columns yet.
    pub fn empty(n: usize) -> Self {
        let mut qt = vec![0.0; n * n];
        for i in 0..n {
            qt[i * n + i] = 1.0;
        }
        Self {
            n,
            k: 0,
            qt,
            r: Vec::new(),
        }
    }

    /// Fresh factorization by successive column insertion.
    pub fn factor(a: &DMatrix<f64>) -> Result<Self, QrError> {
        let mut st = Self::empty(a.nrows());
        for j in 0..a.ncols() {
            st.insert_column(j, a.column(j).as_slice())?;
        }
        Ok(st)
    }

    pub fn from_columns(n: usize, cols: &[&[f64]]) -> Result<Self, QrError> {
        let mut st = Self::empty(n);
        for (j, c) in cols.iter().enumerate() {
            st.insert_column(j, c)?;
        }
        Ok(st)
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.k
    }

    pub fn r_entry(&self, i: usize, j: usize) -> f64 {
        self.r[i * self.k + j]
    }

    fn apply_qt(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                self.qt[i * self.n..(i + 1) * self.n]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// Row `i` of `Qᵀ`, i.e. `Qᵀ e_i` read as column `i` of `Q`.
    pub fn qt_column(&self, i: usize) -> Vec<f64> {
        (0..self.n).map(|row| self.qt[row * self.n + i]).collect()
    }

    /// Inserts `col` so it becomes column `idx`.
    pub fn insert_column(&mut self, idx: usize, col: &[f64]) -> Result<(), QrError> {
        if col.len() != self.n || idx > self.k || self.k == self.n {
            return Err(QrError::Dimension);
        }
        let w = self.apply_qt(col);
        let (n, k) = (self.n, self.k);
        let mut r = vec![0.0; n * (k + 1)];
        for i in 0..n {
            let old = &self.r[i * k..(i + 1) * k];
            let row = &mut r[i * (k + 1)..(i + 1) * (k + 1)];
            row[..idx].copy_from_slice(&old[..idx]);
            row[idx] = w[i];
            row[idx + 1..].copy_from_slice(&old[idx..]);
        }
        self.r = r;
        self.k = k + 1;
        let width = self.k;
        // zero the new column below its diagonal, bottom up
        for i in (idx + 1..n).rev() {
            let (a, b) = (self.r[(i - 1) * width + idx], self.r[i * width + idx]);
            if b == 0.0 {
                continue;
            }
            let (c, s) = givens(a, b);
            rotate_rows(&mut self.r, width, i - 1, i, idx, c, s);
            self.r[i * width + idx] = 0.0;
            rotate_rows(&mut self.qt, n, i - 1, i, 0, c, s);
        }
        Ok(())
    }

    /// Removes column `idx`, restoring triangular form.
    pub fn delete_column(&mut self, idx: usize) -> Result<(), QrError> {
        if idx >= self.k {
            return Err(QrError::Dimension);
        }
        let (n, k) = (self.n, self.k);
        let mut r = vec![0.0; n * (k - 1)];
        for i in 0..n {
            let old = &self.r[i * k..(i + 1) * k];
            let row = &mut r[i * (k - 1)..(i + 1) * (k - 1)];
            row[..idx].copy_from_slice(&old[..idx]);
            row[idx..].copy_from_slice(&old[idx + 1..]);
        }
        self.r = r;
        self.k = k - 1;
        let width = self.k;
        // upper Hessenberg from column idx on: clear the subdiagonal
        for j in idx..width {
            let (a, b) = (self.r[j * width + j], self.r[(j + 1) * width + j]);
            if b == 0.0 {
                continue;
            }
            let (c, s) = givens(a, b);
            rotate_rows(&mut self.r, width, j, j + 1, j, c, s);
            self.r[(j + 1) * width + j] = 0.0;
            rotate_rows(&mut self.qt, n, j, j + 1, 0, c, s);
        }
        Ok(())
    }

    pub fn r_norm(&self) -> f64 {
        self.r.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// First diagonal entry of `R` below `SINGULAR_RTOL · ‖R‖_F`.
    pub fn first_small_diagonal(&self) -> Option<usize> {
        let thresh = SINGULAR_RTOL * self.r_norm();
        (0..self.k.min(self.n)).find(|&i| self.r[i * self.k + i].abs() <= thresh)
    }

    /// Solves `A x = rhs` for square nonsingular `A`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, QrError> {
        if self.k != self.n || rhs.len() != self.n {
            return Err(QrError::Dimension);
        }
        if let Some(i) = self.first_small_diagonal() {
            return Err(QrError::Singular {
                index: i,
                value: self.r[i * self.k + i],
            });
        }
        let y = self.apply_qt(rhs);
        Ok(self.back_substitute(&y, self.k))
    }

    /// Solves the leading `size × size` triangle `R[..size, ..size] x = y[..size]`.
    pub fn back_substitute(&self, y: &[f64], size: usize) -> Vec<f64> {
        let k = self.k;
        let mut x = vec![0.0; size];
        for i in (0..size).rev() {
            let row = &self.r[i * k..i * k + size];
            let s: f64 = row[i + 1..]
                .iter()
                .zip(&x[i + 1..])
                .map(|(a, b)| a * b)
                .sum();
            x[i] = (y[i] - s) / row[i];
        }
        x
    }

    /// `x` with `x_idx = 1`, `x_j = 0` for `j > idx`, and `A x = 0` up to the
    /// size of `R_{idx,idx}`: the dependency of column `idx` on the earlier
    /// ones.
    pub fn null_vector_at(&self, idx: usize) -> Vec<f64> {
        let col: Vec<f64> = (0..idx).map(|i| self.r[i * self.k + idx]).collect();
        let mut x: Vec<f64> = self
            .back_substitute(&col, idx)
            .into_iter()
            .map(|v| -v)
            .collect();
        x.push(1.0);
        x.resize(self.k, 0.0);
        x
    }

    pub fn q(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.qt[j * self.n + i])
    }

    pub fn r(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.k, |i, j| self.r[i * self.k + j])
    }

    /// `Q R`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.q() * self.r()
    }
}
