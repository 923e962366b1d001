//! Wolfe's min-norm-point method on the shifted columns `a_j = col_j − target`.
//!
//! Affine minimizers over the active set solve `(AᵀA + 11ᵀ) μ ∝ 1`; the
//! matrix is kept as `RᵀR` with `R` upper triangular, grown by one row per
//! added atom and repaired with Givens rotations when an atom leaves.

use nalgebra::{Cholesky, DMatrix};

use super::{finish, linear_argmin, nearest_column, ApproxConfig, ApproxResult, ApproxStatus};
use crate::caratheodory::ColumnSource;

const DIAG_RTOL: f64 = 1e-12;

/// Upper-triangular `R` with `RᵀR = AᵀA + 11ᵀ`, stored by rows.
#[derive(Debug, Clone, Default)]
struct AffineFactor {
    rows: Vec<Vec<f64>>,
}

impl AffineFactor {
    fn size(&self) -> usize {
        self.rows.len()
    }

    /// Appends the column whose Gram entries against the current set are
    /// `cross` and whose own entry is `diag` (both including the `+1`).
    /// Returns false when the new pivot is numerically zero.
    fn push(&mut self, cross: &[f64], diag: f64) -> bool {
        let k = self.size();
        // Rᵀ r = cross
        let mut r = vec![0.0; k];
        for i in 0..k {
            let s: f64 = (0..i).map(|l| self.rows[l][i] * r[l]).sum();
            r[i] = (cross[i] - s) / self.rows[i][i];
        }
        let rho2 = diag - r.iter().map(|v| v * v).sum::<f64>();
        if rho2 <= DIAG_RTOL * diag.abs().max(1.0) {
            return false;
        }
        for (row, v) in self.rows.iter_mut().zip(&r) {
            row.push(*v);
        }
        let mut last = vec![0.0; k + 1];
        last[k] = rho2.sqrt();
        self.rows.push(last);
        true
    }

    /// Removes column `idx` and restores triangular form.
    fn remove(&mut self, idx: usize) {
        for row in self.rows.iter_mut() {
            row.remove(idx);
        }
        let k = self.rows.len();
        // rows idx+1.. now have a subdiagonal entry at column j = row − 1
        for j in idx..k - 1 {
            let a = self.rows[j][j];
            let b = self.rows[j + 1][j];
            let h = a.hypot(b);
            if h == 0.0 {
                continue;
            }
            let (c, s) = (a / h, b / h);
            for col in j..k - 1 {
                let u = self.rows[j][col];
                let v = self.rows[j + 1][col];
                self.rows[j][col] = c * u + s * v;
                self.rows[j + 1][col] = -s * u + c * v;
            }
            self.rows[j + 1][j] = 0.0;
        }
        self.rows.pop();
    }

    fn min_diag_ratio(&self) -> f64 {
        let d: Vec<f64> = (0..self.size()).map(|i| self.rows[i][i].abs()).collect();
        let max = d.iter().cloned().fold(0.0, f64::max);
        if max == 0.0 {
            return 0.0;
        }
        d.iter().cloned().fold(f64::INFINITY, f64::min) / max
    }

    /// Solution of `RᵀR μ = 1`.
    fn solve_ones(&self) -> Vec<f64> {
        let k = self.size();
        let mut y = vec![0.0; k];
        for i in 0..k {
            let s: f64 = (0..i).map(|l| self.rows[l][i] * y[l]).sum();
            y[i] = (1.0 - s) / self.rows[i][i];
        }
        let mut mu = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|l| self.rows[i][l] * mu[l]).sum();
            mu[i] = (y[i] - s) / self.rows[i][i];
        }
        mu
    }

    fn from_columns(cols: &[Vec<f64>]) -> Option<Self> {
        let k = cols.len();
        let gram = DMatrix::from_fn(k, k, |i, j| {
            1.0 + cols[i]
                .iter()
                .zip(&cols[j])
                .map(|(a, b)| a * b)
                .sum::<f64>()
        });
        let l = Cholesky::new(gram)?.l();
        let rows = (0..k)
            .map(|i| (0..k).map(|j| l[(j, i)]).collect())
            .collect();
        let f = Self { rows };
        (f.min_diag_ratio() > DIAG_RTOL).then_some(f)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn combine(cols: &[Vec<f64>], w: &[f64], p: usize) -> Vec<f64> {
    let mut x = vec![0.0; p];
    for (c, &wi) in cols.iter().zip(w) {
        for (xi, ci) in x.iter_mut().zip(c) {
            *xi += wi * ci;
        }
    }
    x
}

/// At most `cfg.t` major cycles; stops when `xᵀ(x − a_s) ≤ tol·‖x‖²`.
pub fn mnp(src: &dyn ColumnSource, target: &[f64], cfg: &ApproxConfig) -> ApproxResult {
    let p = src.dim();
    assert_eq!(target.len(), p, "target dimension");
    assert!(!src.is_empty(), "no columns");

    let shifted = |j: usize| {
        let mut c = vec![0.0; p];
        src.column(j, &mut c);
        for (ci, t) in c.iter_mut().zip(target) {
            *ci -= t;
        }
        c
    };
    let target_dot = |d: &[f64]| dot(target, d);

    let start = nearest_column(src, target);
    let mut active = vec![start];
    let mut cols = vec![shifted(start)];
    let mut lam = vec![1.0];
    let mut factor = AffineFactor::default();
    factor.push(&[], 1.0 + dot(&cols[0], &cols[0]));
    let mut x = cols[0].clone();

    let target_scale = dot(target, target).sqrt();
    let tiny = 1e-15 * (1.0 + target_scale);
    let mut history = vec![dot(&x, &x).sqrt()];
    let minor_cap = 10 * cfg.t.max(1);
    let mut minor = 0;
    let mut status = ApproxStatus::MaxIter;
    let mut iterations = 0;

    'major: for _ in 0..cfg.t {
        let xx = dot(&x, &x);
        if xx.sqrt() <= tiny {
            status = ApproxStatus::Converged;
            break;
        }
        let (j, col_dot_x) = linear_argmin(src, &x);
        let s_dot_x = col_dot_x - target_dot(&x);
        if xx - s_dot_x <= cfg.tol * xx || active.contains(&j) {
            status = ApproxStatus::Converged;
            break;
        }
        let a = shifted(j);
        let cross: Vec<f64> = cols.iter().map(|c| 1.0 + dot(c, &a)).collect();
        if !factor.push(&cross, 1.0 + dot(&a, &a)) {
            // affinely dependent on the active set: no descent left
            status = ApproxStatus::Converged;
            break;
        }
        iterations += 1;
        active.push(j);
        cols.push(a);
        lam.push(0.0);

        loop {
            if factor.min_diag_ratio() <= DIAG_RTOL {
                match AffineFactor::from_columns(&cols) {
                    Some(f) => factor = f,
                    None => {
                        status = ApproxStatus::Converged;
                        break 'major;
                    }
                }
            }
            let raw = factor.solve_ones();
            let total: f64 = raw.iter().sum();
            let mu: Vec<f64> = raw.iter().map(|v| v / total).collect();
            if mu.iter().all(|&v| v > 0.0) {
                lam = mu;
                x = combine(&cols, &lam, p);
                break;
            }
            minor += 1;
            if minor > minor_cap {
                status = ApproxStatus::CycleGuard;
                break 'major;
            }
            // largest step toward μ keeping λ ≥ 0
            let mut theta = 1.0f64;
            for (&l, &m) in lam.iter().zip(&mu) {
                if m <= 0.0 && l - m > 0.0 {
                    theta = theta.min(l / (l - m));
                }
            }
            for (l, m) in lam.iter_mut().zip(&mu) {
                *l = (1.0 - theta) * *l + theta * m;
            }
            // drop the blocking atoms, highest position first
            let mut dropped = false;
            for k in (0..lam.len()).rev() {
                let blocking = mu[k] <= 0.0 && lam[k] <= 1e-15;
                if blocking && lam.len() > 1 {
                    lam.remove(k);
                    active.remove(k);
                    cols.remove(k);
                    factor.remove(k);
                    dropped = true;
                }
            }
            if !dropped {
                // the step hit no boundary cleanly; take the smallest weight out
                let k = (0..lam.len())
                    .min_by(|&a, &b| lam[a].total_cmp(&lam[b]))
                    .expect("nonempty active set");
                lam.remove(k);
                active.remove(k);
                cols.remove(k);
                factor.remove(k);
            }
            let s: f64 = lam.iter().sum();
            lam.iter_mut().for_each(|l| *l /= s);
        }
        history.push(dot(&x, &x).sqrt());
    }
    let pairs = active.into_iter().zip(lam).collect();
    finish(src, target, pairs, history, iterations, status)
}
