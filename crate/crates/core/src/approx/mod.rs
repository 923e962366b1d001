//! Approximate Carathéodory: sparse convex combinations of columns close to a
//! target point, via fully-corrective Frank-Wolfe or Wolfe's min-norm-point
//! method.

pub mod fcfw;
pub mod mnp;
pub mod simplex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::caratheodory::ColumnSource;

pub use fcfw::fcfw;
pub use mnp::mnp;
pub use simplex::{project_simplex, simplex_ls, InnerConfig, SimplexLsResult};

const PARALLEL_MIN_COLUMNS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApproxMethod {
    Fcfw,
    Mnp,
}

impl ApproxMethod {
    pub fn name(self) -> &'static str {
        match self {
            ApproxMethod::Fcfw => "fcfw",
            ApproxMethod::Mnp => "mnp",
        }
    }
}

impl std::str::FromStr for ApproxMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fcfw" => Ok(ApproxMethod::Fcfw),
            "mnp" => Ok(ApproxMethod::Mnp),
            other => Err(format!("unknown approximate method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApproxStatus {
    /// Frank-Wolfe gap or residual below tolerance.
    Converged,
    /// Iteration budget `T` used up.
    MaxIter,
    /// Some inner simplex least-squares solve hit its iteration cap; the best
    /// inner iterate was kept.
    InnerStalled,
    /// Minor-cycle budget exhausted.
    CycleGuard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApproxConfig {
    /// Outer iteration budget `T`.
    #[serde(rename = "T")]
    pub t: usize,
    /// Relative stopping tolerance on the Frank-Wolfe gap.
    pub tol: f64,
    /// Scale every row by `1 / max_j |row_j|` before solving.
    pub equilibrate: bool,
    pub inner: InnerConfig,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        Self {
            t: 100,
            tol: 1e-12,
            equilibrate: false,
            inner: InnerConfig::default(),
        }
    }
}

impl ApproxConfig {
    pub fn with_budget(t: usize) -> Self {
        Self {
            t,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxResult {
    /// Column indices with positive weight, ascending.
    pub indices: Vec<usize>,
    /// Simplex weights matching `indices`.
    pub beta: Vec<f64>,
    /// `‖Σ β_l col_l − target‖`, recomputed from the columns.
    pub residual: f64,
    /// Residual after each outer iteration, starting at `t = 0`.
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub status: ApproxStatus,
}

/// Runs `method`, on row-equilibrated data when `cfg.equilibrate` is set.
/// The reported residual is always in the original units.
pub fn solve(
    method: ApproxMethod,
    src: &dyn ColumnSource,
    target: &[f64],
    cfg: &ApproxConfig,
) -> ApproxResult {
    let run = |s: &dyn ColumnSource, t: &[f64]| match method {
        ApproxMethod::Fcfw => fcfw(s, t, cfg),
        ApproxMethod::Mnp => mnp(s, t, cfg),
    };
    if !cfg.equilibrate {
        return run(src, target);
    }
    let scaled = RowScaled::new(src);
    let t: Vec<f64> = target
        .iter()
        .zip(&scaled.scale)
        .map(|(a, s)| a * s)
        .collect();
    let mut res = run(&scaled, &t);
    res.residual = combination_residual(src, target, &res.indices, &res.beta);
    res
}

/// View of a column source with every row multiplied by `scale`.
pub struct RowScaled<'a> {
    inner: &'a dyn ColumnSource,
    scale: Vec<f64>,
}

impl<'a> RowScaled<'a> {
    /// Scales row `r` by `1 / max_j |w_{rj}|` (rows of zeros are left alone).
    pub fn new(inner: &'a dyn ColumnSource) -> Self {
        let p = inner.dim();
        let mut row_max = vec![0.0f64; p];
        let mut col = vec![0.0; p];
        for j in 0..inner.len() {
            inner.column(j, &mut col);
            for (m, c) in row_max.iter_mut().zip(&col) {
                *m = m.max(c.abs());
            }
        }
        let scale = row_max
            .iter()
            .map(|&m| if m > 0.0 { 1.0 / m } else { 1.0 })
            .collect();
        Self { inner, scale }
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }
}

impl ColumnSource for RowScaled<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn len(&self) -> usize {
        self.inner.len()
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        self.inner.column(j, out);
        for (o, s) in out.iter_mut().zip(&self.scale) {
            *o *= s;
        }
    }

    fn weight(&self, j: usize) -> f64 {
        self.inner.weight(j)
    }

    fn column_dot(&self, j: usize, r: &[f64]) -> f64 {
        let rs: Vec<f64> = r.iter().zip(&self.scale).map(|(a, s)| a * s).collect();
        self.inner.column_dot(j, &rs)
    }
}

/// `argmin_j ⟨col_j, d⟩` with ties to the lowest index.
pub(crate) fn linear_argmin(src: &dyn ColumnSource, d: &[f64]) -> (usize, f64) {
    let pick = |a: (f64, usize), b: (f64, usize)| {
        if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
            b
        } else {
            a
        }
    };
    let n = src.len();
    let (v, j) = if n >= PARALLEL_MIN_COLUMNS {
        (0..n)
            .into_par_iter()
            .map(|j| (src.column_dot(j, d), j))
            .reduce(|| (f64::INFINITY, usize::MAX), pick)
    } else {
        (0..n)
            .map(|j| (src.column_dot(j, d), j))
            .fold((f64::INFINITY, usize::MAX), pick)
    };
    (j, v)
}

/// Column nearest to `target`, ties to the lowest index.
pub(crate) fn nearest_column(src: &dyn ColumnSource, target: &[f64]) -> usize {
    let p = src.dim();
    let mut col = vec![0.0; p];
    let mut best = (f64::INFINITY, 0);
    for j in 0..src.len() {
        src.column(j, &mut col);
        let d: f64 = col.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.0 {
            best = (d, j);
        }
    }
    best.1
}

/// Sorts `(index, weight)` pairs, drops nonpositive weights and renormalizes.
pub(crate) fn finish(
    src: &dyn ColumnSource,
    target: &[f64],
    pairs: Vec<(usize, f64)>,
    residual_history: Vec<f64>,
    iterations: usize,
    status: ApproxStatus,
) -> ApproxResult {
    let mut pairs: Vec<(usize, f64)> = pairs.into_iter().filter(|&(_, w)| w > 0.0).collect();
    pairs.sort_by_key(|&(j, _)| j);
    let total: f64 = pairs.iter().map(|&(_, w)| w).sum();
    let (indices, beta): (Vec<usize>, Vec<f64>) =
        pairs.into_iter().map(|(j, w)| (j, w / total)).unzip();
    let residual = combination_residual(src, target, &indices, &beta);
    ApproxResult {
        indices,
        beta,
        residual,
        residual_history,
        iterations,
        status,
    }
}

pub(crate) fn combination_residual(
    src: &dyn ColumnSource,
    target: &[f64],
    indices: &[usize],
    beta: &[f64],
) -> f64 {
    let p = src.dim();
    let mut col = vec![0.0; p];
    let mut x: Vec<f64> = target.iter().map(|t| -t).collect();
    for (&j, &b) in indices.iter().zip(beta) {
        src.column(j, &mut col);
        for (xi, c) in x.iter_mut().zip(&col) {
            *xi += b * c;
        }
    }
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
