//! Lifting the Frank-Wolfe output to `R^{1+m+n}` and trimming it.
//!
//! Each distinct atom `y` of block `i` becomes the column
//! `(f_i(y), A_i y, e_i)`; with the merged round weights these columns
//! reproduce `w^K = (z^K, 1_n)`. An exact reduction keeps at most `n+m+1`
//! columns, so at most `m+1` blocks keep more than one atom. The approximate
//! path instead looks for a sparse convex combination near `w^K / n`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{self, ApproxConfig, ApproxMethod, ApproxStatus};
use crate::caratheodory::{reduce, CarathConfig, CarathError, ColumnSource};
use crate::fw::FwTrace;
use crate::model::{Atom, ModelError, ProblemInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CarathMethod {
    Exact,
    Fcfw,
    Mnp,
}

impl CarathMethod {
    pub fn name(self) -> &'static str {
        match self {
            CarathMethod::Exact => "exact",
            CarathMethod::Fcfw => "fcfw",
            CarathMethod::Mnp => "mnp",
        }
    }

    pub fn approx(self) -> Option<ApproxMethod> {
        match self {
            CarathMethod::Exact => None,
            CarathMethod::Fcfw => Some(ApproxMethod::Fcfw),
            CarathMethod::Mnp => Some(ApproxMethod::Mnp),
        }
    }
}

impl std::str::FromStr for CarathMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(CarathMethod::Exact),
            "fcfw" => Ok(CarathMethod::Fcfw),
            "mnp" => Ok(CarathMethod::Mnp),
            other => Err(format!("unknown Carathéodory method `{other}`")),
        }
    }
}

impl std::fmt::Display for CarathMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum TrimError {
    #[error(transparent)]
    Carath(#[from] CarathError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("uncovered block: blocks {blocks:?} received no atom (T = {t})")]
    UncoveredBlock { blocks: Vec<usize>, t: usize },
    #[error("T = {t} is below n − 1 = {min}")]
    BudgetTooSmall { t: usize, min: usize },
}

/// Merged FW atoms as lifted columns `(cost, A_i y, e_i)` with their conic
/// weights.
#[derive(Debug, Clone)]
pub struct LiftedColumns {
    n: usize,
    m: usize,
    blocks: Vec<usize>,
    indices: Vec<u32>,
    costs: Vec<f64>,
    images: Vec<f64>,
    weights: Vec<f64>,
}

impl LiftedColumns {
    pub fn from_trace(trace: &FwTrace, instance: &ProblemInstance) -> Self {
        let n = instance.n();
        let m = instance.m();
        let merged = trace.merged_atoms();
        let mut out = Self {
            n,
            m,
            blocks: Vec::with_capacity(merged.len()),
            indices: Vec::with_capacity(merged.len()),
            costs: Vec::with_capacity(merged.len()),
            images: Vec::with_capacity(merged.len() * m),
            weights: Vec::with_capacity(merged.len()),
        };
        for a in merged {
            let pool = &trace.pools[a.block];
            let j = a.index as usize;
            out.blocks.push(a.block);
            out.indices.push(a.index);
            out.costs.push(pool.cost(j));
            out.images
                .extend(instance.block(a.block).image(pool.point(j)));
            out.weights.push(a.weight);
        }
        out
    }

    /// Block owning column `j`.
    pub fn block(&self, j: usize) -> usize {
        self.blocks[j]
    }

    /// Pool index of column `j` within its block.
    pub fn pool_index(&self, j: usize) -> u32 {
        self.indices[j]
    }

    /// `Σ_j λ_j w_j`, i.e. `w^K`.
    pub fn combination(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.dim()];
        let mut col = vec![0.0; self.dim()];
        for j in 0..self.len() {
            self.column(j, &mut col);
            for (wi, c) in w.iter_mut().zip(&col) {
                *wi += self.weights[j] * c;
            }
        }
        w
    }

    fn image(&self, j: usize) -> &[f64] {
        &self.images[j * self.m..(j + 1) * self.m]
    }
}

impl ColumnSource for LiftedColumns {
    fn dim(&self) -> usize {
        1 + self.m + self.n
    }

    fn len(&self) -> usize {
        self.costs.len()
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        out.fill(0.0);
        out[0] = self.costs[j];
        out[1..1 + self.m].copy_from_slice(self.image(j));
        out[1 + self.m + self.blocks[j]] = 1.0;
    }

    fn weight(&self, j: usize) -> f64 {
        self.weights[j]
    }

    fn column_dot(&self, j: usize, r: &[f64]) -> f64 {
        let img: f64 = self
            .image(j)
            .iter()
            .zip(&r[1..1 + self.m])
            .map(|(a, b)| a * b)
            .sum();
        self.costs[j] * r[0] + img + r[1 + self.m + self.blocks[j]]
    }
}

/// Per-block convex combinations after trimming.
#[derive(Debug, Clone)]
pub struct TrimResult {
    /// For each block, `(α_l, atom)` with `Σ_l α_l = 1`.
    pub groups: Vec<Vec<(f64, Atom)>>,
    /// Number of blocks with more than one atom.
    pub nontrivial_count: usize,
    pub source: CarathMethod,
    /// `n · ‖w_approx − w^K/n‖` for approximate paths, 0 for the exact path.
    pub residual: f64,
    /// Distinct lifted columns before trimming.
    pub columns_in: usize,
    /// Budget `T` actually used by an approximate path.
    pub budget: Option<usize>,
    pub approx_status: Option<ApproxStatus>,
    pub residual_history: Vec<f64>,
}

impl TrimResult {
    pub fn n(&self) -> usize {
        self.groups.len()
    }

    pub fn entry_count(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// `Σ_i Σ_l α_l (cost, A_i y)`: the first `1 + m` coordinates of the
    /// trimmed lifted vector.
    pub fn aggregate(&self, m: usize) -> Vec<f64> {
        let mut out = vec![0.0; 1 + m];
        for g in &self.groups {
            for (a, atom) in g {
                out[0] += a * atom.cost;
                for (o, v) in out[1..].iter_mut().zip(&atom.image) {
                    *o += a * v;
                }
            }
        }
        out
    }

    pub fn summary(&self) -> TrimSummary {
        TrimSummary {
            source: self.source,
            nontrivial_count: self.nontrivial_count,
            entries: self
                .groups
                .iter()
                .flat_map(|g| {
                    g.iter().map(|(a, atom)| TrimEntry {
                        block: atom.block,
                        alpha: *a,
                        iter: atom.iter,
                        hash: format!("{:016x}", atom.hash()),
                    })
                })
                .collect(),
            residual: self.residual,
            columns_in: self.columns_in,
            budget: self.budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrimEntry {
    pub block: usize,
    pub alpha: f64,
    pub iter: usize,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrimSummary {
    pub source: CarathMethod,
    pub nontrivial_count: usize,
    pub entries: Vec<TrimEntry>,
    pub residual: f64,
    pub columns_in: usize,
    pub budget: Option<usize>,
}

/// Groups `(column, weight)` pairs by block and normalizes each group.
fn regroup(
    src: &LiftedColumns,
    trace: &FwTrace,
    instance: &ProblemInstance,
    pairs: &[(usize, f64)],
) -> Result<Vec<Vec<(f64, Atom)>>, TrimError> {
    let mut groups: Vec<Vec<(f64, Atom)>> = vec![Vec::new(); src.n];
    for &(j, w) in pairs {
        if w <= 0.0 {
            continue;
        }
        let atom = trace.atom(instance, src.block(j), src.pool_index(j))?;
        groups[src.block(j)].push((w, atom));
    }
    for g in groups.iter_mut() {
        let total: f64 = g.iter().map(|(w, _)| w).sum();
        for (w, _) in g.iter_mut() {
            *w /= total;
        }
    }
    Ok(groups)
}

fn nontrivial(groups: &[Vec<(f64, Atom)>]) -> usize {
    groups.iter().filter(|g| g.len() > 1).count()
}

/// Exact reduction to at most `n + m + 1` atoms.
pub fn trim_exact(
    trace: &FwTrace,
    instance: &ProblemInstance,
    cfg: &CarathConfig,
    seed: u64,
) -> Result<TrimResult, TrimError> {
    let src = LiftedColumns::from_trace(trace, instance);
    let w_star = src.combination();
    let (out, _) = reduce(&src, &w_star, cfg, seed)?;
    let pairs: Vec<(usize, f64)> = out
        .kept
        .iter()
        .copied()
        .zip(out.alpha.iter().copied())
        .collect();
    let groups = regroup(&src, trace, instance, &pairs)?;
    let uncovered: Vec<usize> = (0..groups.len())
        .filter(|&i| groups[i].is_empty())
        .collect();
    if !uncovered.is_empty() {
        // the block coordinates force every block in; this means the
        // reduction lost a block to round-off
        return Err(CarathError::Degenerate {
            redraws: cfg.max_redraws,
        }
        .into());
    }
    Ok(TrimResult {
        nontrivial_count: nontrivial(&groups),
        groups,
        source: CarathMethod::Exact,
        residual: 0.0,
        columns_in: src.len(),
        budget: None,
        approx_status: None,
        residual_history: Vec::new(),
    })
}

/// Approximate path with budget `cfg.t`: a convex combination of lifted
/// columns close to `w^K / n`, normalized per block.
pub fn trim_approx(
    trace: &FwTrace,
    instance: &ProblemInstance,
    method: ApproxMethod,
    cfg: &ApproxConfig,
) -> Result<TrimResult, TrimError> {
    let src = LiftedColumns::from_trace(trace, instance);
    trim_approx_on(&src, trace, instance, method, cfg)
}

fn trim_approx_on(
    src: &LiftedColumns,
    trace: &FwTrace,
    instance: &ProblemInstance,
    method: ApproxMethod,
    cfg: &ApproxConfig,
) -> Result<TrimResult, TrimError> {
    let n = instance.n();
    if cfg.t + 1 < n {
        return Err(TrimError::BudgetTooSmall {
            t: cfg.t,
            min: n - 1,
        });
    }
    let target: Vec<f64> = src.combination().iter().map(|v| v / n as f64).collect();
    let res = approx::solve(method, src, &target, cfg);
    let pairs: Vec<(usize, f64)> = res
        .indices
        .iter()
        .copied()
        .zip(res.beta.iter().copied())
        .collect();
    let groups = regroup(src, trace, instance, &pairs)?;
    let uncovered: Vec<usize> = (0..n).filter(|&i| groups[i].is_empty()).collect();
    if !uncovered.is_empty() {
        return Err(TrimError::UncoveredBlock {
            blocks: uncovered,
            t: cfg.t,
        });
    }
    Ok(TrimResult {
        nontrivial_count: nontrivial(&groups),
        groups,
        source: match method {
            ApproxMethod::Fcfw => CarathMethod::Fcfw,
            ApproxMethod::Mnp => CarathMethod::Mnp,
        },
        residual: n as f64 * res.residual,
        columns_in: src.len(),
        budget: Some(cfg.t),
        approx_status: Some(res.status),
        residual_history: res.residual_history.iter().map(|r| r * n as f64).collect(),
    })
}

/// Approximate path that doubles `T` after an uncovered block, up to `N − 1`.
pub fn trim_approx_with_retry(
    trace: &FwTrace,
    instance: &ProblemInstance,
    method: ApproxMethod,
    cfg: &ApproxConfig,
) -> Result<TrimResult, TrimError> {
    let src = LiftedColumns::from_trace(trace, instance);
    let cap = src
        .len()
        .saturating_sub(1)
        .max(instance.n().saturating_sub(1));
    let mut cfg = cfg.clone();
    cfg.t = cfg.t.max(instance.n().saturating_sub(1)).min(cap);
    loop {
        match trim_approx_on(&src, trace, instance, method, &cfg) {
            Err(TrimError::UncoveredBlock { .. }) if cfg.t < cap => {
                cfg.t = (cfg.t.max(1) * 2).min(cap);
            }
            other => return other,
        }
    }
}

/// Dispatches on `method`; approximate paths use the retry policy.
pub fn trim(
    trace: &FwTrace,
    instance: &ProblemInstance,
    method: CarathMethod,
    exact_cfg: &CarathConfig,
    approx_cfg: &ApproxConfig,
    seed: u64,
) -> Result<TrimResult, TrimError> {
    match method.approx() {
        None => trim_exact(trace, instance, exact_cfg, seed),
        Some(a) => trim_approx_with_retry(trace, instance, a, approx_cfg),
    }
}
