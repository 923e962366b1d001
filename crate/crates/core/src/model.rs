//! Problem representation shared by every stage.
//!
//! A [`ProblemInstance`] is a separable problem
//!
//! ```text
//!   minimize  Σ f_i(x_i)   subject to  Σ A_i x_i ≤ b,  x_i ∈ X_i
//! ```
//!
//! where each block is described by a coupling matrix `A_i` and a
//! [`BlockOracle`] answering value, conjugate and linear-minimization queries
//! for `f_i`. Nothing here assumes convexity of `f_i` or of `X_i`.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::iter::Sum;
use std::ops::Add;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Extended real value: finite or `+∞` (outside the block domain).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExtReal {
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::PosInf => None,
        }
    }

    /// Lossy conversion for reporting; `+∞` maps to `f64::INFINITY`.
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl Add for ExtReal {
    type Output = ExtReal;

    fn add(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::PosInf,
        }
    }
}

impl Sum for ExtReal {
    fn sum<I: Iterator<Item = ExtReal>>(iter: I) -> ExtReal {
        iter.fold(ExtReal::Finite(0.0), Add::add)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInf => write!(f, "+inf"),
        }
    }
}

/// Global numerical tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Absolute feasibility tolerance on constraint rows.
    pub tol_feas: f64,
    /// Relative tolerance for value comparisons.
    pub tol_rel: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_feas: 1e-8,
            tol_rel: 1e-6,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite input")]
    NonFinite,
    #[error("infeasible block: {0}")]
    Infeasible(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("non-finite input")]
    NonFinite,
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("block {block}: {source}")]
    Oracle {
        block: usize,
        #[source]
        source: OracleError,
    },
    #[error("block {block}: oracle returned a point outside its domain")]
    OutsideDomain { block: usize },
}

/// Result of a conjugate query: `f*(y)` and a maximizer of `yᵀx − f(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conjugate {
    pub value: f64,
    pub argmax: Vec<f64>,
}

/// Serializable description of a block's objective, used by the instance
/// file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDescriptor {
    pub app: String,
    pub params: serde_json::Value,
}

/// Capability contract for one block `f_i` with domain `X_i`.
///
/// `conjugate` and `linmin` must return members of `X_i` (extreme points of
/// the lifted set, not merely points of `conv X_i`).
pub trait BlockOracle: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    /// `f_i(x)`, or `+∞` when `x ∉ X_i`.
    fn value(&self, x: &[f64]) -> ExtReal;

    /// `f_i*(y) = sup_x yᵀx − f_i(x)` with an attaining point.
    fn conjugate(&self, y: &[f64]) -> Result<Conjugate, OracleError>;

    /// Minimizer of `cᵀx` over `conv X_i`, returned as a member of `X_i`.
    fn linmin(&self, c: &[f64]) -> Result<Vec<f64>, OracleError>;

    /// A point `x̂ ∈ X_i` with `A_i x̂ ≤ A_i x`, when the application admits one.
    fn repair(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Upper bound on `sup f_i − inf f_i` over `X_i`.
    fn gamma_bound(&self) -> Option<f64> {
        None
    }

    fn descriptor(&self) -> Option<BlockDescriptor> {
        None
    }
}

/// One block of the coupling: `A_i` (m × d_i) and its oracle.
#[derive(Debug, Clone)]
pub struct BlockSpec {
    pub a: DMatrix<f64>,
    pub oracle: Arc<dyn BlockOracle>,
}

impl BlockSpec {
    pub fn new(a: DMatrix<f64>, oracle: Arc<dyn BlockOracle>) -> Self {
        Self { a, oracle }
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    /// `A_i x`.
    pub fn image(&self, x: &[f64]) -> Vec<f64> {
        let (m, d) = self.a.shape();
        let mut out = vec![0.0; m];
        for j in 0..d {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for (r, o) in out.iter_mut().enumerate() {
                *o += self.a[(r, j)] * xj;
            }
        }
        out
    }

    /// `A_iᵀ g`.
    pub fn adjoint(&self, g: &[f64]) -> Vec<f64> {
        let (m, d) = self.a.shape();
        (0..d)
            .map(|j| (0..m).map(|r| self.a[(r, j)] * g[r]).sum())
            .collect()
    }
}

/// Separable problem with coupling `Σ A_i x_i ≤ b`.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    blocks: Vec<BlockSpec>,
    b: Vec<f64>,
}

impl ProblemInstance {
    pub fn new(blocks: Vec<BlockSpec>, b: Vec<f64>) -> Result<Self, ModelError> {
        if blocks.is_empty() {
            return Err(ModelError::Invalid("at least one block required".into()));
        }
        if b.is_empty() {
            return Err(ModelError::Invalid(
                "at least one constraint row required".into(),
            ));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        for (i, blk) in blocks.iter().enumerate() {
            let (rows, cols) = blk.a.shape();
            if rows != b.len() {
                return Err(ModelError::Invalid(format!(
                    "block {i}: A has {rows} rows, expected {}",
                    b.len()
                )));
            }
            if cols == 0 {
                return Err(ModelError::Invalid(format!("block {i}: A has no columns")));
            }
            if cols != blk.oracle.dim() {
                return Err(ModelError::Invalid(format!(
                    "block {i}: A has {cols} columns but the oracle reports dimension {}",
                    blk.oracle.dim()
                )));
            }
            if blk.a.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite);
            }
        }
        Ok(Self { blocks, b })
    }

    pub fn n(&self) -> usize {
        self.blocks.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &BlockSpec {
        &self.blocks[i]
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Same blocks, different right-hand side (used for perturbed solves).
    pub fn with_rhs(&self, b: Vec<f64>) -> Result<Self, ModelError> {
        if b.len() != self.m() {
            return Err(ModelError::Invalid(
                "right-hand side length mismatch".into(),
            ));
        }
        Self::new(self.blocks.clone(), b)
    }

    /// `max_i γ(f_i)` when every oracle provides a bound.
    pub fn max_gamma(&self) -> Option<f64> {
        self.blocks
            .iter()
            .map(|b| b.oracle.gamma_bound())
            .try_fold(0.0f64, |acc, g| g.map(|g| acc.max(g)))
    }
}

/// Below this many blocks, per-block work runs on the calling thread.
pub(crate) const PARALLEL_MIN_BLOCKS: usize = 64;

/// Applies `f` to every block index, in parallel for large instances.
/// Results come back in block order.
pub(crate) fn map_blocks<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    if n >= PARALLEL_MIN_BLOCKS {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

/// `‖v‖₊ = sqrt(Σ max(v_j, 0)²)`.
pub fn plus_norm(v: &[f64]) -> Result<f64, ModelError> {
    let mut acc = 0.0;
    for &x in v {
        if !x.is_finite() {
            return Err(ModelError::NonFinite);
        }
        if x > 0.0 {
            acc += x * x;
        }
    }
    Ok(acc.sqrt())
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Objective and signed constraint residual of a candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: ExtReal,
    /// `Σ A_i x_i − b`.
    pub violation: Vec<f64>,
    /// Blocks whose point lies outside `X_i`.
    pub infeasible_blocks: Vec<usize>,
}

impl Evaluation {
    pub fn violation_plus(&self) -> f64 {
        plus_norm(&self.violation).unwrap_or(f64::INFINITY)
    }
}

pub fn evaluate(instance: &ProblemInstance, x: &[Vec<f64>]) -> Result<Evaluation, ModelError> {
    if x.len() != instance.n() {
        return Err(ModelError::Invalid(format!(
            "expected {} block points, got {}",
            instance.n(),
            x.len()
        )));
    }
    let mut violation: Vec<f64> = instance.b().iter().map(|v| -v).collect();
    let mut objective = ExtReal::Finite(0.0);
    let mut infeasible_blocks = Vec::new();
    for (i, (blk, xi)) in instance.blocks().iter().zip(x).enumerate() {
        if xi.len() != blk.dim() {
            return Err(ModelError::Oracle {
                block: i,
                source: OracleError::Dimension {
                    expected: blk.dim(),
                    got: xi.len(),
                },
            });
        }
        let v = blk.oracle.value(xi);
        if !v.is_finite() {
            infeasible_blocks.push(i);
        }
        objective = objective + v;
        for (acc, img) in violation.iter_mut().zip(blk.image(xi)) {
            *acc += img;
        }
    }
    Ok(Evaluation {
        objective,
        violation,
        infeasible_blocks,
    })
}

/// Content hash of a point, used to merge repeated atoms.
pub fn point_hash(point: &[f64]) -> u64 {
    let mut h = DefaultHasher::new();
    point.len().hash(&mut h);
    for v in point {
        // -0.0 and 0.0 hash alike
        let v = if *v == 0.0 { 0.0f64 } else { *v };
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Extreme-point record: block index, producing iteration, point, cost and
/// constraint image.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub block: usize,
    pub iter: usize,
    pub point: Vec<f64>,
    pub cost: f64,
    pub image: Vec<f64>,
}

impl Atom {
    /// Evaluates cost and image through the instance; rejects points outside
    /// the block domain.
    pub fn new(
        instance: &ProblemInstance,
        block: usize,
        iter: usize,
        point: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let spec = instance.block(block);
        let cost = spec
            .oracle
            .value(&point)
            .finite()
            .ok_or(ModelError::OutsideDomain { block })?;
        let image = spec.image(&point);
        Ok(Self {
            block,
            iter,
            point,
            cost,
            image,
        })
    }

    pub fn hash(&self) -> u64 {
        point_hash(&self.point)
    }
}

/// Nonnegative combination of atoms.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightedAtoms {
    pub entries: Vec<(f64, Atom)>,
}

impl WeightedAtoms {
    /// `Σ w_l (cost_l, image_l)` as a vector of length `1 + m`.
    pub fn aggregate(&self, m: usize) -> Vec<f64> {
        let mut out = vec![0.0; 1 + m];
        for (w, atom) in &self.entries {
            out[0] += w * atom.cost;
            for (o, v) in out[1..].iter_mut().zip(&atom.image) {
                *o += w * v;
            }
        }
        out
    }

    pub fn total_weight(&self) -> f64 {
        self.entries.iter().map(|(w, _)| w).sum()
    }
}
