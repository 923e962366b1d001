//! Exact conic Carathéodory reduction.
//!
//! Given `w* = Σ_j λ_j w_j` with `λ ≥ 0` over `N` columns in `R^p`, find at
//! most `p` columns and nonnegative weights reproducing `w*`. Columns are
//! streamed: a working set of `p + 1` columns always has a nonzero null
//! vector `δ`; moving along `−δ` until a weight hits zero frees one slot for
//! the next column. Total cost is `O(N p²)` with a QR factorization of the
//! working matrix updated by Givens rotations.
//!
//! The working matrix is `W̃ = [W_S; u_S]` with a random row `u` so that
//! `W̃ δ = (0, 1)` has a nonzero solution. When `W_S` itself is rank
//! deficient `W̃` is singular and the dependency exposed by `R` is used as
//! the null vector instead.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qr_update::QrState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CarathError {
    #[error("inconsistent input: ‖Wλ − w*‖ = {residual:e} exceeds {tol:e}")]
    Inconsistent { residual: f64, tol: f64 },
    #[error("degenerate system after {redraws} random-row redraws")]
    Degenerate { redraws: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Read access to the columns of a conic combination.
pub trait ColumnSource: Sync {
    /// Column dimension `p`.
    fn dim(&self) -> usize;
    /// Number of columns `N`.
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Writes column `j` into `out` (length `p`).
    fn column(&self, j: usize, out: &mut [f64]);
    /// Conic weight `λ_j`.
    fn weight(&self, j: usize) -> f64;
    /// `⟨w_j, r⟩`; sources with structured columns override this.
    fn column_dot(&self, j: usize, r: &[f64]) -> f64 {
        let mut col = vec![0.0; self.dim()];
        self.column(j, &mut col);
        col.iter().zip(r).map(|(a, b)| a * b).sum()
    }
}

/// Explicit `p × N` input.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicInput {
    pub w: DMatrix<f64>,
    pub lam: Vec<f64>,
    pub w_star: Vec<f64>,
}

impl ConicInput {
    /// Builds the input with `w* = W λ`.
    pub fn from_combination(w: DMatrix<f64>, lam: Vec<f64>) -> Self {
        let w_star = (&w * DVector::from_column_slice(&lam))
            .iter()
            .copied()
            .collect();
        Self { w, lam, w_star }
    }
}

impl ColumnSource for ConicInput {
    fn dim(&self) -> usize {
        self.w.nrows()
    }

    fn len(&self) -> usize {
        self.w.ncols()
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        out.copy_from_slice(self.w.column(j).as_slice());
    }

    fn weight(&self, j: usize) -> f64 {
        self.lam[j]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicOutput {
    pub alpha: Vec<f64>,
    /// Indices into the input columns, ascending.
    pub kept: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CarathConfig {
    pub max_redraws: usize,
    /// Rebuild the factorization from scratch after this many updates.
    pub refactor_every: usize,
    /// Relative tolerance of the input and output consistency checks.
    pub tol: f64,
    /// Check the loop invariant after every step (`O(N p)` per step).
    pub check_invariant: bool,
}

impl Default for CarathConfig {
    fn default() -> Self {
        Self {
            max_redraws: 5,
            refactor_every: 64,
            tol: 1e-8,
            check_invariant: false,
        }
    }
}

/// Per-step diagnostics collected when `check_invariant` is on.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CarathDiagnostics {
    /// `‖W_S α + Σ_{j unseen} λ_j w_j − w*‖` after each step.
    pub invariant_residuals: Vec<f64>,
    /// Smallest weight left in the working set after each step's drop.
    pub min_weights: Vec<f64>,
    pub redraws: usize,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `Σ_j c_j w_{idx_j}` over the given columns.
fn combine(src: &dyn ColumnSource, idx: &[usize], coef: &[f64]) -> Vec<f64> {
    let p = src.dim();
    let mut out = vec![0.0; p];
    let mut col = vec![0.0; p];
    for (&j, &c) in idx.iter().zip(coef) {
        src.column(j, &mut col);
        for (o, v) in out.iter_mut().zip(&col) {
            *o += c * v;
        }
    }
    out
}

/// Working set of `≤ p + 1` columns with weights and random-row entries.
struct Working {
    p: usize,
    /// Row scaling applied to `W` inside the factorization.
    scale: Vec<f64>,
    idx: Vec<usize>,
    alpha: Vec<f64>,
    u: Vec<f64>,
    qr: QrState,
    updates: usize,
}

impl Working {
    fn scaled_column(&self, src: &dyn ColumnSource, j: usize, u: f64) -> Vec<f64> {
        let mut col = vec![0.0; self.p + 1];
        src.column(j, &mut col[..self.p]);
        for (c, s) in col.iter_mut().zip(&self.scale) {
            *c *= s;
        }
        col[self.p] = u;
        col
    }

    fn refactor(&mut self, src: &dyn ColumnSource) {
        let cols: Vec<Vec<f64>> = self
            .idx
            .iter()
            .zip(&self.u)
            .map(|(&j, &u)| self.scaled_column(src, j, u))
            .collect();
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        self.qr = QrState::from_columns(self.p + 1, &refs).expect("at most p+1 columns");
        self.updates = 0;
    }

    fn push(&mut self, src: &dyn ColumnSource, j: usize, u: f64) {
        let col = self.scaled_column(src, j, u);
        self.qr
            .insert_column(self.idx.len(), &col)
            .expect("room for one more column");
        self.idx.push(j);
        self.alpha.push(src.weight(j));
        self.u.push(u);
        self.updates += 1;
    }

    fn remove(&mut self, pos: usize) {
        self.qr.delete_column(pos).expect("valid position");
        self.idx.remove(pos);
        self.alpha.remove(pos);
        self.u.remove(pos);
        self.updates += 1;
    }

    /// Nonzero `δ` with `W_S δ = 0`, oriented to have a positive entry.
    fn null_direction(&self) -> Option<Vec<f64>> {
        let k = self.idx.len();
        let delta = match self.qr.first_small_diagonal() {
            Some(i) => self.qr.null_vector_at(i),
            None => {
                // W̃ δ = e_{p+1}, so R δ = Qᵀ e_{p+1}
                let y = self.qr.qt_column(self.p);
                self.qr.back_substitute(&y, k)
            }
        };
        if delta.iter().any(|v| !v.is_finite()) {
            return None;
        }
        if delta.iter().any(|&v| v > 0.0) {
            Some(delta)
        } else if delta.iter().any(|&v| v < 0.0) {
            Some(delta.into_iter().map(|v| -v).collect())
        } else {
            None
        }
    }

    /// `‖W_S δ‖` relative to `‖W_S‖ ‖δ‖`, in the scaled space.
    fn null_defect(&self, src: &dyn ColumnSource, delta: &[f64]) -> f64 {
        let mut acc = vec![0.0; self.p];
        let mut size = 0.0f64;
        for ((&j, &d), &u) in self.idx.iter().zip(delta).zip(&self.u) {
            let col = self.scaled_column(src, j, u);
            size = size.max(norm(&col[..self.p]));
            for (a, c) in acc.iter_mut().zip(&col[..self.p]) {
                *a += d * c;
            }
        }
        norm(&acc) / (size * norm(delta)).max(f64::MIN_POSITIVE)
    }
}

/// Runs the reduction on an explicit matrix.
pub fn exact_caratheodory(input: &ConicInput, seed: u64) -> Result<ConicOutput, CarathError> {
    reduce(input, &input.w_star, &CarathConfig::default(), seed).map(|(o, _)| o)
}

/// Reduction over any column source; also returns diagnostics.
pub fn reduce(
    src: &dyn ColumnSource,
    w_star: &[f64],
    cfg: &CarathConfig,
    seed: u64,
) -> Result<(ConicOutput, CarathDiagnostics), CarathError> {
    let p = src.dim();
    let n_cols = src.len();
    if p == 0 || n_cols == 0 || w_star.len() != p {
        return Err(CarathError::Invalid(
            "need p ≥ 1, N ≥ 1 and |w*| = p".into(),
        ));
    }
    let mut nonzero = Vec::new();
    let mut row_max = vec![0.0f64; p];
    let mut col = vec![0.0; p];
    let mut total = vec![0.0; p];
    for j in 0..n_cols {
        let lam = src.weight(j);
        if !lam.is_finite() || lam < 0.0 {
            return Err(CarathError::Invalid(format!("weight {j} is {lam}")));
        }
        src.column(j, &mut col);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(CarathError::Invalid(format!("column {j} is not finite")));
        }
        if lam > 0.0 {
            nonzero.push(j);
            for r in 0..p {
                total[r] += lam * col[r];
                row_max[r] = row_max[r].max(col[r].abs());
            }
        }
    }
    let tol = cfg.tol * (1.0 + norm(w_star));
    let residual = dist(&total, w_star);
    if residual > tol {
        return Err(CarathError::Inconsistent { residual, tol });
    }
    if nonzero.len() <= p {
        let alpha = nonzero.iter().map(|&j| src.weight(j)).collect();
        return Ok((
            ConicOutput {
                alpha,
                kept: nonzero,
            },
            CarathDiagnostics::default(),
        ));
    }
    let scale: Vec<f64> = row_max
        .iter()
        .map(|&m| if m > 0.0 { 1.0 / m } else { 1.0 })
        .collect();

    let mut diag = CarathDiagnostics::default();
    for attempt in 0..=cfg.max_redraws {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt as u64));
        match run_once(src, w_star, &nonzero, &scale, cfg, &mut rng, &mut diag) {
            Some(out) if dist(&combine(src, &out.kept, &out.alpha), w_star) <= tol => {
                return Ok((out, diag));
            }
            Some(out) => {
                if let Some(polished) = polish(src, w_star, &out) {
                    if dist(&combine(src, &polished.kept, &polished.alpha), w_star) <= tol {
                        return Ok((polished, diag));
                    }
                }
            }
            None => {}
        }
        diag.redraws += 1;
    }
    Err(CarathError::Degenerate {
        redraws: cfg.max_redraws,
    })
}

fn run_once(
    src: &dyn ColumnSource,
    w_star: &[f64],
    order: &[usize],
    scale: &[f64],
    cfg: &CarathConfig,
    rng: &mut ChaCha8Rng,
    diag: &mut CarathDiagnostics,
) -> Option<ConicOutput> {
    let p = src.dim();
    let mut ws = Working {
        p,
        scale: scale.to_vec(),
        idx: Vec::with_capacity(p + 1),
        alpha: Vec::with_capacity(p + 1),
        u: Vec::with_capacity(p + 1),
        qr: QrState::empty(p + 1),
        updates: 0,
    };
    for &j in &order[..p + 1] {
        ws.push(src, j, rng.sample(StandardNormal));
    }
    let mut next = p + 1;
    let mut local_redraws = 0;
    loop {
        if ws.updates >= cfg.refactor_every {
            ws.refactor(src);
        }
        let delta = match ws.null_direction() {
            Some(d) if ws.null_defect(src, &d) <= 1e-9 => d,
            _ => {
                // fresh random row for the current working set
                local_redraws += 1;
                diag.redraws += 1;
                if local_redraws > cfg.max_redraws {
                    return None;
                }
                for u in ws.u.iter_mut() {
                    *u = rng.sample(StandardNormal);
                }
                ws.refactor(src);
                continue;
            }
        };
        local_redraws = 0;

        // t* = min α_j/δ_j over δ_j > 0; ties to the smallest column index
        let mut best: Option<(f64, usize)> = None;
        for (pos, (&a, &d)) in ws.alpha.iter().zip(&delta).enumerate() {
            if d > 0.0 {
                let t = a / d;
                let better = match best {
                    None => true,
                    Some((bt, bp)) => t < bt || (t == bt && ws.idx[pos] < ws.idx[bp]),
                };
                if better {
                    best = Some((t, pos));
                }
            }
        }
        let (t_star, drop) = best.expect("δ has a positive entry");
        for (a, d) in ws.alpha.iter_mut().zip(&delta) {
            *a = (*a - t_star * d).max(0.0);
        }
        ws.alpha[drop] = 0.0;
        ws.remove(drop);

        if cfg.check_invariant {
            let mut acc = combine(src, &ws.idx, &ws.alpha);
            let mut col = vec![0.0; p];
            for &j in &order[next..] {
                src.column(j, &mut col);
                for (a, c) in acc.iter_mut().zip(&col) {
                    *a += src.weight(j) * c;
                }
            }
            diag.invariant_residuals.push(dist(&acc, w_star));
            diag.min_weights
                .push(ws.alpha.iter().copied().fold(f64::INFINITY, f64::min));
        }

        if next == order.len() {
            break;
        }
        ws.push(src, order[next], rng.sample(StandardNormal));
        next += 1;
    }
    let mut pairs: Vec<(usize, f64)> = ws
        .idx
        .iter()
        .copied()
        .zip(ws.alpha.iter().copied())
        .filter(|&(_, a)| a > 0.0)
        .collect();
    pairs.sort_by_key(|&(j, _)| j);
    Some(ConicOutput {
        kept: pairs.iter().map(|&(j, _)| j).collect(),
        alpha: pairs.iter().map(|&(_, a)| a).collect(),
    })
}

/// Least-squares refit of the weights on the kept columns; accepted only if
/// every weight stays nonnegative.
fn polish(src: &dyn ColumnSource, w_star: &[f64], out: &ConicOutput) -> Option<ConicOutput> {
    let p = src.dim();
    if out.kept.is_empty() {
        return None;
    }
    let mut col = vec![0.0; p];
    let w = DMatrix::from_fn(p, out.kept.len(), |_, _| 0.0);
    let mut w = w;
    for (c, &j) in out.kept.iter().enumerate() {
        src.column(j, &mut col);
        w.column_mut(c).copy_from_slice(&col);
    }
    let svd = w.svd(true, true);
    let sol = svd.solve(&DVector::from_column_slice(w_star), 1e-14).ok()?;
    if sol.iter().any(|&a| a < -1e-12 || !a.is_finite()) {
        return None;
    }
    Some(ConicOutput {
        kept: out.kept.clone(),
        alpha: sol.iter().map(|a| a.max(0.0)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_input(rng: &mut impl Rng, p: usize, n: usize) -> ConicInput {
        let w = DMatrix::from_fn(p, n, |_, _| rng.random_range(-1.0..1.0));
        let lam = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        ConicInput::from_combination(w, lam)
    }

    #[test]
    fn small_inputs_are_returned_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let input = random_input(&mut rng, 5, 4);
        let out = exact_caratheodory(&input, 0).unwrap();
        assert_eq!(out.kept, vec![0, 1, 2, 3]);
        assert_eq!(out.alpha, input.lam);
    }

    #[test]
    fn two_dimensional_example_matches_subset_enumeration() {
        let w = DMatrix::from_column_slice(2, 3, &[2.0, 0.0, 0.0, 2.0, 1.0, 1.0]);
        let input = ConicInput::from_combination(w.clone(), vec![0.5, 0.5, 1.0]);
        assert_eq!(input.w_star, vec![2.0, 2.0]);
        let out = exact_caratheodory(&input, 3).unwrap();
        assert!(out.kept.len() <= 2);
        let recon = combine(&input, &out.kept, &out.alpha);
        assert!(dist(&recon, &[2.0, 2.0]) < 1e-12);
        // every nonnegative 2-subset representation, by enumeration
        let mut valid = Vec::new();
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            let m = DMatrix::from_columns(&[w.column(a), w.column(b)]);
            if let Some(x) = m.lu().solve(&DVector::from_vec(vec![2.0, 2.0])) {
                if x.iter().all(|&v| v >= -1e-12) {
                    valid.push((a, b));
                }
            }
        }
        assert!(valid.contains(&(0, 1)));
        let support: Vec<usize> = out.kept.clone();
        assert!(support.len() == 1 || valid.iter().any(|&(a, b)| support == vec![a, b]));
    }

    #[test]
    fn random_reduction_reconstructs_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let input = random_input(&mut rng, 5, 40);
        let out = exact_caratheodory(&input, 9).unwrap();
        assert!(out.kept.len() <= 5);
        assert!(out.alpha.iter().all(|&a| a > 0.0));
        let r = dist(&combine(&input, &out.kept, &out.alpha), &input.w_star);
        assert!(r <= 1e-8 * norm(&input.w_star), "{r}");
    }

    #[test]
    fn deterministic_under_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let input = random_input(&mut rng, 6, 50);
        assert_eq!(
            exact_caratheodory(&input, 4).unwrap(),
            exact_caratheodory(&input, 4).unwrap()
        );
    }

    #[test]
    fn loop_invariant_holds_every_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let input = random_input(&mut rng, 4, 30);
        let cfg = CarathConfig {
            check_invariant: true,
            ..Default::default()
        };
        let (_, diag) = reduce(&input, &input.w_star, &cfg, 1).unwrap();
        assert_eq!(diag.invariant_residuals.len(), 30 - 4);
        assert!(diag.invariant_residuals.iter().all(|&r| r < 1e-10));
        assert!(diag.min_weights.iter().all(|&a| a >= 0.0));
    }

    #[test]
    fn rank_deficient_columns_are_handled() {
        // all columns in a 2-dimensional subspace of R^5
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let basis = DMatrix::from_fn(5, 2, |_, _| rng.random_range(-1.0..1.0));
        let coeffs = DMatrix::from_fn(2, 30, |_, _| rng.random_range(-1.0..1.0));
        let w = basis * coeffs;
        let lam = (0..30).map(|_| rng.random_range(0.0..1.0)).collect();
        let input = ConicInput::from_combination(w, lam);
        let out = exact_caratheodory(&input, 2).unwrap();
        assert!(out.kept.len() <= 5);
        let r = dist(&combine(&input, &out.kept, &out.alpha), &input.w_star);
        assert!(r <= 1e-8 * (1.0 + norm(&input.w_star)));
    }

    #[test]
    fn duplicate_columns_collapse() {
        let w = DMatrix::from_fn(3, 12, |r, _| (r + 1) as f64);
        let input = ConicInput::from_combination(w, vec![0.25; 12]);
        let out = exact_caratheodory(&input, 0).unwrap();
        assert!(out.kept.len() <= 3);
        let r = dist(&combine(&input, &out.kept, &out.alpha), &input.w_star);
        assert!(r < 1e-12);
    }

    #[test]
    fn inconsistent_input_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut input = random_input(&mut rng, 3, 10);
        input.w_star[0] += 1.0;
        assert!(matches!(
            exact_caratheodory(&input, 0),
            Err(CarathError::Inconsistent { .. })
        ));
    }
}
