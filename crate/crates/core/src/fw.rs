//! Stage 1: Frank-Wolfe on `½‖z − z*‖₊²` over the Minkowski sum of the
//! blocks' lifted sets, with `z* = (v*, b)`.
//!
//! Each iterate is a convex combination of "rounds"; a round holds one atom
//! per block. Atoms are stored once per block and referenced by index, so
//! repeated oracle answers cost no extra memory and merge naturally when the
//! combination is lifted for trimming.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::model::{
    dot, map_blocks, plus_norm, point_hash, Atom, ModelError, OracleError, ProblemInstance,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FwStepRule {
    /// `η_k = 2/(k+2)`.
    Harmonic,
    /// Exact line search of `½‖z + η(s − z) − z*‖₊²` over `η ∈ [0, 1]`.
    Exact,
    /// `min(1, vᵀ(z−s)/‖z−s‖²)` with `v = (z − z*)₊`: minimizer of a
    /// quadratic upper bound. Never increases the residual but can be far
    /// shorter than the exact step when some coordinates sit below target.
    Majorant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FwConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub step_rule: FwStepRule,
    /// Exit once `‖z − z*‖₊ ≤ stop_tol · (1 + ‖z*‖)`.
    pub stop_tol: f64,
    /// Round weights below this are dropped.
    pub prune_tol: f64,
}

impl Default for FwConfig {
    fn default() -> Self {
        Self {
            k: 10_000,
            step_rule: FwStepRule::Exact,
            stop_tol: 1e-12,
            prune_tol: 1e-14,
        }
    }
}

/// `(α, g) = ((z₁ − v*)₊, (z_{2:} − b)₊)`.
pub fn fw_gradient(z: &[f64], z_star: &[f64]) -> (f64, Vec<f64>) {
    let alpha = (z[0] - z_star[0]).max(0.0);
    let g = z[1..]
        .iter()
        .zip(&z_star[1..])
        .map(|(a, b)| (a - b).max(0.0))
        .collect();
    (alpha, g)
}

/// Linear minimization over the lifted sum: one atom per block and their
/// aggregate `s = Σ_i (cost_i, image_i)`.
///
/// With `α > 0` block `i` answers with the conjugate maximizer at
/// `−A_iᵀg/α`; with `α = 0` it minimizes `(A_iᵀg)ᵀx` over `conv X_i`.
pub fn lmo(
    instance: &ProblemInstance,
    alpha: f64,
    g: &[f64],
    iter: usize,
) -> Result<(Vec<Atom>, Vec<f64>), ModelError> {
    if alpha < 0.0 || !alpha.is_finite() || g.len() != instance.m() {
        return Err(ModelError::Invalid(
            "lmo direction must be (α ≥ 0, g ∈ R^m)".into(),
        ));
    }
    let atoms = map_blocks(instance.n(), |i| {
        let blk = instance.block(i);
        let dir = blk.adjoint(g);
        let point = if alpha > 0.0 {
            let y: Vec<f64> = dir.iter().map(|v| -v / alpha).collect();
            blk.oracle.conjugate(&y).map(|c| c.argmax)
        } else {
            blk.oracle.linmin(&dir)
        }
        .map_err(|source| ModelError::Oracle { block: i, source })?;
        Atom::new(instance, i, iter, point)
    });
    let mut s = vec![0.0; 1 + instance.m()];
    let mut out = Vec::with_capacity(instance.n());
    for atom in atoms {
        let atom = atom?;
        s[0] += atom.cost;
        for (o, v) in s[1..].iter_mut().zip(&atom.image) {
            *o += v;
        }
        out.push(atom);
    }
    Ok((out, s))
}

/// Distinct atoms of one block, stored contiguously.
#[derive(Debug, Clone, Default)]
pub struct BlockPool {
    dim: usize,
    points: Vec<f64>,
    costs: Vec<f64>,
    first_iter: Vec<usize>,
    lookup: HashMap<u64, Vec<u32>>,
}

impl BlockPool {
    fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Default::default()
        }
    }

    fn insert(&mut self, atom: &Atom) -> u32 {
        let candidates = self.lookup.entry(point_hash(&atom.point)).or_default();
        for &j in candidates.iter() {
            let start = j as usize * self.dim;
            if self.points[start..start + self.dim] == atom.point[..] {
                return j;
            }
        }
        let j = self.costs.len() as u32;
        candidates.push(j);
        self.points.extend_from_slice(&atom.point);
        self.costs.push(atom.cost);
        self.first_iter.push(atom.iter);
        j
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.points[j * self.dim..(j + 1) * self.dim]
    }

    pub fn cost(&self, j: usize) -> f64 {
        self.costs[j]
    }

    pub fn first_iter(&self, j: usize) -> usize {
        self.first_iter[j]
    }
}

/// One Frank-Wolfe vertex `s^k`: a weight and one atom index per block.
#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub iter: usize,
    pub weight: f64,
    pub atoms: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FwStop {
    Budget,
    Converged,
    /// Line search returned zero or `s^k` coincides with `z^k`.
    Stationary,
}

/// Merged weight of one distinct atom across all surviving rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergedAtom {
    pub block: usize,
    pub index: u32,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct FwTrace {
    pub z_star: Vec<f64>,
    pub z_final: Vec<f64>,
    pub rounds: Vec<Round>,
    pub pools: Vec<BlockPool>,
    /// `‖z^k − z*‖₊` for `k = 0, 1, …`.
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub stop: FwStop,
}

impl FwTrace {
    pub fn n(&self) -> usize {
        self.pools.len()
    }

    pub fn m(&self) -> usize {
        self.z_star.len() - 1
    }

    pub fn weights(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.weight).collect()
    }

    pub fn residual(&self) -> f64 {
        *self
            .residual_history
            .last()
            .expect("history starts with z⁰")
    }

    /// Atom `j` of block `i`, re-evaluated through the instance.
    pub fn atom(
        &self,
        instance: &ProblemInstance,
        block: usize,
        j: u32,
    ) -> Result<Atom, ModelError> {
        let pool = &self.pools[block];
        let j = j as usize;
        Atom::new(instance, block, pool.first_iter(j), pool.point(j).to_vec())
    }

    /// `Σ_k γ_k Σ_i (cost, image)` recomputed from the stored atoms.
    pub fn reaggregate(&self, instance: &ProblemInstance) -> Vec<f64> {
        let mut out = vec![0.0; 1 + self.m()];
        for merged in self.merged_atoms() {
            let pool = &self.pools[merged.block];
            let j = merged.index as usize;
            out[0] += merged.weight * pool.cost(j);
            let image = instance.block(merged.block).image(pool.point(j));
            for (o, v) in out[1..].iter_mut().zip(image) {
                *o += merged.weight * v;
            }
        }
        out
    }

    /// Distinct atoms with summed round weights, grouped by block in block
    /// order and by first appearance within a block.
    pub fn merged_atoms(&self) -> Vec<MergedAtom> {
        let mut per_block: Vec<Vec<f64>> = self.pools.iter().map(|p| vec![0.0; p.len()]).collect();
        for r in &self.rounds {
            for (i, &j) in r.atoms.iter().enumerate() {
                per_block[i][j as usize] += r.weight;
            }
        }
        per_block
            .into_iter()
            .enumerate()
            .flat_map(|(block, w)| {
                w.into_iter()
                    .enumerate()
                    .filter(|(_, w)| *w > 0.0)
                    .map(move |(j, weight)| MergedAtom {
                        block,
                        index: j as u32,
                        weight,
                    })
            })
            .collect()
    }
}

/// Resumable Frank-Wolfe run.
#[derive(Debug)]
pub struct FwState<'a> {
    instance: &'a ProblemInstance,
    cfg: FwConfig,
    z_star: Vec<f64>,
    z: Vec<f64>,
    rounds: Vec<Round>,
    pools: Vec<BlockPool>,
    residuals: Vec<f64>,
    k: usize,
    stop: Option<FwStop>,
}

impl<'a> FwState<'a> {
    /// Starts from the unconstrained block minimizers (conjugate at 0).
    pub fn new(
        instance: &'a ProblemInstance,
        v_star: f64,
        cfg: &FwConfig,
    ) -> Result<Self, ModelError> {
        Self::with_target(instance, v_star, instance.b(), cfg)
    }

    /// Same, with the constraint part of the target replaced by `rhs`.
    pub fn with_target(
        instance: &'a ProblemInstance,
        v_star: f64,
        rhs: &[f64],
        cfg: &FwConfig,
    ) -> Result<Self, ModelError> {
        if !v_star.is_finite() || rhs.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        if rhs.len() != instance.m() {
            return Err(ModelError::Invalid("target length mismatch".into()));
        }
        let mut z_star = Vec::with_capacity(1 + rhs.len());
        z_star.push(v_star);
        z_star.extend_from_slice(rhs);

        let atoms = map_blocks(instance.n(), |i| {
            let blk = instance.block(i);
            let start = blk
                .oracle
                .conjugate(&vec![0.0; blk.dim()])
                .map_err(|source| ModelError::Oracle { block: i, source })?;
            Atom::new(instance, i, 0, start.argmax)
        });
        let mut pools: Vec<BlockPool> = instance
            .blocks()
            .iter()
            .map(|b| BlockPool::new(b.dim()))
            .collect();
        let mut z = vec![0.0; z_star.len()];
        let mut first = Vec::with_capacity(instance.n());
        for (i, atom) in atoms.into_iter().enumerate() {
            let atom = atom?;
            z[0] += atom.cost;
            for (o, v) in z[1..].iter_mut().zip(&atom.image) {
                *o += v;
            }
            first.push(pools[i].insert(&atom));
        }
        let residual = residual(&z, &z_star)?;
        let mut state = Self {
            instance,
            cfg: cfg.clone(),
            z_star,
            z,
            rounds: vec![Round {
                iter: 0,
                weight: 1.0,
                atoms: first,
            }],
            pools,
            residuals: vec![residual],
            k: 0,
            stop: None,
        };
        state.check_converged();
        Ok(state)
    }

    fn check_converged(&mut self) {
        let scale = 1.0 + crate::model::norm2(&self.z_star);
        if self.residual() <= self.cfg.stop_tol * scale {
            self.stop = Some(FwStop::Converged);
        }
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn iterations(&self) -> usize {
        self.k
    }

    pub fn residual(&self) -> f64 {
        *self.residuals.last().expect("nonempty")
    }

    pub fn is_done(&self) -> bool {
        self.stop.is_some() || self.k >= self.cfg.k
    }

    /// One Frank-Wolfe iteration. Returns `false` once the run is over.
    pub fn step(&mut self) -> Result<bool, ModelError> {
        if self.is_done() {
            return Ok(false);
        }
        let (alpha, g) = fw_gradient(&self.z, &self.z_star);
        let (atoms, s) = lmo(self.instance, alpha, &g, self.k + 1)?;
        let diff: Vec<f64> = self.z.iter().zip(&s).map(|(a, b)| a - b).collect();
        let diff_sq = dot(&diff, &diff);
        let eta = if diff_sq < 1e-16 {
            None
        } else {
            match self.cfg.step_rule {
                FwStepRule::Harmonic => Some(2.0 / (self.k as f64 + 2.0)),
                FwStepRule::Exact => {
                    let eta = line_search(&self.z, &s, &self.z_star);
                    (eta > 0.0).then_some(eta)
                }
                FwStepRule::Majorant => {
                    let mut grad = Vec::with_capacity(self.z.len());
                    grad.push(alpha);
                    grad.extend_from_slice(&g);
                    let eta = majorant_step(dot(&grad, &diff), diff_sq);
                    (eta > 0.0).then_some(eta)
                }
            }
        };
        let Some(eta) = eta else {
            self.stop = Some(FwStop::Stationary);
            return Ok(false);
        };

        self.k += 1;
        for (zj, sj) in self.z.iter_mut().zip(&s) {
            *zj = (1.0 - eta) * *zj + eta * sj;
        }
        let indices: Vec<u32> = atoms
            .iter()
            .enumerate()
            .map(|(i, a)| self.pools[i].insert(a))
            .collect();
        for r in &mut self.rounds {
            r.weight *= 1.0 - eta;
        }
        self.rounds.push(Round {
            iter: self.k,
            weight: eta,
            atoms: indices,
        });
        let tol = self.cfg.prune_tol;
        self.rounds.retain(|r| r.weight >= tol);
        let total: f64 = self.rounds.iter().map(|r| r.weight).sum();
        if (total - 1.0).abs() > 0.0 {
            for r in &mut self.rounds {
                r.weight /= total;
            }
        }
        let res = residual(&self.z, &self.z_star)?;
        self.residuals.push(res);
        self.check_converged();
        Ok(!self.is_done())
    }

    pub fn run(&mut self) -> Result<(), ModelError> {
        while self.step()? {}
        Ok(())
    }

    /// Snapshot of the current combination.
    pub fn trace(&self) -> FwTrace {
        FwTrace {
            z_star: self.z_star.clone(),
            z_final: self.z.clone(),
            rounds: self.rounds.clone(),
            pools: self.pools.clone(),
            residual_history: self.residuals.clone(),
            iterations: self.k,
            stop: self.stop.unwrap_or(FwStop::Budget),
        }
    }

    pub fn into_trace(self) -> FwTrace {
        FwTrace {
            z_star: self.z_star,
            z_final: self.z,
            rounds: self.rounds,
            pools: self.pools,
            residual_history: self.residuals,
            iterations: self.k,
            stop: self.stop.unwrap_or(FwStop::Budget),
        }
    }
}

fn residual(z: &[f64], z_star: &[f64]) -> Result<f64, ModelError> {
    let d: Vec<f64> = z.iter().zip(z_star).map(|(a, b)| a - b).collect();
    plus_norm(&d)
}

/// `min(1, vᵀ(z−s)/‖z−s‖²)` with `v = (z − z*)₊`: the minimizer of the
/// quadratic majorant `½‖v + η(s−z)‖²` of the residual along the segment,
/// so the residual never increases.
fn majorant_step(slope: f64, diff_sq: f64) -> f64 {
    (slope / diff_sq).clamp(0.0, 1.0)
}

/// Minimizer over `[0, 1]` of `φ(η) = ½ Σ_j (d_j + η e_j)₊²` with
/// `d = z − z*`, `e = s − z`. `φ'` is nondecreasing and piecewise linear
/// with kinks at `−d_j / e_j`; the root is found segment by segment.
fn line_search(z: &[f64], s: &[f64], z_star: &[f64]) -> f64 {
    let d: Vec<f64> = z.iter().zip(z_star).map(|(a, b)| a - b).collect();
    let e: Vec<f64> = s.iter().zip(z).map(|(a, b)| a - b).collect();
    let slope = |eta: f64| -> f64 {
        d.iter()
            .zip(&e)
            .map(|(dj, ej)| ej * (dj + eta * ej).max(0.0))
            .sum()
    };
    if slope(0.0) >= 0.0 {
        return 0.0;
    }
    let mut knots: Vec<f64> = d
        .iter()
        .zip(&e)
        .filter(|(_, ej)| **ej != 0.0)
        .map(|(dj, ej)| -dj / ej)
        .filter(|t| *t > 0.0 && *t < 1.0)
        .collect();
    knots.push(1.0);
    knots.sort_by(f64::total_cmp);
    let mut lo = 0.0;
    for hi in knots {
        if slope(hi) >= 0.0 {
            // active set is fixed on (lo, hi): φ' = a + bη
            let mid = 0.5 * (lo + hi);
            let (mut a, mut b) = (0.0, 0.0);
            for (dj, ej) in d.iter().zip(&e) {
                if dj + mid * ej > 0.0 {
                    a += ej * dj;
                    b += ej * ej;
                }
            }
            return if b > 0.0 { (-a / b).clamp(lo, hi) } else { hi };
        }
        lo = hi;
    }
    1.0
}

/// Runs stage 1 to completion.
pub fn run_stage1(
    instance: &ProblemInstance,
    v_star: f64,
    cfg: &FwConfig,
) -> Result<FwTrace, ModelError> {
    let mut st = FwState::new(instance, v_star, cfg)?;
    st.run()?;
    Ok(st.into_trace())
}

/// Sampled lower estimate of the diameter of the lifted sum: the largest
/// pairwise distance among LMO outputs at `samples` random directions.
pub fn sample_diameter(
    instance: &ProblemInstance,
    samples: usize,
    seed: u64,
) -> Result<f64, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = instance.m();
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(samples + 2);
    // the start point and the pure objective direction
    points.push(lmo(instance, 1.0, &vec![0.0; m], 0)?.1);
    for k in 0..samples {
        let g: Vec<f64> = (0..m)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let alpha = if k % 2 == 0 {
            0.0
        } else {
            let scale: f64 = rng.random_range(-3.0..3.0);
            rng.random_range(0.0..1.0f64).max(1e-3) * 10f64.powf(scale)
        };
        match lmo_signed(instance, alpha, &g) {
            Ok(s) => points.push(s),
            Err(ModelError::Oracle {
                source: OracleError::Infeasible(_),
                ..
            }) => continue,
            Err(e) => return Err(e),
        }
    }
    let mut best = 0.0f64;
    for a in 0..points.len() {
        for b in a + 1..points.len() {
            let d: f64 = points[a]
                .iter()
                .zip(&points[b])
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            best = best.max(d);
        }
    }
    Ok(best.sqrt())
}

/// LMO over the lifted sum for any `g` (not only `g ≥ 0`).
fn lmo_signed(instance: &ProblemInstance, alpha: f64, g: &[f64]) -> Result<Vec<f64>, ModelError> {
    lmo(instance, alpha, g, 0).map(|(_, s)| s)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::apps::{quadbox, uc};
    use crate::dual::{solve_dual, DualConfig};
    use crate::model::BlockSpec;

    fn square_instance(b: f64) -> ProblemInstance {
        ProblemInstance::new(
            vec![BlockSpec::new(
                DMatrix::from_element(1, 1, 1.0),
                Arc::new(quadbox::square_on_unit_interval()),
            )],
            vec![b],
        )
        .unwrap()
    }

    #[test]
    fn gradient_examples() {
        let zs = [1.0, 2.0, 3.0];
        assert_eq!(fw_gradient(&zs, &zs), (0.0, vec![0.0, 0.0]));
        assert_eq!(fw_gradient(&[2.0, 3.0, 4.0], &zs), (1.0, vec![1.0, 1.0]));
        assert_eq!(fw_gradient(&[0.0, 1.0, 2.0], &zs), (0.0, vec![0.0, 0.0]));
    }

    #[test]
    fn lmo_matches_grid_on_square() {
        let inst = square_instance(0.0);
        let (atoms, s) = lmo(&inst, 2.0, &[1.0], 1).unwrap();
        // argmin x² + x/2 on a 1e-4 grid
        let grid = (0..=20_000)
            .map(|k| -1.0 + k as f64 * 1e-4)
            .min_by(|a, b| (a * a + a / 2.0).total_cmp(&(b * b + b / 2.0)))
            .unwrap();
        assert!((atoms[0].point[0] - grid).abs() < 1e-4);
        assert!((atoms[0].point[0] + 0.25).abs() < 1e-12);
        assert!((s[0] - 0.0625).abs() < 1e-12);
    }

    #[test]
    fn lmo_objective_direction_minimizes_blocks() {
        let inst = uc::generate(4, 3, 1).unwrap();
        let (atoms, s) = lmo(&inst, 1.0, &[0.0; 3], 0).unwrap();
        assert!(atoms.iter().all(|a| a.cost == 0.0));
        assert_eq!(s, vec![0.0; 4]);
        // pure linear direction: maximize output on row 1
        let (atoms, _) = lmo(&inst, 0.0, &[1.0, 0.0, 0.0], 0).unwrap();
        for (a, blk) in atoms.iter().zip(inst.blocks()) {
            let g_max = blk.oracle.linmin(&[0.0, 0.0, 0.0, -1.0, 0.0, 0.0]).unwrap()[3];
            assert_eq!(a.point[3], g_max);
        }
    }

    #[test]
    fn zero_iterations_returns_start() {
        let inst = uc::generate(5, 3, 2).unwrap();
        let cfg = FwConfig {
            k: 0,
            ..Default::default()
        };
        let t = run_stage1(&inst, 100.0, &cfg).unwrap();
        assert_eq!(t.weights(), vec![1.0]);
        let (_, s) = lmo(&inst, 1.0, &[0.0; 3], 0).unwrap();
        assert_eq!(t.z_final, s);
    }

    #[test]
    fn inflated_rhs_exits_immediately() {
        let inst = square_instance(10.0);
        let t = run_stage1(&inst, 1.0, &FwConfig::default()).unwrap();
        assert_eq!(t.iterations, 0);
        assert_eq!(t.residual_history, vec![0.0]);
        assert_eq!(t.stop, FwStop::Converged);
    }

    #[test]
    fn exact_steps_never_increase_residual() {
        let inst = uc::generate(10, 4, 3).unwrap();
        let v = solve_dual(&inst, &DualConfig::default()).unwrap().v_star;
        let cfg = FwConfig {
            k: 300,
            ..Default::default()
        };
        let t = run_stage1(&inst, v, &cfg).unwrap();
        for w in t.residual_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{} > {}", w[1], w[0]);
        }
    }

    #[test]
    fn weights_and_reaggregation() {
        let inst = uc::generate(8, 4, 4).unwrap();
        let v = solve_dual(&inst, &DualConfig::default()).unwrap().v_star;
        for rule in [
            FwStepRule::Harmonic,
            FwStepRule::Exact,
            FwStepRule::Majorant,
        ] {
            let cfg = FwConfig {
                k: 200,
                step_rule: rule,
                ..Default::default()
            };
            let t = run_stage1(&inst, v, &cfg).unwrap();
            let total: f64 = t.weights().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            let re = t.reaggregate(&inst);
            let scale = crate::model::norm2(&t.z_final);
            for (a, b) in re.iter().zip(&t.z_final) {
                assert!((a - b).abs() <= 1e-8 * scale);
            }
        }
    }

    #[test]
    fn atoms_are_consistent_with_oracles() {
        let inst = uc::generate(6, 3, 5).unwrap();
        let t = run_stage1(
            &inst,
            1e3,
            &FwConfig {
                k: 50,
                ..Default::default()
            },
        )
        .unwrap();
        for (i, pool) in t.pools.iter().enumerate() {
            for j in 0..pool.len() {
                let v = inst.block(i).oracle.value(pool.point(j));
                assert_eq!(v.finite(), Some(pool.cost(j)));
            }
        }
    }

    #[test]
    fn harmonic_rate_envelope_on_convex_instance() {
        let inst = quadbox::generate(20, 4, 9).unwrap();
        let v = solve_dual(&inst, &DualConfig::default()).unwrap().v_star;
        let d = sample_diameter(&inst, 142, 1).unwrap();
        let t = run_stage1(
            &inst,
            v,
            &FwConfig {
                k: 1000,
                step_rule: FwStepRule::Harmonic,
                ..Default::default()
            },
        )
        .unwrap();
        for k in [10usize, 100, 1000] {
            let r = t.residual_history[k.min(t.residual_history.len() - 1)];
            assert!(r * r * (k as f64 + 1.0) <= 4.0 * d * d, "k={k}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn exact_step_never_increases_residual(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let s: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let t: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (a, g) = fw_gradient(&z, &t);
            let mut grad = vec![a];
            grad.extend(g);
            let diff: Vec<f64> = z.iter().zip(&s).map(|(x, y)| x - y).collect();
            let eta = majorant_step(dot(&grad, &diff), dot(&diff, &diff));
            prop_assert!((0.0..=1.0).contains(&eta));
            let phi = |e: f64| {
                let p: Vec<f64> = (0..4).map(|j| z[j] + e * (s[j] - z[j]) - t[j]).collect();
                plus_norm(&p).unwrap()
            };
            prop_assert!(phi(eta) <= phi(0.0) + 1e-12);
        }

        #[test]
        fn line_search_matches_grid_minimum(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let s: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let t: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let phi = |e: f64| {
                let p: Vec<f64> = (0..5).map(|j| z[j] + e * (s[j] - z[j]) - t[j]).collect();
                let r = plus_norm(&p).unwrap();
                r * r
            };
            let eta = line_search(&z, &s, &t);
            prop_assert!((0.0..=1.0).contains(&eta));
            let grid = (0..=10_000).map(|k| phi(k as f64 / 1e4)).fold(f64::INFINITY, f64::min);
            prop_assert!(phi(eta) <= grid + 1e-12);
            let (a, g) = fw_gradient(&z, &t);
            let mut grad = vec![a];
            grad.extend(g);
            let diff: Vec<f64> = z.iter().zip(&s).map(|(x, y)| x - y).collect();
            let m = majorant_step(dot(&grad, &diff), dot(&diff, &diff));
            prop_assert!(phi(eta) <= phi(m) + 1e-12);
        }
    }
}
