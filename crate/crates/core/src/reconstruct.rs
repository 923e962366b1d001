//! Primal candidates from trimmed per-block mixtures, and the perturbation
//! loop that tightens the right-hand side until the candidate is feasible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{evaluate, plus_norm, Atom, ModelError, ProblemInstance};
use crate::pipeline::{self, PipelineConfig, PipelineError, StageOutput};
use crate::trim::TrimResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `x̄_i = Σ_l α_l y_l`; exact for convex domains.
    Average,
    /// One atom per block drawn with probabilities `α`.
    Sample,
    /// Average, then map back into `X_i` without increasing `A_i x`.
    Repair,
    /// Atom with the largest weight.
    Max,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Average, Scheme::Sample, Scheme::Repair, Scheme::Max];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Average => "average",
            Scheme::Sample => "sample",
            Scheme::Repair => "repair",
            Scheme::Max => "max",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown scheme `{s}`"))
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum ReconstructError {
    #[error("repair unavailable for blocks {0:?}")]
    RepairUnavailable(Vec<usize>),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub x_bar: Vec<Vec<f64>>,
    pub scheme: Scheme,
    /// `Σ f_i(x̄_i)`; `None` when some block lies outside its domain.
    pub objective: Option<f64>,
    /// `‖Σ A_i x̄_i − b‖₊` against the instance used for evaluation.
    pub violation_plus: f64,
    /// Largest row violation `max_j (Σ A_i x̄_i − b)_j`.
    pub max_violation: f64,
    pub per_block_feasible: Vec<bool>,
}

impl Reconstruction {
    fn new(
        instance: &ProblemInstance,
        x_bar: Vec<Vec<f64>>,
        scheme: Scheme,
    ) -> Result<Self, ModelError> {
        let ev = evaluate(instance, &x_bar)?;
        let mut per_block_feasible = vec![true; instance.n()];
        for &i in &ev.infeasible_blocks {
            per_block_feasible[i] = false;
        }
        Ok(Self {
            objective: ev.objective.finite(),
            violation_plus: ev.violation_plus(),
            max_violation: ev
                .violation
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max),
            x_bar,
            scheme,
            per_block_feasible,
        })
    }

    /// Every block in its domain and every row within `tol·(1 + |b_j|)`.
    pub fn is_feasible_for(&self, instance: &ProblemInstance, tol: f64) -> bool {
        if !self.per_block_feasible.iter().all(|&f| f) {
            return false;
        }
        let Ok(ev) = evaluate(instance, &self.x_bar) else {
            return false;
        };
        ev.violation
            .iter()
            .zip(instance.b())
            .all(|(v, b)| *v <= tol * (1.0 + b.abs()))
    }

    /// `‖Σ A_i x̄_i − rhs‖₊`.
    pub fn violation_against(&self, instance: &ProblemInstance, rhs: &[f64]) -> f64 {
        let mut s = vec![0.0; instance.m()];
        for (spec, x) in instance.blocks().iter().zip(&self.x_bar) {
            for (si, v) in s.iter_mut().zip(spec.image(x)) {
                *si += v;
            }
        }
        for (si, r) in s.iter_mut().zip(rhs) {
            *si -= r;
        }
        plus_norm(&s).unwrap_or(f64::INFINITY)
    }
}

fn weighted_mean(group: &[(f64, Atom)]) -> Vec<f64> {
    let d = group[0].1.point.len();
    let mut x = vec![0.0; d];
    for (a, atom) in group {
        for (xi, p) in x.iter_mut().zip(&atom.point) {
            *xi += a * p;
        }
    }
    x
}

pub fn reconstruct_average(
    trim: &TrimResult,
    instance: &ProblemInstance,
) -> Result<Reconstruction, ReconstructError> {
    let x = trim
        .groups
        .iter()
        .map(|g| {
            if g.len() == 1 {
                g[0].1.point.clone()
            } else {
                weighted_mean(g)
            }
        })
        .collect();
    Ok(Reconstruction::new(instance, x, Scheme::Average)?)
}

/// Draws blocks in order from one generator seeded with `seed`.
pub fn reconstruct_sample(
    trim: &TrimResult,
    instance: &ProblemInstance,
    seed: u64,
) -> Result<Reconstruction, ReconstructError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = trim
        .groups
        .iter()
        .map(|g| sample_group(g, &mut rng))
        .collect();
    Ok(Reconstruction::new(instance, x, Scheme::Sample)?)
}

fn sample_group(group: &[(f64, Atom)], rng: &mut ChaCha8Rng) -> Vec<f64> {
    if group.len() == 1 {
        return group[0].1.point.clone();
    }
    let u: f64 = rng.random_range(0.0..1.0);
    let mut acc = 0.0;
    for (a, atom) in group {
        acc += a;
        if u < acc {
            return atom.point.clone();
        }
    }
    group.last().expect("nonempty group").1.point.clone()
}

pub fn reconstruct_repair(
    trim: &TrimResult,
    instance: &ProblemInstance,
) -> Result<Reconstruction, ReconstructError> {
    let mut missing = Vec::new();
    let mut x = Vec::with_capacity(trim.n());
    for (i, g) in trim.groups.iter().enumerate() {
        if g.len() == 1 {
            x.push(g[0].1.point.clone());
            continue;
        }
        match instance.block(i).oracle.repair(&weighted_mean(g)) {
            Some(p) => x.push(p),
            None => {
                missing.push(i);
                x.push(Vec::new());
            }
        }
    }
    if !missing.is_empty() {
        return Err(ReconstructError::RepairUnavailable(missing));
    }
    Ok(Reconstruction::new(instance, x, Scheme::Repair)?)
}

/// Largest `α_l` per block, ties to the lowest `l`.
pub fn reconstruct_max(
    trim: &TrimResult,
    instance: &ProblemInstance,
) -> Result<Reconstruction, ReconstructError> {
    let x = trim
        .groups
        .iter()
        .map(|g| {
            let mut best = 0;
            for (l, (a, _)) in g.iter().enumerate() {
                if *a > g[best].0 {
                    best = l;
                }
            }
            g[best].1.point.clone()
        })
        .collect();
    Ok(Reconstruction::new(instance, x, Scheme::Max)?)
}

pub fn reconstruct(
    scheme: Scheme,
    trim: &TrimResult,
    instance: &ProblemInstance,
    seed: u64,
) -> Result<Reconstruction, ReconstructError> {
    match scheme {
        Scheme::Average => reconstruct_average(trim, instance),
        Scheme::Sample => reconstruct_sample(trim, instance, seed),
        Scheme::Repair => reconstruct_repair(trim, instance),
        Scheme::Max => reconstruct_max(trim, instance),
    }
}

/// `θ(ζ) = ζ · base`, tried for `ζ = zeta_start, zeta_start + 1, …, zeta_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationConfig {
    /// Per-row base perturbation; empty means the application default.
    pub theta: Vec<f64>,
    pub zeta_start: u32,
    pub zeta_max: u32,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            theta: Vec::new(),
            zeta_start: 0,
            zeta_max: 10,
        }
    }
}

/// Record of one perturbation level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaAttempt {
    pub zeta: u32,
    pub v_star: f64,
    pub objective: Option<f64>,
    /// Violation against the original right-hand side.
    pub violation_plus: f64,
    /// Violation against the perturbed right-hand side.
    pub violation_plus_perturbed: f64,
    pub feasible: bool,
}

#[derive(Debug)]
pub struct PerturbationOutcome {
    /// Stages of the last level tried.
    pub last: StageOutput,
    pub zeta_used: u32,
    pub theta: Vec<f64>,
    pub feasible: bool,
    pub attempts: Vec<ZetaAttempt>,
}

#[derive(Debug, Error)]
pub enum PerturbationError {
    #[error("zeta exhausted: no feasible solution up to zeta = {zeta_max}")]
    ZetaExhausted {
        zeta_max: u32,
        outcome: Box<PerturbationOutcome>,
    },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("theta must have {m} nonnegative entries")]
    BadTheta { m: usize },
}

/// Re-runs dual, Frank-Wolfe, trim and `cfg.scheme` on `b − θ(ζ)` for
/// increasing `ζ`; stops at the first candidate feasible for the original
/// `b`.
pub fn solve_with_perturbation(
    instance: &ProblemInstance,
    cfg: &PipelineConfig,
    pert: &PerturbationConfig,
) -> Result<PerturbationOutcome, PerturbationError> {
    let m = instance.m();
    let base = if pert.theta.is_empty() {
        crate::apps::default_theta_base(instance)
    } else {
        pert.theta.clone()
    };
    if base.len() != m || base.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(PerturbationError::BadTheta { m });
    }
    let mut attempts = Vec::new();
    let mut zeta = pert.zeta_start;
    loop {
        let theta: Vec<f64> = base.iter().map(|t| zeta as f64 * t).collect();
        let rhs: Vec<f64> = instance
            .b()
            .iter()
            .zip(&theta)
            .map(|(b, t)| b - t)
            .collect();
        let perturbed = instance
            .with_rhs(rhs.clone())
            .map_err(PipelineError::from)?;
        let out = pipeline::solve_once(instance, &perturbed, cfg)?;
        let feasible = out.recon.is_feasible_for(instance, cfg.solver.tol_feas);
        attempts.push(ZetaAttempt {
            zeta,
            v_star: out.dual.v_star,
            objective: out.recon.objective,
            violation_plus: out.recon.violation_plus,
            violation_plus_perturbed: out.recon.violation_against(instance, &rhs),
            feasible,
        });
        let no_room = base.iter().all(|&t| t == 0.0);
        if feasible || zeta >= pert.zeta_max || no_room {
            let outcome = PerturbationOutcome {
                last: out,
                zeta_used: zeta,
                theta,
                feasible,
                attempts,
            };
            return if feasible {
                Ok(outcome)
            } else {
                Err(PerturbationError::ZetaExhausted {
                    zeta_max: pert.zeta_max,
                    outcome: Box::new(outcome),
                })
            };
        }
        zeta += 1;
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use nalgebra::DMatrix;

    use super::*;
    use crate::apps::uc::{UcOracle, UcParams};
    use crate::model::{BlockSpec, ProblemInstance};
    use crate::trim::CarathMethod;

    fn uc_block(horizon: usize) -> UcParams {
        UcParams {
            horizon,
            c01: 10.0,
            c10: 2.0,
            beta: 0.01,
            gamma: 1.0,
            omega: 5.0,
            g_min: 2.0,
            g_max: 10.0,
        }
    }

    /// Two single-period units; demand 6 with `A = [0 | −1]`.
    fn two_unit_instance() -> ProblemInstance {
        let blocks = (0..2)
            .map(|_| {
                let a = DMatrix::from_row_slice(1, 2, &[0.0, -1.0]);
                BlockSpec::new(a, Arc::new(UcOracle::new(uc_block(1)).unwrap()))
            })
            .collect();
        ProblemInstance::new(blocks, vec![-6.0]).unwrap()
    }

    fn atom(inst: &ProblemInstance, block: usize, p: &[f64]) -> Atom {
        Atom::new(inst, block, 0, p.to_vec()).unwrap()
    }

    fn trim_of(groups: Vec<Vec<(f64, Atom)>>) -> TrimResult {
        TrimResult {
            nontrivial_count: groups.iter().filter(|g| g.len() > 1).count(),
            groups,
            source: CarathMethod::Exact,
            residual: 0.0,
            columns_in: 0,
            budget: None,
            approx_status: None,
            residual_history: Vec::new(),
        }
    }

    #[test]
    fn singleton_groups_agree_across_schemes() {
        let inst = two_unit_instance();
        let t = trim_of(vec![
            vec![(1.0, atom(&inst, 0, &[1.0, 4.0]))],
            vec![(1.0, atom(&inst, 1, &[1.0, 2.0]))],
        ]);
        let avg = reconstruct_average(&t, &inst).unwrap();
        for s in Scheme::ALL {
            let r = reconstruct(s, &t, &inst, 3).unwrap();
            assert_eq!(r.x_bar, avg.x_bar);
            assert_eq!(r.objective, avg.objective);
        }
        let agg = t.aggregate(1);
        assert!((avg.objective.unwrap() - agg[0]).abs() < 1e-12);
        assert!(avg.is_feasible_for(&inst, 1e-9));
    }

    #[test]
    fn repair_restores_domain_membership() {
        let inst = two_unit_instance();
        // block 0 mixes off and (on, 10): the average (0.5, 5) is not in X_0
        let t = trim_of(vec![
            vec![
                (0.5, atom(&inst, 0, &[0.0, 0.0])),
                (0.5, atom(&inst, 0, &[1.0, 10.0])),
            ],
            vec![(1.0, atom(&inst, 1, &[1.0, 3.0]))],
        ]);
        let avg = reconstruct_average(&t, &inst).unwrap();
        assert_eq!(avg.per_block_feasible, vec![false, true]);
        assert!(avg.objective.is_none());
        let rep = reconstruct_repair(&t, &inst).unwrap();
        assert_eq!(rep.per_block_feasible, vec![true, true]);
        assert_eq!(rep.x_bar[0], vec![1.0, 5.0]);
        // A x̂ ≤ A x̄ row by row
        assert!(rep.violation_plus <= avg.violation_plus + 1e-12);
        assert!(rep.is_feasible_for(&inst, 1e-9));
    }

    #[test]
    fn max_breaks_ties_by_position() {
        let inst = two_unit_instance();
        let t = trim_of(vec![
            vec![
                (0.5, atom(&inst, 0, &[1.0, 10.0])),
                (0.5, atom(&inst, 0, &[0.0, 0.0])),
            ],
            vec![(1.0, atom(&inst, 1, &[1.0, 3.0]))],
        ]);
        let r = reconstruct_max(&t, &inst).unwrap();
        assert_eq!(r.x_bar[0], vec![1.0, 10.0]);
        assert!(r.per_block_feasible.iter().all(|&f| f));
    }

    #[test]
    fn max_gap_bounded_by_dropped_weight_times_range() {
        let inst = two_unit_instance();
        let t = trim_of(vec![
            vec![
                (0.3, atom(&inst, 0, &[0.0, 0.0])),
                (0.7, atom(&inst, 0, &[1.0, 10.0])),
            ],
            vec![(1.0, atom(&inst, 1, &[1.0, 3.0]))],
        ]);
        let r = reconstruct_max(&t, &inst).unwrap();
        let agg = t.aggregate(1);
        let gamma = inst.block(0).oracle.gamma_bound().unwrap();
        assert!(r.objective.unwrap() - agg[0] <= 0.3 * gamma + 1e-9);
    }

    #[test]
    fn sample_mean_matches_weighted_images() {
        let inst = two_unit_instance();
        let t = trim_of(vec![
            vec![
                (0.25, atom(&inst, 0, &[0.0, 0.0])),
                (0.75, atom(&inst, 0, &[1.0, 8.0])),
            ],
            vec![
                (0.4, atom(&inst, 1, &[1.0, 2.0])),
                (0.6, atom(&inst, 1, &[1.0, 10.0])),
            ],
        ]);
        let expected = t.aggregate(1)[1];
        let draws = 10_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for s in 0..draws {
            let r = reconstruct_sample(&t, &inst, s).unwrap();
            assert!(r.per_block_feasible.iter().all(|&f| f));
            let img: f64 = r.x_bar.iter().map(|x| -x[1]).sum();
            sum += img;
            sq += img * img;
        }
        let mean = sum / draws as f64;
        let var = sq / draws as f64 - mean * mean;
        let se = (var / draws as f64).sqrt();
        assert!(
            (mean - expected).abs() <= 3.0 * se,
            "{mean} vs {expected} (se {se})"
        );
    }

    #[test]
    fn repair_requires_oracle_support() {
        let inst = crate::apps::quadbox::generate(2, 1, 0).unwrap();
        let mut groups = Vec::new();
        for i in 0..2 {
            let d = inst.block(i).dim();
            groups.push(vec![
                (0.5, atom(&inst, i, &vec![0.0; d])),
                (0.5, atom(&inst, i, &vec![0.1; d])),
            ]);
        }
        // quadratic-box does support repair
        assert!(reconstruct_repair(&trim_of(groups), &inst).is_ok());
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("median".parse::<Scheme>().is_err());
    }
}
