//! End-to-end run: dual → Frank-Wolfe → trim → reconstruction.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{ApproxConfig, ApproxMethod};
use crate::caratheodory::CarathConfig;
use crate::dual::{solve_dual, DualConfig, DualResult};
use crate::fw::{FwConfig, FwState, FwTrace};
use crate::model::{ModelError, ProblemInstance, SolverConfig};
use crate::reconstruct::{reconstruct, ReconstructError, Reconstruction, Scheme};
use crate::trim::{trim, trim_approx_with_retry, CarathMethod, TrimError, TrimResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub dual: DualConfig,
    pub fw: FwConfig,
    /// `None` picks the application default.
    pub method: Option<CarathMethod>,
    pub scheme: Option<Scheme>,
    pub exact: CarathConfig,
    pub approx: ApproxConfig,
    /// Approximate-path budget; `None` means `2(n + m)`.
    #[serde(rename = "T")]
    pub t: Option<usize>,
    pub seed: u64,
    /// Every this many Frank-Wolfe iterations, trim with the min-norm-point
    /// method and stop once the candidate is feasible.
    pub check_every: Option<usize>,
    pub solver: SolverConfig,
}

impl PipelineConfig {
    pub fn strategy(&self, instance: &ProblemInstance) -> (Scheme, CarathMethod) {
        let (s, m) = crate::apps::default_strategy(instance);
        (self.scheme.unwrap_or(s), self.method.unwrap_or(m))
    }

    pub fn approx_for(&self, instance: &ProblemInstance) -> ApproxConfig {
        let mut a = self.approx.clone();
        a.t = self.t.unwrap_or(2 * (instance.n() + instance.m()));
        a
    }
}

/// Independent stream for stage `stage` derived from the run seed.
pub fn sub_seed(seed: u64, stage: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stage.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub const TRIM_STREAM: u64 = 1;
pub const SAMPLE_STREAM: u64 = 2;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("dual stage: {0}")]
    Dual(ModelError),
    #[error("frank-wolfe stage: {0}")]
    Stage1(ModelError),
    #[error("trim stage: {0}")]
    Trim(#[from] TrimError),
    #[error("reconstruction stage: {0}")]
    Reconstruct(#[from] ReconstructError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl PipelineError {
    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Dual(_) => "dual",
            PipelineError::Stage1(_) => "stage1",
            PipelineError::Trim(_) => "trim",
            PipelineError::Reconstruct(_) => "reconstruct",
            PipelineError::Model(_) => "model",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub dual_s: f64,
    pub fw_s: f64,
    pub trim_s: f64,
    pub reconstruct_s: f64,
}

#[derive(Debug)]
pub struct StageOutput {
    pub dual: DualResult,
    pub trace: FwTrace,
    pub trim: TrimResult,
    pub recon: Reconstruction,
    pub scheme: Scheme,
    pub method: CarathMethod,
    pub timings: StageTimings,
    /// Iteration at which a checkpoint found a feasible candidate.
    pub early_stop: Option<usize>,
}

fn checkpoint(
    trace: &FwTrace,
    original: &ProblemInstance,
    perturbed: &ProblemInstance,
    cfg: &PipelineConfig,
    scheme: Scheme,
) -> Option<(TrimResult, Reconstruction)> {
    let t = trim_approx_with_retry(
        trace,
        perturbed,
        ApproxMethod::Mnp,
        &cfg.approx_for(perturbed),
    )
    .ok()?;
    let r = reconstruct(scheme, &t, original, sub_seed(cfg.seed, SAMPLE_STREAM)).ok()?;
    r.is_feasible_for(original, cfg.solver.tol_feas)
        .then_some((t, r))
}

/// One pass of the pipeline on `perturbed`; the candidate is evaluated
/// against `original`.
pub fn solve_once(
    original: &ProblemInstance,
    perturbed: &ProblemInstance,
    cfg: &PipelineConfig,
) -> Result<StageOutput, PipelineError> {
    let (scheme, method) = cfg.strategy(original);
    let mut timings = StageTimings::default();

    let clock = Instant::now();
    let dual = solve_dual(perturbed, &cfg.dual).map_err(PipelineError::Dual)?;
    timings.dual_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let mut state = FwState::new(perturbed, dual.v_star, &cfg.fw).map_err(PipelineError::Stage1)?;
    let mut early = None;
    match cfg.check_every.filter(|&c| c > 0) {
        None => state.run().map_err(PipelineError::Stage1)?,
        Some(every) => {
            while state.step().map_err(PipelineError::Stage1)? {
                if state.iterations() % every == 0 {
                    let trace = state.trace();
                    if let Some(found) = checkpoint(&trace, original, perturbed, cfg, scheme) {
                        early = Some((state.iterations(), found));
                        break;
                    }
                }
            }
        }
    }
    let trace = state.into_trace();
    timings.fw_s = clock.elapsed().as_secs_f64();

    if let Some((k, (trim_res, recon))) = early {
        return Ok(StageOutput {
            dual,
            trace,
            trim: trim_res,
            recon,
            scheme,
            method: CarathMethod::Mnp,
            timings,
            early_stop: Some(k),
        });
    }

    let clock = Instant::now();
    let trim_res = trim(
        &trace,
        perturbed,
        method,
        &cfg.exact,
        &cfg.approx_for(perturbed),
        sub_seed(cfg.seed, TRIM_STREAM),
    )?;
    timings.trim_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let recon = reconstruct(
        scheme,
        &trim_res,
        original,
        sub_seed(cfg.seed, SAMPLE_STREAM),
    )?;
    timings.reconstruct_s = clock.elapsed().as_secs_f64();

    Ok(StageOutput {
        dual,
        trace,
        trim: trim_res,
        recon,
        scheme,
        method,
        timings,
        early_stop: None,
    })
}

/// Unperturbed run.
pub fn solve(
    instance: &ProblemInstance,
    cfg: &PipelineConfig,
) -> Result<StageOutput, PipelineError> {
    solve_once(instance, instance, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apps::{pev, quadbox, uc};
    use crate::reconstruct::{solve_with_perturbation, PerturbationConfig};

    #[test]
    fn sub_seeds_differ_per_stage() {
        assert_ne!(sub_seed(0, 1), sub_seed(0, 2));
        assert_ne!(sub_seed(1, 1), sub_seed(0, 1));
        assert_eq!(sub_seed(5, 3), sub_seed(5, 3));
    }

    #[test]
    fn convex_run_has_small_gap() {
        let inst = quadbox::generate(10, 3, 2).unwrap();
        let cfg = PipelineConfig {
            fw: FwConfig {
                k: 2000,
                ..FwConfig::default()
            },
            ..PipelineConfig::default()
        };
        let out = solve(&inst, &cfg).unwrap();
        assert_eq!(out.scheme, Scheme::Average);
        let obj = out.recon.objective.unwrap();
        assert!(obj >= out.dual.v_star - 1e-6 * (1.0 + out.dual.v_star.abs()));
        assert!(obj - out.dual.v_star < 0.05 * (1.0 + out.dual.v_star.abs()));
    }

    #[test]
    fn uc_run_with_perturbation_is_feasible() {
        let inst = uc::generate(10, 4, 1).unwrap();
        let cfg = PipelineConfig {
            fw: FwConfig {
                k: 2000,
                ..FwConfig::default()
            },
            ..PipelineConfig::default()
        };
        let out = solve_with_perturbation(&inst, &cfg, &PerturbationConfig::default()).unwrap();
        assert!(out.feasible);
        let obj = out.last.recon.objective.unwrap();
        let gamma = inst.max_gamma().unwrap();
        let v = out.attempts[0].v_star;
        assert!(obj - v <= (inst.m() + 1) as f64 * gamma);
    }

    #[test]
    fn runs_are_deterministic() {
        let inst = pev::generate(12, 6, 3).unwrap();
        let cfg = PipelineConfig {
            fw: FwConfig {
                k: 300,
                ..FwConfig::default()
            },
            seed: 4,
            ..PipelineConfig::default()
        };
        let a = solve(&inst, &cfg).unwrap();
        let b = solve(&inst, &cfg).unwrap();
        assert_eq!(a.recon, b.recon);
        assert_eq!(a.trim.summary(), b.trim.summary());
        assert_eq!(a.dual.v_star, b.dual.v_star);
    }

    #[test]
    fn checkpointing_stops_early_on_feasible_candidate() {
        let inst = uc::generate(10, 4, 2).unwrap();
        let rhs: Vec<f64> = inst.b().iter().map(|b| b - 100.0).collect();
        let perturbed = inst.with_rhs(rhs).unwrap();
        let cfg = PipelineConfig {
            fw: FwConfig {
                k: 5000,
                ..FwConfig::default()
            },
            check_every: Some(100),
            ..PipelineConfig::default()
        };
        let out = solve_once(&inst, &perturbed, &cfg).unwrap();
        if let Some(k) = out.early_stop {
            assert!(k < 5000 && k % 100 == 0);
            assert!(out.recon.is_feasible_for(&inst, cfg.solver.tol_feas));
        }
    }
}
