//! Lagrange dual `Ψ(λ) = Σ_i −f_i*(−A_iᵀλ) − λᵀb` and its maximization.
//!
//! `Ψ` is concave and piecewise smooth at best, so the maximizer is a
//! projected subgradient ascent reporting the best value seen. Every `Ψ(λ)`
//! is a lower bound on the primal optimum.

use serde::{Deserialize, Serialize};

use crate::model::{dot, map_blocks, norm2, ModelError, ProblemInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `λ ← [λ + η₀/√(t+1) · s]₊` with `η₀ = step0` or `1/(1+‖b‖)`.
    Sqrt,
    /// `λ ← [λ + r/√(t+1) · s/‖s‖]₊`; `r = step0` or calibrated by a
    /// doubling search along the first supergradient.
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DualConfig {
    pub max_iter: usize,
    pub step_rule: StepRule,
    pub step0: Option<f64>,
    /// Relative improvement of the best value required over `patience`
    /// iterations to keep going.
    pub stop_tol: f64,
    pub patience: usize,
    /// Every this many iterations without relative progress `stop_tol`, halve
    /// the step radius and restart the step counter from the best `λ`.
    /// Zero disables restarts.
    pub restart_window: usize,
    pub max_restarts: usize,
    /// Skip the solve and use this value.
    pub v_star: Option<f64>,
}

impl Default for DualConfig {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            step_rule: StepRule::Normalized,
            step0: None,
            stop_tol: 1e-6,
            patience: 200,
            restart_window: 50,
            max_restarts: 30,
            v_star: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualStop {
    Stalled,
    MaxIter,
    /// Zero supergradient: `λ` is optimal.
    Stationary,
    Supplied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualResult {
    pub v_star: f64,
    /// Multiplier attaining `v_star`.
    pub lambda: Vec<f64>,
    pub iterations: usize,
    /// `Ψ` at each visited `λ` (not filtered).
    pub psi_history: Vec<f64>,
    pub stop: DualStop,
}

impl DualResult {
    /// Running maximum of `psi_history`.
    pub fn best_history(&self) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        self.psi_history
            .iter()
            .map(|&p| {
                best = best.max(p);
                best
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsiEval {
    pub psi: f64,
    /// `Σ A_i x_i(λ) − b`.
    pub subgrad: Vec<f64>,
    pub minimizers: Vec<Vec<f64>>,
}

/// `Ψ(λ)` with a supergradient and the block minimizers of the Lagrangian.
pub fn eval_psi(instance: &ProblemInstance, lambda: &[f64]) -> Result<PsiEval, ModelError> {
    if lambda.len() != instance.m() {
        return Err(ModelError::Invalid("multiplier length mismatch".into()));
    }
    if lambda.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite);
    }
    if lambda.iter().any(|&v| v < 0.0) {
        return Err(ModelError::Invalid("multiplier must be nonnegative".into()));
    }
    let neg_lambda: Vec<f64> = lambda.iter().map(|v| -v).collect();
    let per_block = map_blocks(instance.n(), |i| {
        let blk = instance.block(i);
        blk.oracle
            .conjugate(&blk.adjoint(&neg_lambda))
            .map_err(|source| ModelError::Oracle { block: i, source })
    });
    let mut psi = -dot(lambda, instance.b());
    let mut subgrad: Vec<f64> = instance.b().iter().map(|v| -v).collect();
    let mut minimizers = Vec::with_capacity(instance.n());
    for (i, res) in per_block.into_iter().enumerate() {
        let conj = res?;
        psi -= conj.value;
        for (s, v) in subgrad
            .iter_mut()
            .zip(instance.block(i).image(&conj.argmax))
        {
            *s += v;
        }
        minimizers.push(conj.argmax);
    }
    Ok(PsiEval {
        psi,
        subgrad,
        minimizers,
    })
}

fn project_step(lambda: &[f64], dir: &[f64], scale: f64) -> Vec<f64> {
    lambda
        .iter()
        .zip(dir)
        .map(|(l, d)| (l + scale * d).max(0.0))
        .collect()
}

/// Doubling search for a step radius along the first supergradient.
fn calibrate_radius(instance: &ProblemInstance, start: &PsiEval) -> Result<f64, ModelError> {
    let zero = vec![0.0; instance.m()];
    let norm = norm2(&start.subgrad);
    let dir: Vec<f64> = start.subgrad.iter().map(|s| s / norm).collect();
    let mut best = (start.psi, 0.0);
    let mut r = 1e-3 * (1.0 + norm2(instance.b()));
    for _ in 0..60 {
        let psi = eval_psi(instance, &project_step(&zero, &dir, r))?.psi;
        if psi <= best.0 {
            break;
        }
        best = (psi, r);
        r *= 2.0;
    }
    Ok(if best.1 > 0.0 { best.1 } else { r })
}

pub fn solve_dual(instance: &ProblemInstance, cfg: &DualConfig) -> Result<DualResult, ModelError> {
    if let Some(v) = cfg.v_star {
        if !v.is_finite() {
            return Err(ModelError::NonFinite);
        }
        return Ok(DualResult {
            v_star: v,
            lambda: vec![0.0; instance.m()],
            iterations: 0,
            psi_history: Vec::new(),
            stop: DualStop::Supplied,
        });
    }
    let mut lambda = vec![0.0; instance.m()];
    let mut eval = eval_psi(instance, &lambda)?;
    let mut history = vec![eval.psi];
    let mut best_hist = vec![eval.psi];
    let mut best = (eval.psi, lambda.clone());
    let radius = match (cfg.step_rule, cfg.step0) {
        (_, Some(s)) => s,
        (StepRule::Sqrt, None) => 1.0 / (1.0 + norm2(instance.b())),
        (StepRule::Normalized, None) if norm2(&eval.subgrad) > 0.0 => {
            calibrate_radius(instance, &eval)?
        }
        (StepRule::Normalized, None) => 1.0,
    };

    let mut radius = radius;
    let mut stop = DualStop::MaxIter;
    let mut t = 0;
    let mut local = 0;
    let mut restarts = 0;
    let mut window_best = best.0;
    while t < cfg.max_iter {
        let g_norm = norm2(&eval.subgrad);
        // projected supergradient vanishes: λ is a maximizer
        let certified = lambda
            .iter()
            .zip(&eval.subgrad)
            .all(|(&l, &s)| s == 0.0 || (l == 0.0 && s < 0.0));
        if certified {
            stop = DualStop::Stationary;
            break;
        }
        let scale = match cfg.step_rule {
            StepRule::Sqrt => radius / ((local + 1) as f64).sqrt(),
            StepRule::Normalized => radius / ((local + 1) as f64).sqrt() / g_norm,
        };
        lambda = project_step(&lambda, &eval.subgrad, scale);
        eval = eval_psi(instance, &lambda)?;
        t += 1;
        history.push(eval.psi);
        if eval.psi > best.0 {
            best = (eval.psi, lambda.clone());
        }
        best_hist.push(best.0);
        local += 1;
        if cfg.restart_window > 0 && local % cfg.restart_window == 0 {
            if best.0 - window_best <= cfg.stop_tol * (1.0 + best.0.abs()) {
                if restarts == cfg.max_restarts {
                    stop = DualStop::Stalled;
                    break;
                }
                restarts += 1;
                radius *= 0.5;
                local = 0;
                lambda = best.1.clone();
                eval = eval_psi(instance, &lambda)?;
            }
            window_best = best.0;
        }
        if t >= cfg.patience {
            let earlier = best_hist[t - cfg.patience];
            if best.0 - earlier <= cfg.stop_tol * (1.0 + best.0.abs()) {
                stop = DualStop::Stalled;
                break;
            }
        }
    }
    Ok(DualResult {
        v_star: best.0,
        lambda: best.1,
        iterations: t,
        psi_history: history,
        stop,
    })
}
