use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use sepopt::approx::ApproxStatus;
use sepopt::dual::{DualConfig, DualResult, DualStop};
use sepopt::fw::FwStop;
use sepopt::pipeline::{sub_seed, StageOutput, StageTimings, SAMPLE_STREAM};
use sepopt::reconstruct::{reconstruct, Scheme, ZetaAttempt};
use sepopt::trim::{CarathMethod, TrimSummary};
use sepopt::{evaluate, plus_norm, ModelError, ProblemInstance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub app: Option<String>,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    #[serde(rename = "K")]
    pub k: usize,
    pub method: CarathMethod,
    pub scheme: Scheme,
    /// Dual bound of the original problem; `gap` is measured against it.
    pub v_star: f64,
    /// Dual bound of the perturbed problem that produced `x̄`.
    pub v_star_perturbed: f64,
    pub max_gamma: Option<f64>,
    /// `Σ f_i(x̄_i)`, `None` when a block left its domain.
    pub objective: Option<f64>,
    pub gap: Option<f64>,
    /// Objective of every scheme applied to the final trim; `None` when the
    /// scheme fails or leaves a domain.
    pub objectives: BTreeMap<String, Option<f64>>,
    /// `‖Σ A_i x̄_i − b‖₊` for the original `b`.
    pub violation_plus: f64,
    /// Same against the perturbed right-hand side `b − θ`.
    pub violation_plus_perturbed: f64,
    /// `‖Σ_i Σ_l α_l A_i y_l − (b − θ)‖₊`: the trimmed convex combination
    /// before rounding to `x̄`.
    pub aggregate_violation_perturbed: f64,
    pub feasible: bool,
    pub zeta_used: u32,
    pub theta: Vec<f64>,
    pub q: usize,
    /// Distinct atoms entering the trim.
    pub atoms_in: usize,
    /// Entries surviving the trim.
    pub atoms_out: usize,
    pub trim_residual: f64,
    pub approx_status: Option<ApproxStatus>,
    pub dual_iterations: usize,
    pub dual_stop: DualStop,
    pub fw_iterations: usize,
    pub fw_stop: FwStop,
    pub fw_early_stop: Option<usize>,
    pub fw_residual_history: Vec<f64>,
    pub approx_residual_history: Vec<f64>,
    pub attempts: Vec<ZetaAttempt>,
    pub timings: Option<StageTimings>,
    pub trim: TrimSummary,
    /// Caveats on how the numbers above were obtained.
    pub notes: Vec<String>,
    pub x_bar: Vec<Vec<f64>>,
}

fn notes(app: Option<&str>, dual: &DualResult, cfg: &DualConfig) -> Vec<String> {
    let mut out = Vec::new();
    match dual.stop {
        DualStop::Stalled => out.push(format!(
            "v_star: dual ascent stopped by the patience rule (relative gain below {:e} over {} iterations, or {} radius halvings)",
            cfg.stop_tol, cfg.patience, cfg.max_restarts
        )),
        DualStop::MaxIter => out.push(format!(
            "v_star: dual ascent hit the iteration cap of {}",
            cfg.max_iter
        )),
        DualStop::Stationary | DualStop::Supplied => {}
    }
    if app == Some(sepopt::apps::pev::APP_NAME) {
        out.push("pev: generator parameters are stand-in defaults, not calibrated data".into());
    }
    out
}

pub struct ReportInput<'a> {
    pub instance: &'a ProblemInstance,
    pub out: &'a StageOutput,
    pub seed: u64,
    pub k: usize,
    pub v_star_original: f64,
    pub theta: Vec<f64>,
    pub zeta_used: u32,
    pub attempts: Vec<ZetaAttempt>,
    pub feasible: bool,
    pub timings: bool,
    pub dual_config: &'a DualConfig,
}

impl SolveReport {
    /// Objective and violations are re-evaluated from `x̄` on the original
    /// instance.
    pub fn build(r: ReportInput<'_>) -> Result<Self, ModelError> {
        let inst = r.instance;
        let out = r.out;
        let x_bar = out.recon.x_bar.clone();
        let ev = evaluate(inst, &x_bar)?;
        let objective = if ev.infeasible_blocks.is_empty() {
            ev.objective.finite()
        } else {
            None
        };
        let perturbed: Vec<f64> = ev
            .violation
            .iter()
            .zip(&r.theta)
            .map(|(v, t)| v + t)
            .collect();
        let mut objectives = BTreeMap::new();
        for s in Scheme::ALL {
            let value = reconstruct(s, &out.trim, inst, sub_seed(r.seed, SAMPLE_STREAM))
                .ok()
                .and_then(|rec| rec.objective);
            objectives.insert(s.name().to_string(), value);
        }
        let v_star = r.v_star_original;
        let agg = out.trim.aggregate(inst.m());
        let agg_excess: Vec<f64> = agg[1..]
            .iter()
            .zip(inst.b())
            .zip(&r.theta)
            .map(|((a, b), t)| a - (b - t))
            .collect();
        let app = sepopt::apps::app_name(inst);
        Ok(Self {
            notes: notes(app.as_deref(), &out.dual, r.dual_config),
            app,
            n: inst.n(),
            m: inst.m(),
            seed: r.seed,
            k: r.k,
            method: out.method,
            scheme: out.scheme,
            v_star,
            v_star_perturbed: out.dual.v_star,
            max_gamma: inst.max_gamma(),
            objective,
            gap: objective.map(|f| f - v_star),
            objectives,
            violation_plus: ev.violation_plus(),
            violation_plus_perturbed: plus_norm(&perturbed)?,
            aggregate_violation_perturbed: plus_norm(&agg_excess)?,
            feasible: r.feasible,
            zeta_used: r.zeta_used,
            theta: r.theta,
            q: out.trim.nontrivial_count,
            atoms_in: out.trim.columns_in,
            atoms_out: out.trim.entry_count(),
            trim_residual: out.trim.residual,
            approx_status: out.trim.approx_status,
            dual_iterations: out.dual.iterations,
            dual_stop: out.dual.stop,
            fw_iterations: out.trace.iterations,
            fw_stop: out.trace.stop,
            fw_early_stop: out.early_stop,
            fw_residual_history: out.trace.residual_history.clone(),
            approx_residual_history: out.trim.residual_history.clone(),
            attempts: r.attempts,
            timings: r.timings.then_some(out.timings),
            trim: out.trim.summary(),
            x_bar,
        })
    }

    /// Series with header `stage,k,residual,time_s`. The time column holds
    /// the stage's wall time on its last row and is blank elsewhere.
    pub fn series_csv(&self) -> String {
        let mut s = String::from("stage,k,residual,time_s\n");
        let time = |t: fn(&StageTimings) -> f64| self.timings.as_ref().map(t);
        push_series(&mut s, "fw", &self.fw_residual_history, time(|t| t.fw_s));
        push_series(
            &mut s,
            "trim",
            &self.approx_residual_history,
            time(|t| t.trim_s),
        );
        let zeta: Vec<f64> = self.attempts.iter().map(|a| a.violation_plus).collect();
        let start = self.attempts.first().map_or(0, |a| a.zeta as usize);
        for (i, v) in zeta.iter().enumerate() {
            let _ = writeln!(s, "zeta,{},{v:e},", start + i);
        }
        s
    }
}

fn push_series(s: &mut String, stage: &str, values: &[f64], time: Option<f64>) {
    for (k, v) in values.iter().enumerate() {
        let t = match time {
            Some(t) if k + 1 == values.len() => format!("{t:e}"),
            _ => String::new(),
        };
        let _ = writeln!(s, "{stage},{k},{v:e},{t}");
    }
}
