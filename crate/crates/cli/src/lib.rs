//! Command implementations behind the `sepopt` binary.

pub mod config;
pub mod report;

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use sepopt::pipeline::{self, PipelineConfig, PipelineError};
use sepopt::reconstruct::{solve_with_perturbation, PerturbationError, ZetaAttempt};
use sepopt::ProblemInstance;

pub use config::RunConfig;
pub use report::SolveReport;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("model: {0}")]
    Model(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Pipeline(e) => match e {
                PipelineError::Dual(_) => 3,
                PipelineError::Stage1(_) => 4,
                PipelineError::Trim(_) => 5,
                PipelineError::Reconstruct(_) => 6,
                PipelineError::Model(_) => 7,
            },
            CliError::Model(_) => 7,
            CliError::Io(_) => 8,
        }
    }

    pub fn stage(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io(_) => "io",
            CliError::Model(_) => "model",
            CliError::Pipeline(e) => e.stage(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "error": {
                "stage": self.stage(),
                "message": self.to_string(),
                "exit_code": self.exit_code(),
            }
        })
    }
}

pub const EXIT_FEASIBLE: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 1;

/// Runs the pipeline once on `inst` and builds the report.
pub fn run(
    inst: &ProblemInstance,
    pc: &PipelineConfig,
    cfg: &RunConfig,
) -> Result<SolveReport, CliError> {
    let (out, theta, zeta_used, attempts, feasible) = if cfg.perturb {
        let outcome = match solve_with_perturbation(inst, pc, &cfg.perturbation) {
            Ok(o) => o,
            Err(PerturbationError::ZetaExhausted { outcome, .. }) => *outcome,
            Err(PerturbationError::Pipeline(e)) => return Err(e.into()),
            Err(e @ PerturbationError::BadTheta { .. }) => {
                return Err(CliError::Usage(e.to_string()))
            }
        };
        (
            outcome.last,
            outcome.theta,
            outcome.zeta_used,
            outcome.attempts,
            outcome.feasible,
        )
    } else {
        let out = pipeline::solve(inst, pc)?;
        let feasible = out.recon.is_feasible_for(inst, pc.solver.tol_feas);
        let attempt = ZetaAttempt {
            zeta: 0,
            v_star: out.dual.v_star,
            objective: out.recon.objective,
            violation_plus: out.recon.violation_plus,
            violation_plus_perturbed: out.recon.violation_plus,
            feasible,
        };
        (out, vec![0.0; inst.m()], 0, vec![attempt], feasible)
    };
    let v_star_original = match attempts.iter().find(|a| a.zeta == 0) {
        Some(a) => a.v_star,
        None => {
            sepopt::dual::solve_dual(inst, &pc.dual)
                .map_err(|e| CliError::Pipeline(PipelineError::Dual(e)))?
                .v_star
        }
    };
    SolveReport::build(report::ReportInput {
        instance: inst,
        out: &out,
        seed: pc.seed,
        k: pc.fw.k,
        v_star_original,
        theta,
        zeta_used,
        attempts,
        feasible,
        timings: cfg.timings,
        dual_config: &pc.dual,
    })
    .map_err(|e| CliError::Model(e.to_string()))
}

pub fn solve(cfg: &RunConfig) -> Result<SolveReport, CliError> {
    let inst = cfg.instance()?;
    run(&inst, &cfg.pipeline(), cfg)
}

/// Serialized instance text.
pub fn generate(cfg: &RunConfig) -> Result<String, CliError> {
    if cfg.instance.file.is_some() {
        return Err(CliError::Usage(
            "generate needs --app, not an instance file".into(),
        ));
    }
    let inst = cfg.instance()?;
    sepopt::instance_io::to_json(&inst).map_err(|e| CliError::Model(e.to_string()))
}

pub const SWEEP_HEADER: &str = "app,n,m,K,seed,method,scheme,status,zeta,v_star,objective,gap,\
max_gamma,violation_plus,violation_plus_perturbed,aggregate_violation_perturbed,q,atoms_in,dual_s,fw_s,trim_s,reconstruct_s";

/// One CSV row per grid point `(n, K, seed)`. Pipeline failures are
/// recorded in the `status` column.
pub fn sweep(cfg: &RunConfig) -> Result<String, CliError> {
    let ns: Vec<Option<usize>> = match &cfg.sweep.n {
        Some(list) => list.iter().map(|&n| Some(n)).collect(),
        None => vec![cfg.instance.n],
    };
    let ks = cfg
        .sweep
        .k
        .clone()
        .unwrap_or_else(|| vec![cfg.pipeline.fw.k]);
    let seeds = cfg.sweep.seeds.clone().unwrap_or_else(|| vec![cfg.seed]);
    if ns.is_empty() || ks.is_empty() || seeds.is_empty() {
        return Err(CliError::Usage("empty sweep grid".into()));
    }
    let mut csv = format!("{SWEEP_HEADER}\n");
    for &n in &ns {
        for &seed in &seeds {
            let inst = cfg.instance_with(n, seed)?;
            for &k in &ks {
                let mut pc = cfg.pipeline();
                pc.seed = seed;
                pc.fw.k = k;
                match run(&inst, &pc, cfg) {
                    Ok(r) => push_row(&mut csv, &r),
                    Err(CliError::Pipeline(e)) => {
                        let app = sepopt::apps::app_name(&inst).unwrap_or_default();
                        let _ = writeln!(
                            csv,
                            "{app},{},{},{k},{seed},,,{},,,,,,,,,,,,,,",
                            inst.n(),
                            inst.m(),
                            e.stage()
                        );
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(csv)
}

fn push_row(csv: &mut String, r: &SolveReport) {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    let time = |f: fn(&sepopt::pipeline::StageTimings) -> f64| opt(r.timings.as_ref().map(f));
    let status = if r.feasible { "feasible" } else { "infeasible" };
    let _ = writeln!(
        csv,
        "{},{},{},{},{},{},{},{status},{},{:e},{},{},{},{:e},{:e},{:e},{},{},{},{},{},{}",
        r.app.as_deref().unwrap_or(""),
        r.n,
        r.m,
        r.k,
        r.seed,
        r.method,
        r.scheme,
        r.zeta_used,
        r.v_star,
        opt(r.objective),
        opt(r.gap),
        opt(r.max_gamma),
        r.violation_plus,
        r.violation_plus_perturbed,
        r.aggregate_violation_perturbed,
        r.q,
        r.atoms_in,
        time(|t| t.dual_s),
        time(|t| t.fw_s),
        time(|t| t.trim_s),
        time(|t| t.reconstruct_s),
    );
}

pub fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
