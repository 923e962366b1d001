use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sepopt::reconstruct::Scheme;
use sepopt::trim::CarathMethod;
use sepopt_cli::config::parse_list;
use sepopt_cli::{CliError, RunConfig, EXIT_FEASIBLE, EXIT_INFEASIBLE};

/// Primal recovery for separable nonconvex problems.
#[derive(Parser)]
#[command(name = "sepopt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random instance as JSON.
    Generate(GenerateArgs),
    /// Run dual, Frank-Wolfe, trim and reconstruction; write a JSON report
    /// (plus a CSV series next to it when --out is given).
    Solve(SolveArgs),
    /// Run the pipeline over a grid of n, K and seeds; write CSV rows.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct Common {
    /// TOML or JSON run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Generator: uc, pev or quadratic-box.
    #[arg(long)]
    app: Option<String>,
    /// Coupling rows (horizon for uc and pev).
    #[arg(long = "N")]
    rows: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineFlags {
    /// Instance file written by `generate`.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Approximate Carathéodory budget.
    #[arg(long = "T")]
    budget: Option<usize>,
    /// exact, fcfw or mnp.
    #[arg(long)]
    method: Option<String>,
    /// average, sample, repair or max.
    #[arg(long)]
    scheme: Option<String>,
    /// Leave wall times out of the report.
    #[arg(long)]
    no_timings: bool,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    pipeline: PipelineFlags,
    #[arg(long)]
    n: Option<usize>,
    /// Frank-Wolfe iterations.
    #[arg(long = "K")]
    iterations: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    pipeline: PipelineFlags,
    /// Comma-separated block counts.
    #[arg(long)]
    n: Option<String>,
    /// Comma-separated Frank-Wolfe iteration counts.
    #[arg(long = "K")]
    iterations: Option<String>,
    /// Comma-separated seeds.
    #[arg(long)]
    seeds: Option<String>,
}

fn base_config(c: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(app) = &c.app {
        cfg.instance.app = Some(app.clone());
    }
    if c.rows.is_some() {
        cfg.instance.m = c.rows;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if c.out.is_some() {
        cfg.out = c.out.clone();
    }
    Ok(cfg)
}

fn apply_pipeline(cfg: &mut RunConfig, p: &PipelineFlags) -> Result<(), CliError> {
    if p.instance.is_some() {
        cfg.instance.file = p.instance.clone();
    }
    if p.budget.is_some() {
        cfg.pipeline.t = p.budget;
    }
    if let Some(m) = &p.method {
        cfg.pipeline.method = Some(m.parse::<CarathMethod>().map_err(CliError::Usage)?);
    }
    if let Some(s) = &p.scheme {
        cfg.pipeline.scheme = Some(s.parse::<Scheme>().map_err(CliError::Usage)?);
    }
    if p.no_timings {
        cfg.timings = false;
    }
    Ok(())
}

fn list<T: std::str::FromStr>(flag: &str, s: &Option<String>) -> Result<Option<Vec<T>>, CliError>
where
    T::Err: std::fmt::Display,
{
    s.as_deref()
        .map(|s| parse_list(s).map_err(|e| CliError::Usage(format!("--{flag}: {e}"))))
        .transpose()
}

fn emit(cfg: &RunConfig, text: &str) -> Result<(), CliError> {
    match &cfg.out {
        Some(p) => sepopt_cli::write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<i32, (CliError, Option<PathBuf>)> {
    match cli.command {
        Command::Generate(a) => {
            let mut cfg = base_config(&a.common).map_err(|e| (e, None))?;
            if a.n.is_some() {
                cfg.instance.n = a.n;
            }
            let text = sepopt_cli::generate(&cfg).map_err(|e| (e, None))?;
            emit(&cfg, &text).map_err(|e| (e, None))?;
            Ok(EXIT_FEASIBLE)
        }
        Command::Solve(a) => {
            let mut cfg = base_config(&a.common).map_err(|e| (e, None))?;
            let out = cfg.out.clone();
            let fail = |e| (e, out.clone());
            apply_pipeline(&mut cfg, &a.pipeline).map_err(fail)?;
            if a.n.is_some() {
                cfg.instance.n = a.n;
            }
            if let Some(k) = a.iterations {
                cfg.pipeline.fw.k = k;
            }
            let report = sepopt_cli::solve(&cfg).map_err(fail)?;
            let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
            emit(&cfg, &json).map_err(fail)?;
            if let Some(p) = &cfg.out {
                sepopt_cli::write_file(&p.with_extension("csv"), &report.series_csv())
                    .map_err(fail)?;
            }
            Ok(if report.feasible {
                EXIT_FEASIBLE
            } else {
                EXIT_INFEASIBLE
            })
        }
        Command::Sweep(a) => {
            let mut cfg = base_config(&a.common).map_err(|e| (e, None))?;
            apply_pipeline(&mut cfg, &a.pipeline).map_err(|e| (e, None))?;
            let grid = (|| {
                if let Some(n) = list("n", &a.n)? {
                    cfg.sweep.n = Some(n);
                }
                if let Some(k) = list("K", &a.iterations)? {
                    cfg.sweep.k = Some(k);
                }
                if let Some(s) = list("seeds", &a.seeds)? {
                    cfg.sweep.seeds = Some(s);
                }
                Ok::<_, CliError>(())
            })();
            grid.map_err(|e| (e, None))?;
            let csv = sepopt_cli::sweep(&cfg).map_err(|e| (e, None))?;
            emit(&cfg, &csv).map_err(|e| (e, None))?;
            Ok(EXIT_FEASIBLE)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err((e, out)) => {
            eprintln!("sepopt: {e}");
            let detail = serde_json::to_string_pretty(&e.to_json()).expect("json") + "\n";
            match out {
                Some(p) => {
                    let _ = std::fs::write(p, detail);
                }
                None if !matches!(e, CliError::Usage(_)) => print!("{detail}"),
                None => {}
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
