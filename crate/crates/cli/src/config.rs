use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sepopt::apps;
use sepopt::pipeline::PipelineConfig;
use sepopt::reconstruct::PerturbationConfig;
use sepopt::ProblemInstance;

use crate::CliError;

/// Where the instance comes from: a file or a generator, never both.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceSource {
    pub file: Option<PathBuf>,
    pub app: Option<String>,
    pub n: Option<usize>,
    /// Coupling rows (horizon length for `uc` and `pev`).
    #[serde(rename = "N")]
    pub m: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub n: Option<Vec<usize>>,
    #[serde(rename = "K")]
    pub k: Option<Vec<usize>>,
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub instance: InstanceSource,
    /// Seeds both the generator and the pipeline; overrides `pipeline.seed`.
    pub seed: u64,
    pub pipeline: PipelineConfig,
    /// Escalate the right-hand-side perturbation until the candidate is
    /// feasible for the original constraints.
    pub perturb: bool,
    pub perturbation: PerturbationConfig,
    pub sweep: SweepGrid,
    pub out: Option<PathBuf>,
    pub timings: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            instance: InstanceSource::default(),
            seed: 0,
            pipeline: PipelineConfig::default(),
            perturb: true,
            perturbation: PerturbationConfig::default(),
            sweep: SweepGrid::default(),
            out: None,
            timings: true,
        }
    }
}

impl RunConfig {
    /// Reads JSON when the extension is `.json`, TOML otherwise.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            seed: self.seed,
            ..self.pipeline.clone()
        }
    }

    pub fn instance(&self) -> Result<ProblemInstance, CliError> {
        self.instance_with(self.instance.n, self.seed)
    }

    /// Builds the instance, with `n` overriding the configured block count.
    pub fn instance_with(&self, n: Option<usize>, seed: u64) -> Result<ProblemInstance, CliError> {
        let src = &self.instance;
        match (&src.file, &src.app) {
            (Some(_), Some(_)) => Err(CliError::Usage(
                "give either an instance file or an app, not both".into(),
            )),
            (None, None) => Err(CliError::Usage(
                "no instance: give --config file or --app".into(),
            )),
            (Some(path), None) => {
                if src.n.is_some() || src.m.is_some() || n != src.n {
                    return Err(CliError::Usage(
                        "--n/--N only apply to generated instances".into(),
                    ));
                }
                sepopt::instance_io::load(path).map_err(|e| CliError::Io(e.to_string()))
            }
            (None, Some(app)) => {
                check_app(app)?;
                let n = n.unwrap_or(50);
                let m = src.m.unwrap_or_else(|| apps::default_rows(app));
                if n == 0 || m == 0 {
                    return Err(CliError::Usage("n and N must be positive".into()));
                }
                apps::generate(app, n, m, seed).map_err(|e| CliError::Model(e.to_string()))
            }
        }
    }
}

pub fn check_app(app: &str) -> Result<(), CliError> {
    if apps::GENERATORS.contains(&app) {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "unknown app `{app}` (expected one of {})",
            apps::GENERATORS.join(", ")
        )))
    }
}

/// Parses `1,2,3`; an empty string gives an empty list.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|e| format!("`{t}`: {e}")))
        .collect()
}
