//! Application backends: block oracles and instance generators.

pub mod pev;
pub mod quadbox;
pub mod uc;

use std::sync::Arc;

use crate::model::{BlockDescriptor, BlockOracle, ModelError, OracleError, ProblemInstance};
use crate::reconstruct::Scheme;
use crate::trim::CarathMethod;

/// Rebuilds an oracle from its serialized description.
pub fn oracle_from_descriptor(desc: &BlockDescriptor) -> Result<Arc<dyn BlockOracle>, OracleError> {
    let bad =
        |e: serde_json::Error| OracleError::Infeasible(format!("bad {} params: {e}", desc.app));
    match desc.app.as_str() {
        uc::APP_NAME => {
            let p: uc::UcParams = serde_json::from_value(desc.params.clone()).map_err(bad)?;
            Ok(Arc::new(uc::UcOracle::new(p)?))
        }
        pev::APP_NAME => {
            let p: pev::PevParams = serde_json::from_value(desc.params.clone()).map_err(bad)?;
            Ok(Arc::new(pev::PevOracle::new(p)?))
        }
        quadbox::APP_NAME => {
            let p: quadbox::QuadBoxParams =
                serde_json::from_value(desc.params.clone()).map_err(bad)?;
            Ok(Arc::new(quadbox::QuadBoxOracle::new(p)?))
        }
        other => Err(OracleError::Infeasible(format!("unknown app `{other}`"))),
    }
}

/// Names accepted by [`generate`].
pub const GENERATORS: [&str; 3] = [uc::APP_NAME, pev::APP_NAME, quadbox::APP_NAME];

/// Random instance of application `app` with `n` blocks and `m` coupling rows
/// (the horizon for `uc` and `pev`).
pub fn generate(app: &str, n: usize, m: usize, seed: u64) -> Result<ProblemInstance, ModelError> {
    match app {
        uc::APP_NAME => uc::generate(n, m, seed),
        pev::APP_NAME => pev::generate(n, m, seed),
        quadbox::APP_NAME => quadbox::generate(n, m, seed),
        other => Err(ModelError::Invalid(format!("unknown app `{other}`"))),
    }
}

/// Coupling dimension used when none is given.
pub fn default_rows(app: &str) -> usize {
    match app {
        uc::APP_NAME => 10,
        pev::APP_NAME => 24,
        _ => 5,
    }
}

/// Application shared by every block, if the blocks describe themselves.
pub fn app_name(instance: &ProblemInstance) -> Option<String> {
    let mut name: Option<String> = None;
    for b in instance.blocks() {
        let app = b.oracle.descriptor()?.app;
        match &name {
            None => name = Some(app),
            Some(n) if *n == app => {}
            Some(_) => return None,
        }
    }
    name
}

fn param(desc: &BlockDescriptor, key: &str) -> Option<f64> {
    desc.params.get(key)?.as_f64()
}

/// Per-row base perturbation `θ(1)`: `max_i ḡ_i` for unit commitment,
/// `N · max_i P_i` for charging, zero otherwise.
pub fn default_theta_base(instance: &ProblemInstance) -> Vec<f64> {
    let m = instance.m();
    let max_param = |key: &str| {
        instance
            .blocks()
            .iter()
            .filter_map(|b| b.oracle.descriptor().and_then(|d| param(&d, key)))
            .fold(0.0f64, f64::max)
    };
    let scale = match app_name(instance).as_deref() {
        Some(uc::APP_NAME) => max_param("g_max"),
        Some(pev::APP_NAME) => m as f64 * max_param("rate"),
        _ => 0.0,
    };
    vec![scale; m]
}

/// Scheme and Carathéodory method used when a run does not name them.
pub fn default_strategy(instance: &ProblemInstance) -> (Scheme, CarathMethod) {
    match app_name(instance).as_deref() {
        Some(uc::APP_NAME) => (Scheme::Repair, CarathMethod::Exact),
        Some(pev::APP_NAME) => (Scheme::Max, CarathMethod::Mnp),
        _ => (Scheme::Average, CarathMethod::Exact),
    }
}
