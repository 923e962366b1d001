//! Unit commitment.
//!
//! Block `i` is one generating unit over a horizon of `N` steps with variables
//! `x = (u, g) ∈ R^{2N}`: `u_t ∈ {0, 1}` is the on/off state and `g_t` the
//! output, either `(0, 0)` or `(1, g ∈ [g_min, g_max])`. Per step cost:
//!
//! ```text
//!   ℓ(u_t, g_t) = c10 · u_{t-1}                                  if u_t = 0
//!               = c01 · (1 − u_{t-1}) + β g_t² + γ g_t + ω       if u_t = 1
//! ```
//!
//! with `u_0 = 0`. The demand `Σ_i g_t ≥ D_t` is written `−Σ_i g_t ≤ −D_t`, so
//! `A_i = [0 | −I_N]` and `b = −D`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{
    BlockDescriptor, BlockOracle, BlockSpec, Conjugate, ExtReal, ModelError, OracleError,
    ProblemInstance,
};

pub const APP_NAME: &str = "uc";

const BINARY_TOL: f64 = 1e-9;
/// Below this the averaged on-fraction counts as "off" during repair.
const REPAIR_ON_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcParams {
    /// Horizon `N`.
    pub horizon: usize,
    pub c01: f64,
    pub c10: f64,
    pub beta: f64,
    pub gamma: f64,
    pub omega: f64,
    pub g_min: f64,
    pub g_max: f64,
}

impl UcParams {
    pub fn validate(&self) -> Result<(), OracleError> {
        let vals = [
            self.c01, self.c10, self.beta, self.gamma, self.omega, self.g_min, self.g_max,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(OracleError::NonFinite);
        }
        if self.horizon == 0 {
            return Err(OracleError::Infeasible("empty horizon".into()));
        }
        if !(self.g_min > 0.0 && self.g_min < self.g_max) {
            return Err(OracleError::Infeasible("need 0 < g_min < g_max".into()));
        }
        if self.beta <= 0.0 {
            return Err(OracleError::Infeasible("need beta > 0".into()));
        }
        Ok(())
    }

    fn production(&self, g: f64) -> f64 {
        self.beta * g * g + self.gamma * g + self.omega
    }

    /// `max_{g ∈ [g_min, g_max]} (p − γ) g − β g² − ω` and its maximizer.
    fn best_output(&self, p: f64) -> (f64, f64) {
        let g = ((p - self.gamma) / (2.0 * self.beta)).clamp(self.g_min, self.g_max);
        (p * g - self.production(g), g)
    }

    fn production_range(&self) -> (f64, f64) {
        let lo = self.production(self.g_min);
        let hi = self.production(self.g_max);
        let vertex = (-self.gamma / (2.0 * self.beta)).clamp(self.g_min, self.g_max);
        (self.production(vertex).min(lo), lo.max(hi))
    }
}

#[derive(Debug, Clone)]
pub struct UcOracle {
    params: UcParams,
}

impl UcOracle {
    pub fn new(params: UcParams) -> Result<Self, OracleError> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &UcParams {
        &self.params
    }

    fn check(&self, v: &[f64]) -> Result<(), OracleError> {
        if v.len() != self.dim() {
            return Err(OracleError::Dimension {
                expected: self.dim(),
                got: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(OracleError::NonFinite);
        }
        Ok(())
    }

    /// Extremal total switching-plus-production cost over all schedules.
    /// `maximize = false` gives `inf f`.
    fn extremal_cost(&self, maximize: bool) -> f64 {
        let p = &self.params;
        let (qmin, qmax) = p.production_range();
        let q = if maximize { qmax } else { qmin };
        let pick = |a: f64, b: f64| if maximize { a.max(b) } else { a.min(b) };
        let mut off = 0.0;
        let mut on = p.c01 + q;
        for _ in 1..p.horizon {
            let next_off = pick(off, on + p.c10);
            let next_on = pick(off + p.c01, on) + q;
            off = next_off;
            on = next_on;
        }
        pick(off, on)
    }
}

impl BlockOracle for UcOracle {
    fn dim(&self) -> usize {
        2 * self.params.horizon
    }

    fn value(&self, x: &[f64]) -> ExtReal {
        let p = &self.params;
        let n = p.horizon;
        if x.len() != 2 * n {
            return ExtReal::PosInf;
        }
        let g_tol = BINARY_TOL * (1.0 + p.g_max);
        let mut prev_on = false;
        let mut total = 0.0;
        for t in 0..n {
            let (u, g) = (x[t], x[n + t]);
            if !u.is_finite() || !g.is_finite() {
                return ExtReal::PosInf;
            }
            if u.abs() <= BINARY_TOL && g.abs() <= g_tol {
                if prev_on {
                    total += p.c10;
                }
                prev_on = false;
            } else if (u - 1.0).abs() <= BINARY_TOL && g >= p.g_min - g_tol && g <= p.g_max + g_tol
            {
                if !prev_on {
                    total += p.c01;
                }
                total += p.production(g);
                prev_on = true;
            } else {
                return ExtReal::PosInf;
            }
        }
        ExtReal::Finite(total)
    }

    /// Forward recursion over (step, on/off) with backtracking. Ties prefer
    /// keeping the previous state; a final tie prefers "off".
    fn conjugate(&self, y: &[f64]) -> Result<Conjugate, OracleError> {
        self.check(y)?;
        let p = &self.params;
        let n = p.horizon;
        let (v, price) = y.split_at(n);
        let mut outputs = Vec::with_capacity(n);
        // came_from_*[k]: state at k−1 that realises the optimum ending in *.
        let mut off_prev_on = vec![false; n];
        let mut on_prev_on = vec![false; n];

        let (h, g) = p.best_output(price[0]);
        outputs.push(g);
        let mut off = 0.0;
        let mut on = v[0] - p.c01 + h;
        for k in 1..n {
            let (h, g) = p.best_output(price[k]);
            outputs.push(g);
            let switch_off = on - p.c10;
            let next_off = if switch_off > off {
                off_prev_on[k] = true;
                switch_off
            } else {
                off
            };
            let switch_on = off - p.c01;
            let next_on = if switch_on > on {
                switch_on
            } else {
                on_prev_on[k] = true;
                on
            } + v[k]
                + h;
            off = next_off;
            on = next_on;
        }

        let mut state_on = on > off;
        let value = if state_on { on } else { off };
        let mut x = vec![0.0; 2 * n];
        for k in (0..n).rev() {
            let was_on = if state_on {
                x[k] = 1.0;
                x[n + k] = outputs[k];
                k > 0 && on_prev_on[k]
            } else {
                k > 0 && off_prev_on[k]
            };
            state_on = was_on;
        }
        Ok(Conjugate { value, argmax: x })
    }

    /// Per step the cheapest of `(0,0)`, `(1,g_min)`, `(1,g_max)`; ties keep
    /// the earlier candidate in that order.
    fn linmin(&self, c: &[f64]) -> Result<Vec<f64>, OracleError> {
        self.check(c)?;
        let p = &self.params;
        let n = p.horizon;
        let mut x = vec![0.0; 2 * n];
        for t in 0..n {
            let (cu, cg) = (c[t], c[n + t]);
            let low = cu + cg * p.g_min;
            let high = cu + cg * p.g_max;
            let mut best = 0.0;
            if low < best {
                best = low;
                x[t] = 1.0;
                x[n + t] = p.g_min;
            }
            if high < best {
                x[t] = 1.0;
                x[n + t] = p.g_max;
            }
        }
        Ok(x)
    }

    /// Any step with a positive on-fraction is switched fully on at
    /// `clamp(g, g_min, g_max)`, which never lowers the output.
    fn repair(&self, x: &[f64]) -> Option<Vec<f64>> {
        let p = &self.params;
        let n = p.horizon;
        if x.len() != 2 * n {
            return None;
        }
        let mut out = vec![0.0; 2 * n];
        for t in 0..n {
            if x[t] > REPAIR_ON_TOL {
                out[t] = 1.0;
                out[n + t] = x[n + t].clamp(p.g_min, p.g_max);
            }
        }
        Some(out)
    }

    fn gamma_bound(&self) -> Option<f64> {
        Some(self.extremal_cost(true) - self.extremal_cost(false))
    }

    fn descriptor(&self) -> Option<BlockDescriptor> {
        Some(BlockDescriptor {
            app: APP_NAME.to_string(),
            params: serde_json::to_value(&self.params).ok()?,
        })
    }
}

/// `A_i = [0 | −I_N]`.
pub fn coupling_matrix(horizon: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(horizon, 2 * horizon);
    for t in 0..horizon {
        a[(t, horizon + t)] = -1.0;
    }
    a
}

/// Sampling ranges for random instances. `capacity` is divided by `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UcGenConfig {
    pub demand: (f64, f64),
    pub capacity: (f64, f64),
    pub g_max_factor: f64,
    pub g_min_factor: f64,
    pub beta: (f64, f64),
    pub gamma: (f64, f64),
    pub omega: (f64, f64),
    /// `c10 = c10_ratio · c01`.
    pub c10_ratio: f64,
}

impl Default for UcGenConfig {
    fn default() -> Self {
        Self {
            demand: (100.0, 300.0),
            capacity: (100.0, 300.0),
            g_max_factor: 2.0,
            g_min_factor: 0.5,
            beta: (1.0, 20.0),
            gamma: (3.0, 5.0),
            omega: (30.0, 50.0),
            c10_ratio: 0.25,
        }
    }
}

/// Raw generator output, kept for inspection and tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcData {
    pub units: Vec<UcParams>,
    /// Nominal per-unit capacity `p^i`.
    pub capacity: Vec<f64>,
    pub demand: Vec<f64>,
}

impl UcData {
    pub fn to_instance(&self) -> Result<ProblemInstance, ModelError> {
        let horizon = self.demand.len();
        let blocks = self
            .units
            .iter()
            .map(|p| {
                let oracle =
                    UcOracle::new(p.clone()).map_err(|e| ModelError::Invalid(e.to_string()))?;
                Ok(BlockSpec::new(coupling_matrix(horizon), Arc::new(oracle)))
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        ProblemInstance::new(blocks, self.demand.iter().map(|d| -d).collect())
    }

    pub fn max_g_max(&self) -> f64 {
        self.units.iter().map(|u| u.g_max).fold(0.0, f64::max)
    }
}

pub fn generate_data(n: usize, horizon: usize, seed: u64, cfg: &UcGenConfig) -> UcData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let demand: Vec<f64> = (0..horizon)
        .map(|_| rng.random_range(cfg.demand.0..=cfg.demand.1))
        .collect();
    let mut capacity = Vec::with_capacity(n);
    let mut coeffs = Vec::with_capacity(n);
    for _ in 0..n {
        let p = rng.random_range(cfg.capacity.0..=cfg.capacity.1) / n as f64;
        let beta = rng.random_range(cfg.beta.0..=cfg.beta.1);
        let gamma = rng.random_range(cfg.gamma.0..=cfg.gamma.1);
        let omega = rng.random_range(cfg.omega.0..=cfg.omega.1);
        capacity.push(p);
        coeffs.push((beta, gamma, omega));
    }
    let c01 = capacity
        .iter()
        .zip(&coeffs)
        .map(|(p, (b, g, o))| b * p * p + g * p + o)
        .sum::<f64>()
        / (2.0 * n as f64);
    let units = capacity
        .iter()
        .zip(&coeffs)
        .map(|(&p, &(beta, gamma, omega))| UcParams {
            horizon,
            c01,
            c10: cfg.c10_ratio * c01,
            beta,
            gamma,
            omega,
            g_min: cfg.g_min_factor * p,
            g_max: cfg.g_max_factor * p,
        })
        .collect();
    UcData {
        units,
        capacity,
        demand,
    }
}

pub fn generate(n: usize, horizon: usize, seed: u64) -> Result<ProblemInstance, ModelError> {
    if n == 0 || horizon == 0 {
        return Err(ModelError::Invalid("n and N must be positive".into()));
    }
    generate_data(n, horizon, seed, &UcGenConfig::default()).to_instance()
}
