//! Plug-in electric vehicle charging.
//!
//! Block `i` is one vehicle with a binary charging schedule `u ∈ {0,1}^N`.
//! Charging at rate `P` for one interval adds `P Δ ξ` of energy; the schedule
//! must bring the battery from `E_init` to at least `E_ref` by the end of the
//! horizon and never exceed `E_max`. Cost is `f(u) = Σ_k P C_k u_k`. Network
//! limits `Σ_i P_i u_{i,k} ≤ P^max_k` couple the vehicles.
//!
//! Since charging only adds energy, the running cap binds only at the last
//! step, so the domain is "schedules whose count `c` lies in
//! `[c_min, c_max]`" and both oracles are greedy selections.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{
    BlockDescriptor, BlockOracle, BlockSpec, Conjugate, ExtReal, ModelError, OracleError,
    ProblemInstance,
};

pub const APP_NAME: &str = "pev";

const BINARY_TOL: f64 = 1e-9;
const COUNT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PevParams {
    /// Interval length `Δ` in hours.
    pub delta: f64,
    /// Charging rate `P` in kW.
    pub rate: f64,
    /// Conversion efficiency `ξ`.
    pub efficiency: f64,
    pub e_init: f64,
    pub e_ref: f64,
    pub e_max: f64,
    /// Price per interval `C_k`; its length is the horizon `N`.
    pub price: Vec<f64>,
}

impl PevParams {
    pub fn horizon(&self) -> usize {
        self.price.len()
    }

    fn energy_step(&self) -> f64 {
        self.rate * self.delta * self.efficiency
    }

    /// Admissible number of charging intervals.
    pub fn count_range(&self) -> Result<(usize, usize), OracleError> {
        let step = self.energy_step();
        let need = ((self.e_ref - self.e_init) / step - COUNT_TOL)
            .ceil()
            .max(0.0);
        let room = ((self.e_max - self.e_init) / step + COUNT_TOL).floor();
        let c_max = room.min(self.horizon() as f64);
        if room < 0.0 || need > c_max {
            return Err(OracleError::Infeasible(format!(
                "no schedule reaches E_ref={} without exceeding E_max={}",
                self.e_ref, self.e_max
            )));
        }
        Ok((need as usize, c_max as usize))
    }

    pub fn validate(&self) -> Result<(usize, usize), OracleError> {
        let scalars = [
            self.delta,
            self.rate,
            self.efficiency,
            self.e_init,
            self.e_ref,
            self.e_max,
        ];
        if scalars.iter().chain(&self.price).any(|v| !v.is_finite()) {
            return Err(OracleError::NonFinite);
        }
        if self.price.is_empty() {
            return Err(OracleError::Infeasible("empty horizon".into()));
        }
        if self.delta <= 0.0 || self.rate <= 0.0 || self.efficiency <= 0.0 {
            return Err(OracleError::Infeasible(
                "delta, rate and efficiency must be positive".into(),
            ));
        }
        if self.e_init > self.e_max {
            return Err(OracleError::Infeasible("E_init exceeds E_max".into()));
        }
        self.count_range()
    }
}

#[derive(Debug, Clone)]
pub struct PevOracle {
    params: PevParams,
    c_min: usize,
    c_max: usize,
}

impl PevOracle {
    pub fn new(params: PevParams) -> Result<Self, OracleError> {
        let (c_min, c_max) = params.validate()?;
        Ok(Self {
            params,
            c_min,
            c_max,
        })
    }

    pub fn params(&self) -> &PevParams {
        &self.params
    }

    pub fn count_range(&self) -> (usize, usize) {
        (self.c_min, self.c_max)
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

    /// Maximizes `Σ gain_k u_k` over admissible schedules: the `c_min` best
    /// steps are forced, further steps are taken while their gain is
    /// positive. Ties go to the lower index.
    fn greedy(&self, gain: &[f64]) -> Vec<f64> {
        let mut order: Vec<usize> = (0..gain.len()).collect();
        order.sort_by(|&a, &b| gain[b].total_cmp(&gain[a]).then(a.cmp(&b)));
        let mut u = vec![0.0; gain.len()];
        for (rank, &k) in order.iter().enumerate() {
            if rank >= self.c_max || (rank >= self.c_min && gain[k] <= 0.0) {
                break;
            }
            u[k] = 1.0;
        }
        u
    }

    fn step_cost(&self, k: usize) -> f64 {
        self.params.rate * self.params.price[k]
    }
}

impl BlockOracle for PevOracle {
    fn dim(&self) -> usize {
        self.params.horizon()
    }

    fn value(&self, x: &[f64]) -> ExtReal {
        if x.len() != self.dim() {
            return ExtReal::PosInf;
        }
        let mut count = 0usize;
        let mut total = 0.0;
        for (k, &u) in x.iter().enumerate() {
            if (u - 1.0).abs() <= BINARY_TOL {
                count += 1;
                total += self.step_cost(k);
            } else if u.abs() > BINARY_TOL || !u.is_finite() {
                return ExtReal::PosInf;
            }
        }
        if count < self.c_min || count > self.c_max {
            return ExtReal::PosInf;
        }
        ExtReal::Finite(total)
    }

    fn conjugate(&self, y: &[f64]) -> Result<Conjugate, OracleError> {
        self.check(y)?;
        let gain: Vec<f64> = (0..self.dim()).map(|k| y[k] - self.step_cost(k)).collect();
        let argmax = self.greedy(&gain);
        // summed in index order so the value is reproducible bit for bit
        let value = argmax
            .iter()
            .zip(&gain)
            .filter(|(u, _)| **u == 1.0)
            .map(|(_, g)| g)
            .sum();
        Ok(Conjugate { value, argmax })
    }

    fn linmin(&self, c: &[f64]) -> Result<Vec<f64>, OracleError> {
        self.check(c)?;
        let gain: Vec<f64> = c.iter().map(|v| -v).collect();
        Ok(self.greedy(&gain))
    }

    fn gamma_bound(&self) -> Option<f64> {
        let mut costs: Vec<f64> = (0..self.dim()).map(|k| self.step_cost(k)).collect();
        costs.sort_by(|a, b| a.total_cmp(b));
        let prefix = |it: &mut dyn Iterator<Item = f64>| -> Vec<f64> {
            let mut acc = 0.0;
            let mut out = vec![0.0];
            for v in it {
                acc += v;
                out.push(acc);
            }
            out
        };
        let cheapest = prefix(&mut costs.iter().copied());
        let dearest = prefix(&mut costs.iter().rev().copied());
        let counts = self.c_min..=self.c_max;
        let sup = counts
            .clone()
            .map(|c| dearest[c])
            .fold(f64::NEG_INFINITY, f64::max);
        let inf = counts.map(|c| cheapest[c]).fold(f64::INFINITY, f64::min);
        Some(sup - inf)
    }

    fn descriptor(&self) -> Option<BlockDescriptor> {
        Some(BlockDescriptor {
            app: APP_NAME.to_string(),
            params: serde_json::to_value(&self.params).ok()?,
        })
    }
}

/// Generator defaults. The charging-problem literature leaves several of
/// these unspecified, so every value is overridable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PevGenConfig {
    pub rate: (f64, f64),
    pub efficiency: f64,
    pub delta: f64,
    pub e_init: (f64, f64),
    pub e_ref: (f64, f64),
    /// `E_max = E_ref + U(e_max_margin)`, raised if needed so every block is
    /// feasible.
    pub e_max_margin: (f64, f64),
    /// `P^max_k = pmax_factor · Σ_i P_i`.
    pub pmax_factor: f64,
}

impl Default for PevGenConfig {
    fn default() -> Self {
        Self {
            rate: (3.0, 5.0),
            efficiency: 0.9,
            delta: 0.25,
            e_init: (2.0, 8.0),
            e_ref: (8.0, 12.0),
            e_max_margin: (0.0, 2.0),
            pmax_factor: 0.6,
        }
    }
}

/// Fixed diurnal price curve (currency per kWh) sampled at `horizon` points
/// across one day: cheap overnight, peaks late morning and early evening.
pub fn diurnal_price(horizon: usize) -> Vec<f64> {
    use std::f64::consts::PI;
    (0..horizon)
        .map(|k| {
            let hour = 24.0 * (k as f64 + 0.5) / horizon as f64;
            0.15 + 0.05 * (2.0 * PI * (hour - 10.0) / 24.0).sin()
                + 0.03 * (4.0 * PI * (hour - 7.0) / 24.0).sin()
                + 0.001 * hour / 24.0
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PevData {
    pub vehicles: Vec<PevParams>,
    pub p_max: Vec<f64>,
}

impl PevData {
    pub fn to_instance(&self) -> Result<ProblemInstance, ModelError> {
        let blocks = self
            .vehicles
            .iter()
            .map(|p| {
                let oracle =
                    PevOracle::new(p.clone()).map_err(|e| ModelError::Invalid(e.to_string()))?;
                let a = DMatrix::from_diagonal_element(p.horizon(), p.horizon(), p.rate);
                Ok(BlockSpec::new(a, Arc::new(oracle)))
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        ProblemInstance::new(blocks, self.p_max.clone())
    }

    pub fn max_rate(&self) -> f64 {
        self.vehicles.iter().map(|v| v.rate).fold(0.0, f64::max)
    }
}

pub fn generate_data(n: usize, horizon: usize, seed: u64, cfg: &PevGenConfig) -> PevData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let price = diurnal_price(horizon);
    let mut vehicles = Vec::with_capacity(n);
    for _ in 0..n {
        let rate = rng.random_range(cfg.rate.0..=cfg.rate.1);
        let e_init = rng.random_range(cfg.e_init.0..=cfg.e_init.1);
        let mut e_ref = rng.random_range(cfg.e_ref.0..=cfg.e_ref.1);
        let margin = rng.random_range(cfg.e_max_margin.0..=cfg.e_max_margin.1);
        let step = rate * cfg.delta * cfg.efficiency;
        // keep E_ref reachable within the horizon
        e_ref = e_ref.min(e_init + horizon as f64 * step);
        let need = ((e_ref - e_init) / step - COUNT_TOL).ceil().max(0.0);
        let e_max = (e_ref + margin).max(e_init + need * step);
        vehicles.push(PevParams {
            delta: cfg.delta,
            rate,
            efficiency: cfg.efficiency,
            e_init,
            e_ref,
            e_max,
            price: price.clone(),
        });
    }
    let total: f64 = vehicles.iter().map(|v| v.rate).sum();
    PevData {
        vehicles,
        p_max: vec![cfg.pmax_factor * total; horizon],
    }
}

pub fn generate(n: usize, horizon: usize, seed: u64) -> Result<ProblemInstance, ModelError> {
    if n == 0 || horizon == 0 {
        return Err(ModelError::Invalid("n and N must be positive".into()));
    }
    generate_data(n, horizon, seed, &PevGenConfig::default()).to_instance()
}
