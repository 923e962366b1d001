//! Separable convex quadratic on a box: `f(x) = Σ_j ½ q_j x_j² + c_j x_j`,
//! `lo ≤ x ≤ hi`.
//!
//! Convex test bed for the pipeline: the domain is convex, so the averaged
//! reconstruction is always feasible and `ρ(f) = 0`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::model::{
    BlockDescriptor, BlockOracle, BlockSpec, Conjugate, ExtReal, ModelError, OracleError,
    ProblemInstance,
};

pub const APP_NAME: &str = "quadratic-box";

const BOX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadBoxParams {
    pub q: Vec<f64>,
    pub c: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl QuadBoxParams {
    pub fn validate(&self) -> Result<(), OracleError> {
        let d = self.q.len();
        for len in [self.c.len(), self.lo.len(), self.hi.len()] {
            if len != d {
                return Err(OracleError::Dimension {
                    expected: d,
                    got: len,
                });
            }
        }
        let all = self.q.iter().chain(&self.c).chain(&self.lo).chain(&self.hi);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(OracleError::NonFinite);
        }
        if self.q.iter().any(|&q| q < 0.0) {
            return Err(OracleError::Infeasible("negative curvature".into()));
        }
        if self.lo.iter().zip(&self.hi).any(|(l, h)| l > h) {
            return Err(OracleError::Infeasible("empty box".into()));
        }
        Ok(())
    }

    fn coord_value(&self, j: usize, x: f64) -> f64 {
        0.5 * self.q[j] * x * x + self.c[j] * x
    }
}

#[derive(Debug, Clone)]
pub struct QuadBoxOracle {
    params: QuadBoxParams,
}

impl QuadBoxOracle {
    pub fn new(params: QuadBoxParams) -> Result<Self, OracleError> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &QuadBoxParams {
        &self.params
    }

    fn check_dim(&self, v: &[f64]) -> Result<(), OracleError> {
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
}

impl BlockOracle for QuadBoxOracle {
    fn dim(&self) -> usize {
        self.params.q.len()
    }

    fn value(&self, x: &[f64]) -> ExtReal {
        if x.len() != self.dim() {
            return ExtReal::PosInf;
        }
        let p = &self.params;
        let mut total = 0.0;
        for (j, &xj) in x.iter().enumerate() {
            let slack = BOX_TOL * (1.0 + p.lo[j].abs().max(p.hi[j].abs()));
            if !xj.is_finite() || xj < p.lo[j] - slack || xj > p.hi[j] + slack {
                return ExtReal::PosInf;
            }
            total += p.coord_value(j, xj);
        }
        ExtReal::Finite(total)
    }

    fn conjugate(&self, y: &[f64]) -> Result<Conjugate, OracleError> {
        self.check_dim(y)?;
        let p = &self.params;
        let mut value = 0.0;
        let argmax: Vec<f64> = y
            .iter()
            .enumerate()
            .map(|(j, &yj)| {
                let slope = yj - p.c[j];
                let x = if p.q[j] > 0.0 {
                    (slope / p.q[j]).clamp(p.lo[j], p.hi[j])
                } else if slope > 0.0 {
                    p.hi[j]
                } else {
                    p.lo[j]
                };
                value += slope * x - 0.5 * p.q[j] * x * x;
                x
            })
            .collect();
        Ok(Conjugate { value, argmax })
    }

    fn linmin(&self, c: &[f64]) -> Result<Vec<f64>, OracleError> {
        self.check_dim(c)?;
        let p = &self.params;
        Ok(c.iter()
            .enumerate()
            .map(|(j, &cj)| if cj < 0.0 { p.hi[j] } else { p.lo[j] })
            .collect())
    }

    fn repair(&self, x: &[f64]) -> Option<Vec<f64>> {
        // convex domain: the point itself, clipped against rounding
        let p = &self.params;
        Some(
            x.iter()
                .enumerate()
                .map(|(j, &v)| v.clamp(p.lo[j], p.hi[j]))
                .collect(),
        )
    }

    fn gamma_bound(&self) -> Option<f64> {
        let p = &self.params;
        let mut range = 0.0;
        for j in 0..self.dim() {
            let at_lo = p.coord_value(j, p.lo[j]);
            let at_hi = p.coord_value(j, p.hi[j]);
            let sup = at_lo.max(at_hi);
            let inf = if p.q[j] > 0.0 {
                p.coord_value(j, (-p.c[j] / p.q[j]).clamp(p.lo[j], p.hi[j]))
            } else {
                at_lo.min(at_hi)
            };
            range += sup - inf;
        }
        Some(range)
    }

    fn descriptor(&self) -> Option<BlockDescriptor> {
        Some(BlockDescriptor {
            app: APP_NAME.to_string(),
            params: serde_json::to_value(&self.params).ok()?,
        })
    }
}

/// Generator settings for random convex instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadBoxGenConfig {
    /// Variables per block.
    pub dim: usize,
    pub q_range: (f64, f64),
    pub c_range: (f64, f64),
    pub half_width: f64,
    /// Slack added to `Σ A_i x̂_i` for a random interior `x̂`.
    pub slack_range: (f64, f64),
}

impl Default for QuadBoxGenConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            q_range: (0.5, 2.0),
            c_range: (-1.0, 1.0),
            half_width: 1.0,
            slack_range: (0.0, 0.5),
        }
    }
}

/// Random convex instance with `n` blocks and `m` coupling rows. The
/// right-hand side is built around a strictly interior point, so the
/// relaxation satisfies Slater's condition.
pub fn generate(n: usize, m: usize, seed: u64) -> Result<ProblemInstance, ModelError> {
    generate_with(n, m, seed, &QuadBoxGenConfig::default())
}

pub fn generate_with(
    n: usize,
    m: usize,
    seed: u64,
    cfg: &QuadBoxGenConfig,
) -> Result<ProblemInstance, ModelError> {
    if n == 0 || m == 0 || cfg.dim == 0 {
        return Err(ModelError::Invalid("n, m and dim must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = cfg.dim;
    let w = cfg.half_width;
    let mut b = vec![0.0; m];
    let mut blocks = Vec::with_capacity(n);
    for _ in 0..n {
        let a = DMatrix::from_fn(m, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let params = QuadBoxParams {
            q: (0..d)
                .map(|_| rng.random_range(cfg.q_range.0..cfg.q_range.1))
                .collect(),
            c: (0..d)
                .map(|_| rng.random_range(cfg.c_range.0..cfg.c_range.1))
                .collect(),
            lo: vec![-w; d],
            hi: vec![w; d],
        };
        let interior: Vec<f64> = (0..d)
            .map(|_| rng.random_range(-0.5 * w..0.5 * w))
            .collect();
        let spec = BlockSpec::new(
            a,
            Arc::new(QuadBoxOracle::new(params).map_err(|e| ModelError::Invalid(e.to_string()))?),
        );
        for (bj, img) in b.iter_mut().zip(spec.image(&interior)) {
            *bj += img;
        }
        blocks.push(spec);
    }
    for bj in &mut b {
        *bj += rng.random_range(cfg.slack_range.0..=cfg.slack_range.1);
    }
    ProblemInstance::new(blocks, b)
}

/// `f(x) = x²` on `[-1, 1]`, a handy scalar fixture.
pub fn square_on_unit_interval() -> QuadBoxOracle {
    QuadBoxOracle::new(QuadBoxParams {
        q: vec![2.0],
        c: vec![0.0],
        lo: vec![-1.0],
        hi: vec![1.0],
    })
    .expect("valid parameters")
}
