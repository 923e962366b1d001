//! Euclidean projection onto the probability simplex and simplex-constrained
//! least squares `min_{β ∈ Δ} ½‖Sβ − target‖²`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{mnp, ApproxConfig};
use crate::caratheodory::ConicInput;

/// Projection onto `{β ≥ 0, Σβ = 1}` by sorting and thresholding.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &s) in sorted.iter().enumerate() {
        cumsum += s;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerConfig {
    /// Stop when `‖β − P(β − ∇f(β)/L)‖ · L ≤ tol · (1 + ‖Sᵀtarget‖)`.
    pub tol: f64,
    pub max_iter: usize,
    pub power_iters: usize,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 5000,
            power_iters: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexLsResult {
    pub beta: Vec<f64>,
    /// `½‖Sβ − target‖²`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Quadratic `½βᵀGβ − cᵀβ + ½‖target‖²` built from the Gram matrix of the
/// columns.
#[derive(Debug, Clone)]
pub struct SimplexQp {
    t: usize,
    gram: Vec<f64>,
    lin: Vec<f64>,
    const_term: f64,
}

impl SimplexQp {
    pub fn new(columns: &[Vec<f64>], target: &[f64]) -> Self {
        let mut qp = Self {
            t: 0,
            gram: Vec::new(),
            lin: Vec::new(),
            const_term: 0.5 * target.iter().map(|v| v * v).sum::<f64>(),
        };
        for c in columns {
            qp.push(columns, c, target);
        }
        qp
    }

    /// Adds the column `col`, whose inner products with the existing columns
    /// are read from `existing`.
    pub fn push(&mut self, existing: &[Vec<f64>], col: &[f64], target: &[f64]) {
        let t = self.t;
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut gram = vec![0.0; (t + 1) * (t + 1)];
        for i in 0..t {
            gram[i * (t + 1)..i * (t + 1) + t].copy_from_slice(&self.gram[i * t..(i + 1) * t]);
        }
        for (i, e) in existing.iter().take(t).enumerate() {
            let g = dot(e, col);
            gram[i * (t + 1) + t] = g;
            gram[t * (t + 1) + i] = g;
        }
        gram[t * (t + 1) + t] = dot(col, col);
        self.gram = gram;
        self.lin.push(dot(col, target));
        self.t = t + 1;
    }

    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        self.t == 0
    }

    fn grad(&self, beta: &[f64], out: &mut [f64]) {
        let t = self.t;
        for i in 0..t {
            let row = &self.gram[i * t..(i + 1) * t];
            out[i] = row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>() - self.lin[i];
        }
    }

    pub fn objective(&self, beta: &[f64]) -> f64 {
        let mut g = vec![0.0; self.t];
        self.grad(beta, &mut g);
        // ½βᵀGβ − cᵀβ = ½ βᵀ(Gβ − c) − ½ cᵀβ
        let quad: f64 = beta.iter().zip(&g).map(|(b, x)| b * x).sum();
        let lin: f64 = beta.iter().zip(&self.lin).map(|(b, c)| b * c).sum();
        (0.5 * quad - 0.5 * lin + self.const_term).max(0.0)
    }

    /// Largest eigenvalue of the Gram matrix by power iteration.
    fn lipschitz(&self, iters: usize) -> f64 {
        let t = self.t;
        let mut v = vec![1.0 / (t as f64).sqrt(); t];
        let mut w = vec![0.0; t];
        let mut lam = 0.0;
        for _ in 0..iters {
            for i in 0..t {
                w[i] = self.gram[i * t..(i + 1) * t]
                    .iter()
                    .zip(&v)
                    .map(|(a, b)| a * b)
                    .sum();
            }
            let nrm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nrm == 0.0 {
                return 0.0;
            }
            lam = nrm;
            for (a, b) in v.iter_mut().zip(&w) {
                *a = b / nrm;
            }
        }
        // power iteration underestimates; pad so 1/L stays a safe step
        let diag_max = (0..t).map(|i| self.gram[i * t + i]).fold(0.0, f64::max);
        (lam * 1.01)
            .max(diag_max)
            .min(self.gram.iter().map(|g| g.abs()).sum::<f64>().max(lam))
    }

    /// Accelerated projected gradient with adaptive restart from `start`.
    /// The returned iterate is the best one seen, so the objective never
    /// exceeds that of `start`.
    pub fn solve(&self, start: &[f64], cfg: &InnerConfig) -> SimplexLsResult {
        let t = self.t;
        let mut x = project_simplex(start);
        if t == 1 {
            return SimplexLsResult {
                objective: self.objective(&x),
                beta: x,
                iterations: 0,
                converged: true,
            };
        }
        let l = self.lipschitz(cfg.power_iters);
        if l <= 0.0 {
            return SimplexLsResult {
                objective: self.objective(&x),
                beta: x,
                iterations: 0,
                converged: true,
            };
        }
        let scale = 1.0 + self.lin.iter().map(|c| c * c).sum::<f64>().sqrt();
        let mut best = (self.objective(&x), x.clone());
        let mut y = x.clone();
        let mut momentum = 1.0f64;
        let mut g = vec![0.0; t];
        let mut step = vec![0.0; t];
        let mut prev_obj = best.0;
        for it in 1..=cfg.max_iter {
            self.grad(&y, &mut g);
            for i in 0..t {
                step[i] = y[i] - g[i] / l;
            }
            let x_new = project_simplex(&step);
            // fixed-point residual at the extrapolated point
            let kkt = l * x_new
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let obj = self.objective(&x_new);
            if obj < best.0 {
                best = (obj, x_new.clone());
            }
            if kkt <= cfg.tol * scale {
                return SimplexLsResult {
                    objective: best.0,
                    beta: best.1,
                    iterations: it,
                    converged: true,
                };
            }
            let m_new = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            if obj > prev_obj {
                // restart
                momentum = 1.0;
                y = x_new.clone();
            } else {
                let w = (momentum - 1.0) / m_new;
                for i in 0..t {
                    y[i] = x_new[i] + w * (x_new[i] - x[i]);
                }
                momentum = m_new;
            }
            prev_obj = obj;
            x = x_new;
        }
        SimplexLsResult {
            objective: best.0,
            beta: best.1,
            iterations: cfg.max_iter,
            converged: false,
        }
    }
}

/// `argmin_{β ∈ Δ} ½‖Sβ − target‖²` for columns `S`: projected gradient
/// started from the better of `start` and an active-set solution.
pub fn simplex_ls_from(
    qp: &SimplexQp,
    columns: &[Vec<f64>],
    target: &[f64],
    start: &[f64],
    cfg: &InnerConfig,
) -> SimplexLsResult {
    let seed = active_set_solution(columns, target);
    let start = if qp.objective(&seed) < qp.objective(start) {
        seed
    } else {
        start.to_vec()
    };
    qp.solve(&start, cfg)
}

pub fn simplex_ls(columns: &[Vec<f64>], target: &[f64], cfg: &InnerConfig) -> SimplexLsResult {
    let qp = SimplexQp::new(columns, target);
    let t = columns.len();
    simplex_ls_from(&qp, columns, target, &vec![1.0 / t as f64; t], cfg)
}

/// Min-norm-point solve restricted to `columns`; finite, so it does not
/// suffer from the conditioning of the Gram matrix the way gradient steps do.
fn active_set_solution(columns: &[Vec<f64>], target: &[f64]) -> Vec<f64> {
    let t = columns.len();
    let p = target.len();
    let w = DMatrix::from_fn(p, t, |r, c| columns[c][r]);
    let src = ConicInput::from_combination(w, vec![1.0; t]);
    let cfg = ApproxConfig {
        t: 10 * t + 10,
        tol: 1e-15,
        ..ApproxConfig::default()
    };
    let res = mnp(&src, target, &cfg);
    let mut beta = vec![0.0; t];
    for (&j, &b) in res.indices.iter().zip(&res.beta) {
        beta[j] = b;
    }
    beta
}
