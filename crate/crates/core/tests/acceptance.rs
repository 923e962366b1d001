//! End-to-end acceptance checks. Runs without the libtest harness so that
//! every criterion prints exactly one `PASS`/`FAIL` line; exits nonzero if
//! any criterion fails.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sepopt::approx::{fcfw, mnp, ApproxConfig};
use sepopt::apps::pev::{PevOracle, PevParams};
use sepopt::apps::uc::{UcOracle, UcParams};
use sepopt::apps::{pev, quadbox, uc};
use sepopt::caratheodory::{exact_caratheodory, ConicInput};
use sepopt::fw::{run_stage1, sample_diameter, FwConfig};
use sepopt::pipeline::{self, PipelineConfig};
use sepopt::qr_update::QrState;
use sepopt::reconstruct::{solve_with_perturbation, PerturbationConfig, PerturbationError};
use sepopt::trim::CarathMethod;
use sepopt::{evaluate, plus_norm, BlockOracle};

/// `(objective, v*)` of a final solution, for the weak-duality sentinel.
type DualityRecord = (String, f64, f64);

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn with_k(k: usize) -> PipelineConfig {
    PipelineConfig {
        fw: FwConfig {
            k,
            ..FwConfig::default()
        },
        ..PipelineConfig::default()
    }
}

// 1

fn exact_caratheodory_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut bad = Vec::new();
    let mut worst = 0.0f64;
    for case in 0..100u64 {
        let p = rng.random_range(3..=12);
        let n = rng.random_range(p + 1..=10 * p);
        let w = gaussian(&mut rng, p, n);
        let lam: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let input = ConicInput::from_combination(w, lam);
        let out = match exact_caratheodory(&input, case) {
            Ok(o) => o,
            Err(e) => {
                bad.push(format!("case {case}: {e}"));
                continue;
            }
        };
        let mut recon = vec![0.0; p];
        for (&j, &a) in out.kept.iter().zip(&out.alpha) {
            for (r, v) in recon.iter_mut().zip(input.w.column(j).iter()) {
                *r += a * v;
            }
        }
        let diff: Vec<f64> = recon
            .iter()
            .zip(&input.w_star)
            .map(|(a, b)| a - b)
            .collect();
        let rel = norm(&diff) / (1.0 + norm(&input.w_star));
        worst = worst.max(rel);
        if out.kept.len() > p || rel > 1e-8 || out.alpha.iter().any(|&a| a < 0.0) {
            bad.push(format!(
                "case {case}: size {} p {p} residual {rel:e}",
                out.kept.len()
            ));
        }
        if exact_caratheodory(&input, case).ok().as_ref() != Some(&out) {
            bad.push(format!("case {case}: not deterministic"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        bad.is_empty() && secs < 10.0,
        format!("100 cases, worst relative residual {worst:.2e}, {secs:.2}s, violations {bad:?}"),
    )
}

// 2

fn trim_structure() -> Outcome {
    let mut bad = Vec::new();
    let mut worst_sum = 0.0f64;
    for run in 0..20u64 {
        let inst = if run % 2 == 0 {
            uc::generate(20, 6, run).unwrap()
        } else {
            quadbox::generate(30, 8, run).unwrap()
        };
        let (n, m) = (inst.n(), inst.m());
        let cfg = PipelineConfig {
            method: Some(CarathMethod::Exact),
            seed: run,
            ..with_k(1000)
        };
        let out = match pipeline::solve(&inst, &cfg) {
            Ok(o) => o,
            Err(e) => {
                bad.push(format!("run {run}: {e}"));
                continue;
            }
        };
        let trim = &out.trim;
        for g in &trim.groups {
            let s: f64 = g.iter().map(|(a, _)| a).sum();
            worst_sum = worst_sum.max((s - 1.0).abs());
        }
        let sums_ok = trim
            .groups
            .iter()
            .all(|g| (g.iter().map(|(a, _)| a).sum::<f64>() - 1.0).abs() <= 1e-10);
        if !sums_ok || trim.entry_count() > n + m + 1 || trim.nontrivial_count > m + 1 {
            bad.push(format!(
                "run {run}: entries {} (≤ {}), q {} (≤ {})",
                trim.entry_count(),
                n + m + 1,
                trim.nontrivial_count,
                m + 1
            ));
        }
    }
    Outcome::new(
        bad.is_empty(),
        format!("20 runs, worst |Σα − 1| {worst_sum:.2e}, violations {bad:?}"),
    )
}

// 3

fn fw_rate_envelope() -> Outcome {
    let start = Instant::now();
    let mut bad = Vec::new();
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let inst = quadbox::generate(
            10 + (seed as usize % 3) * 5,
            3 + seed as usize % 4,
            100 + seed,
        )
        .unwrap();
        let d = sample_diameter(&inst, 2000, seed).unwrap();
        let v = sepopt::dual::solve_dual(&inst, &Default::default())
            .unwrap()
            .v_star;
        for k in [10usize, 100, 1000] {
            let cfg = FwConfig {
                k,
                ..FwConfig::default()
            };
            let trace = run_stage1(&inst, v, &cfg).unwrap();
            let r = trace.residual();
            let ratio = r * r * (k + 1) as f64 / (4.0 * d * d);
            worst = worst.max(ratio);
            if ratio > 1.0 {
                bad.push(format!("seed {seed} K {k}: ratio {ratio:.3}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        bad.is_empty() && secs < 60.0,
        format!("60 runs, worst ‖z−z*‖₊²(K+1)/4D̂² {worst:.3}, {secs:.1}s, violations {bad:?}"),
    )
}

// 4

fn convex_main_result(duality: &mut Vec<DualityRecord>) -> Outcome {
    let k = 10_000usize;
    let mut bad = Vec::new();
    let (mut worst_ratio, mut worst_identity) = (f64::NEG_INFINITY, 0.0f64);
    for seed in 0..10u64 {
        let inst = quadbox::generate(20, 5, 200 + seed).unwrap();
        let d = sample_diameter(&inst, 2000, seed).unwrap();
        let cfg = PipelineConfig { seed, ..with_k(k) };
        let out = match pipeline::solve(&inst, &cfg) {
            Ok(o) => o,
            Err(e) => {
                bad.push(format!("seed {seed}: {e}"));
                continue;
            }
        };
        let ev = evaluate(&inst, &out.recon.x_bar).unwrap();
        let f = ev.objective.to_f64();
        let v = out.dual.v_star;
        let bound = 2.0 * d / ((k + 1) as f64).sqrt() + 1e-6;
        let w = out.trim.aggregate(inst.m());
        let image: Vec<f64> = ev
            .violation
            .iter()
            .zip(inst.b())
            .map(|(r, b)| r + b)
            .collect();
        let diff: Vec<f64> = image.iter().zip(&w[1..]).map(|(a, b)| a - b).collect();
        let identity = norm(&diff);
        worst_ratio = worst_ratio.max((f - v) / bound);
        worst_identity = worst_identity.max(identity);
        if f - v > bound || identity > 1e-8 {
            bad.push(format!(
                "seed {seed}: gap {:.3e} bound {bound:.3e} identity {identity:.2e}",
                f - v
            ));
        }
        duality.push((format!("c4 seed {seed}"), f, v));
    }
    Outcome::new(
        bad.is_empty(),
        format!(
            "10 seeds, worst gap/bound {worst_ratio:.3}, worst ‖ΣAx̄ − w‖ {worst_identity:.2e}, violations {bad:?}"
        ),
    )
}

// 5

fn uc_end_to_end(duality: &mut Vec<DualityRecord>) -> Outcome {
    let mut bad = Vec::new();
    let mut ratios = Vec::new();
    let mut zetas = Vec::new();
    for seed in 0..10u64 {
        let inst = uc::generate(50, 10, seed).unwrap();
        let gamma = inst.max_gamma().unwrap();
        let m = inst.m() as f64;
        for method in [CarathMethod::Exact, CarathMethod::Fcfw, CarathMethod::Mnp] {
            let cfg = PipelineConfig {
                method: Some(method),
                seed,
                ..with_k(10_000)
            };
            let o = match solve_with_perturbation(&inst, &cfg, &PerturbationConfig::default()) {
                Ok(o) => o,
                Err(e) => {
                    bad.push(format!("seed {seed} {method}: {e}"));
                    continue;
                }
            };
            let v = o.attempts[0].v_star;
            let f = evaluate(&inst, &o.last.recon.x_bar)
                .unwrap()
                .objective
                .to_f64();
            let feasible = o.last.recon.is_feasible_for(&inst, 0.0);
            ratios.push((f - v) / gamma);
            zetas.push(o.zeta_used);
            if !feasible || o.zeta_used > 5 || f - v > gamma || f - v > (m + 1.0) * gamma {
                bad.push(format!(
                    "seed {seed} {method}: feasible {feasible} zeta {} gap/γ {:.3}",
                    o.zeta_used,
                    (f - v) / gamma
                ));
            }
            duality.push((format!("c5 seed {seed} {method}"), f, v));
        }
    }
    let max_ratio = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Outcome::new(
        bad.is_empty(),
        format!(
            "30 runs, max ζ {}, max gap/max γ {max_ratio:.3}, violations {bad:?}",
            zetas.iter().max().unwrap_or(&0)
        ),
    )
}

// 6

fn in_hull(p: usize, n: usize, seed: u64) -> (ConicInput, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = gaussian(&mut rng, p, n);
    let mut lam: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let s: f64 = lam.iter().sum();
    lam.iter_mut().for_each(|l| *l /= s);
    let input = ConicInput::from_combination(w, lam);
    let target = input.w_star.clone();
    (input, target)
}

/// Fit over `t ∈ [T/2, T]`; `None` when the residual hit zero first.
fn tail_slope(history: &[f64], t: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = (t / 2..=t.min(history.len() - 1))
        .map(|i| (i as f64, history[i]))
        .filter(|&(_, v)| v > 0.0)
        .map(|(i, v)| (i, v.ln()))
        .collect();
    (pts.len() >= 2).then(|| slope(&pts))
}

fn approx_linear_rate() -> Outcome {
    // below p + 1 = 11, where both methods can represent the target exactly
    let t = 8usize;
    let trials = 50;
    let (mut neg_fcfw, mut neg_mnp) = (0, 0);
    let mut ratios = Vec::new();
    let (mut at_t, mut at_2t) = (Vec::new(), Vec::new());
    for trial in 0..trials {
        let (src, target) = in_hull(10, 100, 600 + trial);
        let a = fcfw(&src, &target, &ApproxConfig::with_budget(t));
        let b = mnp(&src, &target, &ApproxConfig::with_budget(t));
        let b2 = mnp(&src, &target, &ApproxConfig::with_budget(2 * t));
        neg_fcfw += usize::from(tail_slope(&a.residual_history, t).is_none_or(|s| s < 0.0));
        neg_mnp += usize::from(tail_slope(&b.residual_history, t).is_none_or(|s| s < 0.0));
        ratios.push(b2.residual / a.residual.max(f64::MIN_POSITIVE));
        at_t.push(a.residual);
        at_2t.push(b2.residual);
    }
    let need = (0.95 * trials as f64).ceil() as usize;
    let med = median(ratios);
    Outcome::new(
        neg_fcfw >= need && neg_mnp >= need && med <= 10.0,
        format!(
            "T={t}, negative slope fcfw {neg_fcfw}/{trials} mnp {neg_mnp}/{trials}, median residual fcfw@T {:.2e} mnp@2T {:.2e}, median ratio {med:.3e}",
            median(at_t),
            median(at_2t)
        ),
    )
}

// 7

/// Max of `yᵀx − f(x)` over every on/off schedule, with the output of each
/// "on" step drawn from its candidate maximizers (bounds and vertex).
fn uc_conjugate_by_enumeration(o: &UcOracle, y: &[f64]) -> f64 {
    let p = o.params();
    let n = p.horizon;
    let candidates = |k: usize| -> Vec<f64> {
        let vertex = (y[n + k] - p.gamma) / (2.0 * p.beta);
        let mut c = vec![p.g_min, p.g_max];
        if vertex > p.g_min && vertex < p.g_max {
            c.push(vertex);
        }
        c
    };
    let mut best = f64::NEG_INFINITY;
    for mask in 0..1usize << n {
        let on: Vec<usize> = (0..n).filter(|k| mask >> k & 1 == 1).collect();
        let lists: Vec<Vec<f64>> = on.iter().map(|&k| candidates(k)).collect();
        let total: usize = lists.iter().map(Vec::len).product();
        for mut code in 0..total {
            let mut x = vec![0.0; 2 * n];
            for (&k, list) in on.iter().zip(&lists) {
                x[k] = 1.0;
                x[n + k] = list[code % list.len()];
                code /= list.len();
            }
            let f = o.value(&x).to_f64();
            let val: f64 = y.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() - f;
            best = best.max(val);
        }
    }
    best
}

fn random_uc(rng: &mut ChaCha8Rng) -> UcOracle {
    let g_min = rng.random_range(0.1..5.0);
    UcOracle::new(UcParams {
        horizon: rng.random_range(1..=3),
        c01: rng.random_range(0.0..100.0),
        c10: rng.random_range(0.0..50.0),
        beta: rng.random_range(0.05..20.0),
        gamma: rng.random_range(-5.0..5.0),
        omega: rng.random_range(0.0..50.0),
        g_min,
        g_max: g_min + rng.random_range(0.1..10.0),
    })
    .unwrap()
}

fn random_pev(rng: &mut ChaCha8Rng) -> PevOracle {
    loop {
        let horizon = rng.random_range(1..=12);
        let (rate, delta, efficiency) = (rng.random_range(3.0..5.0), 0.25, 0.9);
        let step = rate * delta * efficiency;
        let e_init = rng.random_range(0.0..8.0);
        let e_ref = e_init + rng.random_range(-1.0..horizon as f64 * step);
        let params = PevParams {
            delta,
            rate,
            efficiency,
            e_init,
            e_ref,
            e_max: e_ref.max(e_init) + rng.random_range(0.0..4.0),
            price: (0..horizon).map(|_| rng.random_range(0.05..0.3)).collect(),
        };
        if let Ok(o) = PevOracle::new(params) {
            return o;
        }
    }
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut bad = Vec::new();
    let mut worst = 0.0f64;
    for draw in 0..200 {
        let o = random_uc(&mut rng);
        let n = o.params().horizon;
        let mut y: Vec<f64> = (0..n).map(|_| rng.random_range(-300.0..300.0)).collect();
        y.extend((0..n).map(|_| rng.random_range(-60.0..120.0)));
        let c = o.conjugate(&y).unwrap();
        let brute = uc_conjugate_by_enumeration(&o, &y);
        let attained =
            y.iter().zip(&c.argmax).map(|(a, b)| a * b).sum::<f64>() - o.value(&c.argmax).to_f64();
        let rel = (c.value - brute).abs() / (1.0 + brute.abs());
        worst = worst
            .max(rel)
            .max((attained - brute).abs() / (1.0 + brute.abs()));
        if rel > 1e-6 || (attained - brute).abs() > 1e-6 * (1.0 + brute.abs()) {
            bad.push(format!("uc draw {draw}: {} vs {brute}", c.value));
        }
    }
    for draw in 0..100 {
        let o = random_pev(&mut rng);
        let p = o.params();
        let n = p.horizon();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..2.0)).collect();
        let gain: Vec<f64> = (0..n).map(|k| y[k] - p.rate * p.price[k]).collect();
        let mut brute = f64::NEG_INFINITY;
        for mask in 0..1usize << n {
            let u: Vec<f64> = (0..n).map(|k| (mask >> k & 1) as f64).collect();
            if o.value(&u).is_finite() {
                let v: f64 = (0..n).filter(|k| mask >> k & 1 == 1).map(|k| gain[k]).sum();
                brute = brute.max(v);
            }
        }
        let c = o.conjugate(&y).unwrap();
        let binary = c.argmax.iter().all(|&u| u == 0.0 || u == 1.0);
        if c.value != brute || !binary || !o.value(&c.argmax).is_finite() {
            bad.push(format!("pev draw {draw}: {} vs {brute}", c.value));
        }
    }
    Outcome::new(
        bad.is_empty(),
        format!("200 uc draws (worst relative {worst:.1e}), 100 pev draws, mismatches {bad:?}"),
    )
}

// 8

fn pev_feasibility_trend(duality: &mut Vec<DualityRecord>) -> Outcome {
    let ks = [250usize, 500, 1000, 2000];
    let seeds = 10u64;
    let mut aggregate = vec![Vec::new(); ks.len()];
    let mut rounded = vec![Vec::new(); ks.len()];
    let mut feasible_last = 0;
    let mut errors = Vec::new();
    for seed in 0..seeds {
        let inst = pev::generate(100, 24, seed).unwrap();
        for (ki, &k) in ks.iter().enumerate() {
            let cfg = PipelineConfig { seed, ..with_k(k) };
            let o = match solve_with_perturbation(&inst, &cfg, &PerturbationConfig::default()) {
                Ok(o) => o,
                Err(PerturbationError::ZetaExhausted { outcome, .. }) => *outcome,
                Err(e) => {
                    errors.push(format!("seed {seed} K {k}: {e}"));
                    continue;
                }
            };
            let rhs: Vec<f64> = inst.b().iter().zip(&o.theta).map(|(b, t)| b - t).collect();
            let w = o.last.trim.aggregate(inst.m());
            let excess: Vec<f64> = w[1..].iter().zip(&rhs).map(|(a, r)| a - r).collect();
            aggregate[ki].push(plus_norm(&excess).unwrap());
            rounded[ki].push(o.last.recon.violation_against(&inst, &rhs));
            if k == 2000 && o.feasible {
                feasible_last += 1;
            }
            let f = evaluate(&inst, &o.last.recon.x_bar)
                .unwrap()
                .objective
                .to_f64();
            if o.feasible {
                duality.push((format!("c8 seed {seed} K {k}"), f, o.attempts[0].v_star));
            }
        }
    }
    let agg: Vec<f64> = aggregate.into_iter().map(median).collect();
    let xbar: Vec<f64> = rounded.into_iter().map(median).collect();
    let monotone = agg.windows(2).all(|w| w[1] <= w[0]);
    Outcome::new(
        errors.is_empty() && monotone && feasible_last >= 8,
        format!(
            "K {ks:?}: perturbed aggregate violation medians {agg:.3?}, rounded x̄ medians {xbar:.3?}, \
             original feasible at K=2000 {feasible_last}/{seeds}, errors {errors:?}"
        ),
    )
}

// 9

fn weak_duality(records: &[DualityRecord]) -> Outcome {
    let bad: Vec<String> = records
        .iter()
        .filter(|(_, f, v)| *f < v - 1e-6 * (1.0 + v.abs()))
        .map(|(name, f, v)| format!("{name}: f {f} < v* {v}"))
        .collect();
    Outcome::new(
        !records.is_empty() && bad.is_empty(),
        format!("{} runs, violations {bad:?}", records.len()),
    )
}

// 10

fn qr_update_kernel() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut worst_fact, mut worst_solve) = (0.0f64, 0.0f64);
    let mut bad = Vec::new();
    for seq in 0..1000 {
        let n = rng.random_range(2..=12);
        let mut cols: Vec<Vec<f64>> = Vec::new();
        let mut qr = QrState::empty(n);
        for _ in 0..3 * n {
            let insert = cols.is_empty() || (cols.len() < n && rng.random_bool(0.6));
            if insert {
                let idx = rng.random_range(0..=cols.len());
                let c: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                qr.insert_column(idx, &c).unwrap();
                cols.insert(idx, c);
            } else {
                let idx = rng.random_range(0..cols.len());
                qr.delete_column(idx).unwrap();
                cols.remove(idx);
            }
            let a = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
            let fresh = QrState::factor(&a).unwrap();
            let res = (qr.reconstruct() - &a)
                .norm()
                .max((fresh.reconstruct() - &a).norm());
            let q = qr.q();
            let orth = (q.transpose() * &q - DMatrix::identity(n, n)).norm();
            worst_fact = worst_fact.max(res).max(orth);
            if res > 1e-10 || orth > 1e-10 {
                bad.push(format!(
                    "seq {seq}: residual {res:e} orthogonality {orth:e}"
                ));
            }
            if cols.len() == n {
                let rhs: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                let x = qr.solve(&rhs).unwrap();
                let xf = fresh.solve(&rhs).unwrap();
                let d: Vec<f64> = x.iter().zip(&xf).map(|(a, b)| a - b).collect();
                let rel = norm(&d) / (1.0 + norm(&xf));
                worst_solve = worst_solve.max(rel);
                if rel > 1e-9 {
                    bad.push(format!("seq {seq}: solve difference {rel:e}"));
                }
            }
        }
    }
    bad.truncate(5);
    Outcome::new(
        bad.is_empty(),
        format!("1000 sequences, worst residual {worst_fact:.2e}, worst solve difference {worst_solve:.2e}, violations {bad:?}"),
    )
}

fn main() {
    let mut duality = Vec::new();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut run = |id: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        println!(
            "{} criterion {id:>2} {name} ({:.1}s): {}",
            if o.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            o.detail
        );
        results.push((id, name, o));
    };
    run(1, "exact Carathéodory", &mut exact_caratheodory_correctness);
    run(2, "trim structure", &mut trim_structure);
    run(3, "Frank-Wolfe rate envelope", &mut fw_rate_envelope);
    run(4, "convex gap and identity", &mut || {
        convex_main_result(&mut duality)
    });
    run(5, "unit commitment end to end", &mut || {
        uc_end_to_end(&mut duality)
    });
    run(6, "approximate Carathéodory rate", &mut approx_linear_rate);
    run(7, "oracle equivalence", &mut oracle_equivalence);
    run(8, "PEV feasibility trend", &mut || {
        pev_feasibility_trend(&mut duality)
    });
    run(9, "weak duality", &mut || weak_duality(&duality));
    run(10, "QR update kernel", &mut qr_update_kernel);
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} passed, {} failed",
        results.len() - failed.len(),
        failed.len()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
