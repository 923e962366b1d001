//! Fully-corrective Frank-Wolfe over the convex hull of a column set.

use super::simplex::{simplex_ls_from, SimplexQp};
use super::{finish, linear_argmin, nearest_column, ApproxConfig, ApproxResult, ApproxStatus};
use crate::caratheodory::ColumnSource;

/// Runs `T = cfg.t` iterations: each adds the LMO column to the active set and
/// re-solves the least-squares problem over the active set's simplex.
pub fn fcfw(src: &dyn ColumnSource, target: &[f64], cfg: &ApproxConfig) -> ApproxResult {
    let p = src.dim();
    assert_eq!(target.len(), p, "target dimension");
    assert!(!src.is_empty(), "no columns");

    let start = nearest_column(src, target);
    let mut active = vec![start];
    let mut cols = vec![vec![0.0; p]];
    src.column(start, &mut cols[0]);
    let mut qp = SimplexQp::new(&cols, target);
    let mut beta = vec![1.0];
    let mut x = cols[0].clone();

    let residual = |x: &[f64]| {
        x.iter()
            .zip(target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let scale = 1.0 + target.iter().map(|v| v * v).sum::<f64>();
    let mut history = vec![residual(&x)];
    let mut stalled = false;
    let mut status = ApproxStatus::MaxIter;
    let mut iterations = 0;

    for _ in 0..cfg.t {
        let r: Vec<f64> = x.iter().zip(target).map(|(a, b)| a - b).collect();
        let (j, s_dot_r) = linear_argmin(src, &r);
        let x_dot_r: f64 = x.iter().zip(&r).map(|(a, b)| a * b).sum();
        if x_dot_r - s_dot_r <= cfg.tol * scale {
            status = ApproxStatus::Converged;
            break;
        }
        iterations += 1;
        let mut start = beta.clone();
        if !active.contains(&j) {
            let mut col = vec![0.0; p];
            src.column(j, &mut col);
            qp.push(&cols, &col, target);
            cols.push(col);
            active.push(j);
            start.push(0.0);
        }
        let sol = simplex_ls_from(&qp, &cols, target, &start, &cfg.inner);
        stalled |= !sol.converged;
        beta = sol.beta;
        x = vec![0.0; p];
        for (b, c) in beta.iter().zip(&cols) {
            for (xi, ci) in x.iter_mut().zip(c) {
                *xi += b * ci;
            }
        }
        history.push(residual(&x));
    }
    if stalled && status == ApproxStatus::MaxIter {
        status = ApproxStatus::InnerStalled;
    }
    let pairs = active.into_iter().zip(beta).collect();
    finish(src, target, pairs, history, iterations, status)
}
