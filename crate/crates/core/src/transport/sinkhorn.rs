//! Log-domain Sinkhorn iterations with rounding onto the transport polytope
//! and a c-transform dual bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::CompensatedSum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropicConfig {
    /// Initial regularization, relative to the largest cost entry.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Stop halving once `(upper - lower) <= gap_target * max(upper, tiny)`.
    pub gap_target: f64,
    pub max_halvings: usize,
}

impl Default for EntropicConfig {
    fn default() -> Self {
        Self { epsilon: 0.05, max_iters: 2000, gap_target: 1e-3, max_halvings: 8 }
    }
}

#[derive(Debug, Clone)]
pub struct EntropicSolution {
    /// Dense feasible plan, row-major.
    pub plan: Vec<f64>,
    pub upper: f64,
    pub lower: f64,
    pub epsilon: f64,
}

fn log_sum_exp(values: impl Iterator<Item = f64>, buf: &mut Vec<f64>) -> f64 {
    buf.clear();
    buf.extend(values);
    let m = buf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + buf.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Entropic transport between weights `a` (rows) and `b` (cols) for the cost
/// matrix `cost`, with epsilon halving until the duality gap target is met.
pub fn solve(cost: &[f64], a: &[f64], b: &[f64], cfg: &EntropicConfig) -> Result<EntropicSolution> {
    let (n, m) = (a.len(), b.len());
    if cost.len() != n * m {
        return Err(Error::SizeMismatch { left: cost.len(), right: n * m });
    }
    if !(cfg.epsilon > 0.0) || cfg.max_iters == 0 {
        return Err(Error::InvalidArgument("entropic solver needs epsilon > 0 and max_iters > 0".into()));
    }
    let scale = cost.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let log_a: Vec<f64> = a.iter().map(|w| w.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|w| w.ln()).collect();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut buf = Vec::with_capacity(n.max(m));
    let mut eps = cfg.epsilon * scale;
    let mut best: Option<EntropicSolution> = None;

    for _ in 0..=cfg.max_halvings {
        for _ in 0..cfg.max_iters {
            for i in 0..n {
                let row = &cost[i * m..(i + 1) * m];
                let lse = log_sum_exp((0..m).map(|j| (g[j] - row[j]) / eps + log_b[j]), &mut buf);
                f[i] = -eps * lse;
            }
            let mut err = 0.0;
            for j in 0..m {
                let lse = log_sum_exp((0..n).map(|i| (f[i] - cost[i * m + j]) / eps + log_a[i]), &mut buf);
                g[j] = -eps * lse;
            }
            // Row marginal violation after the column update.
            for i in 0..n {
                let row = &cost[i * m..(i + 1) * m];
                let s: f64 = (0..m).map(|j| ((f[i] + g[j] - row[j]) / eps + log_a[i] + log_b[j]).exp()).sum();
                err += (s - a[i]).abs();
            }
            if err < 1e-12 {
                break;
            }
        }
        let plan = round_plan(cost, a, b, &f, &g, eps, &log_a, &log_b);
        let mut upper = CompensatedSum::new();
        for (p, c) in plan.iter().zip(cost) {
            upper.add(p * c);
        }
        let upper = upper.value();
        let lower = dual_bound(cost, a, b, &f);
        let sol = EntropicSolution { plan, upper, lower, epsilon: eps };
        let done = upper - lower <= cfg.gap_target * upper.max(1e-300);
        if best.as_ref().is_none_or(|s| sol.upper - sol.lower < s.upper - s.lower) {
            best = Some(sol);
        }
        if done {
            break;
        }
        eps *= 0.5;
    }
    Ok(best.expect("at least one round"))
}

#[allow(clippy::too_many_arguments)]
fn round_plan(
    cost: &[f64],
    a: &[f64],
    b: &[f64],
    f: &[f64],
    g: &[f64],
    eps: f64,
    log_a: &[f64],
    log_b: &[f64],
) -> Vec<f64> {
    let (n, m) = (a.len(), b.len());
    let mut plan = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            plan[i * m + j] = ((f[i] + g[j] - cost[i * m + j]) / eps + log_a[i] + log_b[j]).exp();
        }
    }
    for i in 0..n {
        let s: f64 = plan[i * m..(i + 1) * m].iter().sum();
        if s > a[i] {
            let r = a[i] / s;
            plan[i * m..(i + 1) * m].iter_mut().for_each(|p| *p *= r);
        }
    }
    for j in 0..m {
        let s: f64 = (0..n).map(|i| plan[i * m + j]).sum();
        if s > b[j] {
            let r = b[j] / s;
            (0..n).for_each(|i| plan[i * m + j] *= r);
        }
    }
    let err_r: Vec<f64> = (0..n).map(|i| (a[i] - plan[i * m..(i + 1) * m].iter().sum::<f64>()).max(0.0)).collect();
    let err_c: Vec<f64> = (0..m).map(|j| (b[j] - (0..n).map(|i| plan[i * m + j]).sum::<f64>()).max(0.0)).collect();
    let total: f64 = err_r.iter().sum();
    if total > 0.0 {
        for i in 0..n {
            for j in 0..m {
                plan[i * m + j] += err_r[i] * err_c[j] / total;
            }
        }
    }
    plan
}

/// `sum a_i f_i + sum b_j f^c_j` with `f^c_j = min_i (C_ij - f_i)`.
fn dual_bound(cost: &[f64], a: &[f64], b: &[f64], f: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let mut acc = CompensatedSum::new();
    for i in 0..n {
        acc.add(a[i] * f[i]);
    }
    for j in 0..m {
        let fc = (0..n).map(|i| cost[i * m + j] - f[i]).fold(f64::INFINITY, f64::min);
        acc.add(b[j] * fc);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_is_feasible_and_bounds_bracket() {
        let a = [0.2, 0.5, 0.3];
        let b = [0.4, 0.6];
        let cost = [0.0, 1.0, 2.0, 0.5, 1.0, 0.0];
        let s = solve(&cost, &a, &b, &EntropicConfig::default()).unwrap();
        for i in 0..3 {
            let r: f64 = s.plan[i * 2..i * 2 + 2].iter().sum();
            assert!((r - a[i]).abs() < 1e-12);
        }
        for j in 0..2 {
            let c: f64 = (0..3).map(|i| s.plan[i * 2 + j]).sum();
            assert!((c - b[j]).abs() < 1e-12);
        }
        assert!(s.lower <= s.upper + 1e-12);
        // Optimal value 0.45: row 2 tops up column 0, row 1 goes to column 1.
        assert!(s.lower <= 0.45 + 1e-9 && s.upper >= 0.45 - 1e-9);
        assert!(s.upper - s.lower < 1e-2);
    }
}
