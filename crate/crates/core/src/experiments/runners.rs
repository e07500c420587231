//! Experiment drivers. Every `(n, seed)` cell is independent; cells run in a
//! work pool and rows are merged in `(n, seed)` order.

use std::time::Instant;

use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind, LabelSpec};
use super::report::{ConvergenceReport, ReportRow};
use crate::continuum::{companion_set_lp_mask, weighted_tv_analytic, GridFunction, NonlocalQuadrature, ValueRange};
use crate::discrete_energy::{anneal_minimize, gf_energy_grid, Class, LabelVector};
use crate::domain::{sample_iid, DensityModel, SampleCloud};
use crate::error::{Error, Result};
use crate::kernels::alpha_d;
use crate::numerics::dist2;
use crate::transport::{build_transport_map_with, wasserstein_indicator, MapOptions, WassersteinMethod};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "GAMMA_LAB_THREADS";

/// Runs `f` in a pool sized by `GAMMA_LAB_THREADS` when set.
pub fn with_thread_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let threads: usize = v
                .trim()
                .parse()
                .ok()
                .filter(|&t| t > 0)
                .ok_or_else(|| Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        Err(_) => Ok(f()),
    }
}

/// Validates and dispatches on the experiment kind.
pub fn run(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    with_thread_pool(|| match config.kind {
        ExperimentKind::GammaSweep => run_gamma_sweep(config),
        ExperimentKind::TransportScaling => run_transport_scaling(config),
        ExperimentKind::MeanIdentity => run_mean_identity(config),
        ExperimentKind::MinimizerStudy => run_minimizer_study(config),
    })?
}

/// Evaluates `cell(n, seed)` over the schedule in parallel, ordered by `(n, seed)`.
fn run_cells<F>(config: &ExperimentConfig, cell: F) -> Result<ConvergenceReport>
where
    F: Fn(usize, u64) -> Result<Vec<f64>> + Sync,
{
    let jobs: Vec<(usize, usize)> =
        config.n_schedule.iter().flat_map(|&n| (0..config.seeds).map(move |s| (n, s))).collect();
    let results: Vec<Result<(ReportRow, f64)>> = jobs
        .par_iter()
        .map(|&(n, s)| {
            let seed = config.seed_for(n, s);
            let t = Instant::now();
            let values = cell(n, seed)?;
            Ok((ReportRow { n, seed_index: s, seed, values }, t.elapsed().as_secs_f64()))
        })
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut runtimes = Vec::with_capacity(results.len());
    for r in results {
        let (row, t) = r?;
        rows.push(row);
        runtimes.push(t);
    }
    Ok(ConvergenceReport::new(config.kind, rows, runtimes))
}

fn labels(config: &ExperimentConfig, cloud: &SampleCloud) -> LabelVector {
    let shape = config.shape_a.as_ref();
    LabelVector::from_fn(cloud, |x| config.label.eval(shape, x))
}

/// `GF_{n, delta_n}(u_n)` against `alpha_d TV(u; rho^2)`, with transport-map
/// `TL^1` diagnostics.
pub fn run_gamma_sweep(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    let model = config.density_model()?;
    let d = config.dim();
    let reference = match (&config.label, &config.shape_a) {
        (LabelSpec::Shape, Some(a)) => alpha_d(&config.kernel, d)? * weighted_tv_analytic(a, &model, 2)?.value,
        (LabelSpec::Zero, _) => 0.0,
        _ => return Err(Error::InvalidArgument("gamma_sweep needs binary labels with an analytic reference".into())),
    };
    let rule = config.delta_rule();
    let shape = config.shape_a.as_ref();
    run_cells(config, |n, seed| {
        let cloud = sample_iid(&model, n, seed)?;
        let u = labels(config, &cloud);
        let delta = rule.delta(n);
        let gf = gf_energy_grid(&cloud, &u, delta, &config.kernel)?.value;
        let (tl1, mismatch, sup) = if config.solver.transport_max_n.map_or(true, |m| n <= m) {
            let map = build_map(config, &model, &cloud, n)?;
            let u_fn = |x: &[f64]| config.label.eval(shape, x);
            (map.tl_bound(&cloud, u_fn, u.values(), 1.0), map.label_mismatch(u_fn, u.values()), map.sup_displacement)
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        Ok(vec![delta, gf, reference, (gf - reference).abs(), tl1, mismatch, sup])
    })
}

fn build_map(
    config: &ExperimentConfig,
    model: &DensityModel,
    cloud: &SampleCloud,
    n: usize,
) -> Result<crate::transport::TransportMapGrid> {
    let mut opts = MapOptions::new(config.solver.map_cells_per_sample * n);
    opts.rel_tol = config.solver.map_rel_tol;
    opts.tie_break_limit = config.solver.tie_break_limit;
    build_transport_map_with(model, cloud, &opts)
}

/// `(log n)^{3/4}` for `d = 2` and `(log n)^{1/d}` above.
pub fn log_correction(n: usize, d: usize) -> f64 {
    let l = (n as f64).ln().max(f64::MIN_POSITIVE);
    if d == 2 {
        l.powf(0.75)
    } else {
        l.powf(1.0 / d as f64)
    }
}

/// Sup displacement of grid transport maps against `n`.
pub fn run_transport_scaling(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    let model = config.density_model()?;
    let d = config.dim();
    run_cells(config, |n, seed| {
        let cloud = sample_iid(&model, n, seed)?;
        let map = build_map(config, &model, &cloud, n)?;
        Ok(vec![map.sup_displacement, map.cell_diameter, map.sup_displacement / log_correction(n, d)])
    })
}

/// Expected value of `GF` over fresh clouds:
/// `((n-1)/n) F_delta(u) + 2 eta(0) / (delta^{d+1} n) ∫ (1-u) u rho`.
pub fn mean_identity_reference(config: &ExperimentConfig, n: usize) -> Result<f64> {
    let model = config.density_model()?;
    let d = config.dim();
    let delta = config.delta_rule().delta(n);
    let res = vec![config.solver.quadrature_cells; d];
    let shape = config.shape_a.as_ref();
    let u = GridFunction::from_fn(config.domain.clone(), res.clone(), ValueRange::Unit, |x| config.label.eval(shape, x))?;
    let quad = NonlocalQuadrature::new(&config.domain, &res, &model, delta, &config.kernel)?;
    let f = quad.energy_f(&u)?;
    let diag_integral = if config.label.is_binary() { 0.0 } else { u.integrate(|x, v| (1.0 - v) * v * model.value(x)) };
    let nf = n as f64;
    let diag = 2.0 * config.kernel.eval(0.0) / (delta.powi(d as i32 + 1) * nf) * diag_integral;
    Ok((nf - 1.0) / nf * f + diag)
}

/// Monte Carlo mean of `GF` against [`mean_identity_reference`].
pub fn run_mean_identity(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    let model = config.density_model()?;
    let rule = config.delta_rule();
    let mut references = Vec::with_capacity(config.n_schedule.len());
    for &n in &config.n_schedule {
        references.push((n, mean_identity_reference(config, n)?));
    }
    run_cells(config, |n, seed| {
        let cloud = sample_iid(&model, n, seed)?;
        let u = labels(config, &cloud);
        let delta = rule.delta(n);
        let gf = gf_energy_grid(&cloud, &u, delta, &config.kernel)?.value;
        let reference = references.iter().find(|(m, _)| *m == n).map(|r| r.1).unwrap_or(f64::NAN);
        Ok(vec![delta, gf, reference])
    })
}

/// Best `alpha_d TV(A; rho^2) + W_p(A, O)` over the configured competitors.
pub fn competitor_reference(config: &ExperimentConfig) -> Result<f64> {
    let model = config.density_model()?;
    let alpha = alpha_d(&config.kernel, config.dim())?;
    let mut best = f64::NAN;
    for c in &config.competitors {
        let per = weighted_tv_analytic(&c.a, &model, 2)?.value;
        let w = wasserstein_indicator(&c.a, &c.o, &config.domain, config.p, config.solver.wasserstein_points, &WassersteinMethod::Auto)?;
        let v = alpha * per + w.value;
        if !(v >= best) {
            best = v;
        }
    }
    Ok(best)
}

/// Cells of a `g^d` grid whose nearest sample is labeled `A`.
fn nearest_label_mask(config: &ExperimentConfig, cloud: &SampleCloud, classes: &[Class]) -> (Vec<usize>, Vec<bool>) {
    let d = config.dim();
    let g = config.solver.companion_cells;
    let res = vec![g; d];
    let cells: usize = res.iter().product();
    let mask = (0..cells)
        .map(|i| {
            let mut rem = i;
            let mut x = vec![0.0; d];
            for k in (0..d).rev() {
                let j = rem % g;
                rem /= g;
                x[k] = config.domain.lo()[k] + (j as f64 + 0.5) * config.domain.extent(k) / g as f64;
            }
            let mut best = (f64::INFINITY, 0);
            for (s, p) in cloud.iter().enumerate() {
                let r = dist2(p, &x);
                if r < best.0 {
                    best = (r, s);
                }
            }
            classes[best.1] == Class::A
        })
        .collect();
    (res, mask)
}

/// Annealing on `GF + W_p` with equal class sizes, plus the companion problem
/// on the recovered `A`.
pub fn run_minimizer_study(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    let model = config.density_model()?;
    let rule = config.delta_rule();
    let reference = competitor_reference(config)?;
    run_cells(config, |n, seed| {
        let cloud = sample_iid(&model, n, seed)?;
        let delta = rule.delta(n);
        let count = (config.solver.class_fraction * n as f64).round() as usize;
        let res = anneal_minimize(&cloud, delta, config.p, &config.kernel, count, count, &config.solver.anneal, seed)?;
        let (grid, mask) = nearest_label_mask(config, &cloud, &res.classes);
        let binarity = match companion_set_lp_mask(&config.domain, &grid, &mask, config.p) {
            Ok(sol) => sol.binary_fraction,
            Err(Error::Infeasible(_) | Error::EmptyIntersection) => f64::NAN,
            Err(e) => return Err(e),
        };
        Ok(vec![
            delta,
            res.initial_energy,
            res.initial_gf,
            res.best_energy,
            res.best_gf,
            res.best_wasserstein,
            reference,
            binarity,
        ])
    })
}
