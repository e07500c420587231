//! Matchings, transport plans and maps, `d_inf`, `W_p` and `TL^p`.

pub mod flow;
pub mod hungarian;
pub mod map;
pub mod matching;
pub mod sinkhorn;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::domain::{Domain, ShapeSpec};
use crate::error::{Error, Result};
use crate::numerics::{dist, halton, CompensatedSum};

pub use map::{build_transport_map, build_transport_map_with, MapOptions, TransportMapGrid};
pub use sinkhorn::EntropicConfig;

/// Largest size solved by the dense assignment solver under automatic selection.
pub const EXACT_LIMIT: usize = 1024;

/// Weighted point set in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.len() != dim * weights.len() {
            return Err(Error::SizeMismatch { left: points.len(), right: dim * weights.len() });
        }
        if weights.is_empty() {
            return Err(Error::InvalidArgument("measure needs at least one atom".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { dim, points, weights })
    }

    /// Uniform weights `1/m` on the given points.
    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.len() % dim != 0 || points.is_empty() {
            return Err(Error::InvalidArgument("points do not form a nonempty point set".into()));
        }
        let m = points.len() / dim;
        Self::new(dim, points, vec![1.0 / m as f64; m])
    }

    /// Checks that every atom lies in `domain`.
    pub fn check_domain(&self, domain: &Domain) -> Result<()> {
        (0..self.len()).try_for_each(|i| domain.check_point(self.point(i)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|x| (x - w).abs() <= 1e-15)
    }
}

/// Sparse coupling with its cost `sum mass * c(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub entries: Vec<(usize, usize, f64)>,
    pub cost: f64,
    pub p: f64,
    pub exact: bool,
    /// Upper minus lower bound for approximate plans; zero when exact.
    pub gap: f64,
}

impl TransportPlan {
    pub fn row_marginal(&self, rows: usize) -> Vec<f64> {
        let mut out = vec![0.0; rows];
        for &(i, _, m) in &self.entries {
            out[i] += m;
        }
        out
    }

    pub fn col_marginal(&self, cols: usize) -> Vec<f64> {
        let mut out = vec![0.0; cols];
        for &(_, j, m) in &self.entries {
            out[j] += m;
        }
        out
    }

    /// Writes `i,j,mass` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["i", "j", "mass"])?;
        for &(i, j, m) in &self.entries {
            w.write_record([i.to_string(), j.to_string(), format!("{m:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatchMethod {
    Exact,
    Entropic(EntropicConfig),
}

fn check_pair(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::SizeMismatch { left: a.dim(), right: b.dim() });
    }
    Ok(())
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("p must be finite and at least 1, got {p}")));
    }
    Ok(())
}

fn pcost_matrix(a: &DiscreteMeasure, b: &DiscreteMeasure, p: f64) -> Vec<f64> {
    let mut cost = Vec::with_capacity(a.len() * b.len());
    for i in 0..a.len() {
        for j in 0..b.len() {
            cost.push(dist(a.point(i), b.point(j)).powf(p));
        }
    }
    cost
}

/// Optimal coupling for the cost `|x - y|^p`.
pub fn match_pcost(a: &DiscreteMeasure, b: &DiscreteMeasure, p: f64, method: &MatchMethod) -> Result<TransportPlan> {
    check_pair(a, b)?;
    check_p(p)?;
    let cost = pcost_matrix(a, b, p);
    solve_cost(&cost, a.weights(), b.weights(), p, method)
}

fn solve_cost(cost: &[f64], wa: &[f64], wb: &[f64], p: f64, method: &MatchMethod) -> Result<TransportPlan> {
    let (n, m) = (wa.len(), wb.len());
    match method {
        MatchMethod::Exact => {
            if n != m {
                return Err(Error::SizeMismatch { left: n, right: m });
            }
            let w = 1.0 / n as f64;
            if wa.iter().chain(wb).any(|x| (x - w).abs() > 1e-15) {
                return Err(Error::Unsupported("exact matching needs uniform weights".into()));
            }
            let sol = hungarian::solve(cost, n, m)?;
            let entries = sol.row_to_col.iter().enumerate().map(|(i, &j)| (i, j, w)).collect();
            Ok(TransportPlan { entries, cost: sol.cost * w, p, exact: true, gap: 0.0 })
        }
        MatchMethod::Entropic(cfg) => {
            let sol = sinkhorn::solve(cost, wa, wb, cfg)?;
            let mut entries = Vec::new();
            for i in 0..n {
                for j in 0..m {
                    let mass = sol.plan[i * m + j];
                    if mass > 0.0 {
                        entries.push((i, j, mass));
                    }
                }
            }
            Ok(TransportPlan { entries, cost: sol.upper, p, exact: false, gap: (sol.upper - sol.lower).max(0.0) })
        }
    }
}

/// Minimal radius `r` admitting a perfect matching with all edges `<= r`.
/// The radius is always one of the pairwise distances.
pub fn match_bottleneck(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<(TransportPlan, f64)> {
    check_pair(a, b)?;
    let m = a.len();
    if b.len() != m {
        return Err(Error::SizeMismatch { left: m, right: b.len() });
    }
    if !a.is_uniform() || !b.is_uniform() {
        return Err(Error::Unsupported("bottleneck matching needs uniform weights".into()));
    }
    let d: Vec<f64> = pcost_matrix(a, b, 1.0);
    let mut levels = d.clone();
    levels.sort_by(f64::total_cmp);
    levels.dedup();

    let matching_at = |r: f64| -> Vec<Option<usize>> {
        let mut offsets = Vec::with_capacity(m + 1);
        let mut adj = Vec::new();
        offsets.push(0);
        for i in 0..m {
            adj.extend((0..m).filter(|&j| d[i * m + j] <= r));
            offsets.push(adj.len());
        }
        matching::hopcroft_karp(&matching::Bipartite { left: m, right: m, offsets: &offsets, adj: &adj })
    };
    let perfect = |mm: &[Option<usize>]| mm.iter().all(Option::is_some);

    // Smallest level index with a perfect matching; the largest level always works.
    let (mut lo, mut hi) = (0usize, levels.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if perfect(&matching_at(levels[mid])) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let radius = levels[lo];
    let mm = matching_at(radius);
    let w = 1.0 / m as f64;
    let entries: Vec<(usize, usize, f64)> = mm.iter().enumerate().map(|(i, j)| (i, j.expect("perfect"), w)).collect();
    let cost = entries.iter().map(|&(i, j, _)| d[i * m + j]).fold(0.0, f64::max);
    Ok((TransportPlan { entries, cost, p: f64::INFINITY, exact: true, gap: 0.0 }, radius))
}

/// `TL^p` between `(a, f)` and `(b, g)`: the minimum over couplings of
/// `∬ |x - y|^p + |f(x) - g(y)|^p`, exact for equal-size uniform measures.
pub fn tlp_distance(a: &DiscreteMeasure, f: &[f64], b: &DiscreteMeasure, g: &[f64], p: f64) -> Result<f64> {
    check_pair(a, b)?;
    check_p(p)?;
    if f.len() != a.len() || g.len() != b.len() {
        return Err(Error::SizeMismatch { left: f.len(), right: a.len() });
    }
    if a.len() != b.len() || !a.is_uniform() || !b.is_uniform() {
        return Err(Error::Unsupported("exact TL^p needs equal-size uniform measures".into()));
    }
    let m = a.len();
    let mut cost = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            cost.push(dist(a.point(i), b.point(j)).powf(p) + (f[i] - g[j]).abs().powf(p));
        }
    }
    let sol = hungarian::solve(&cost, m, m)?;
    Ok(sol.cost / m as f64)
}

/// Method selection for [`wasserstein_indicator`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WassersteinMethod {
    /// Exact up to [`EXACT_LIMIT`] points, entropic beyond.
    #[default]
    Auto,
    Exact,
    Entropic(EntropicConfig),
}

/// `W_p` estimate between normalized indicators with a two-resolution error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WassersteinEstimate {
    pub value: f64,
    pub error: f64,
    pub exact: bool,
}

/// The first `m` points of the Halton sequence (scaled to the bounding box)
/// that fall in `shape ∩ D`.
pub fn shape_points(shape: &ShapeSpec, domain: &Domain, m: usize) -> Result<Vec<f64>> {
    shape.validate(domain)?;
    let (lo, hi) = shape.bounding_box(domain);
    let d = domain.dim();
    if (0..d).any(|k| hi[k] <= lo[k]) {
        return Err(Error::EmptyIntersection);
    }
    let mut out = Vec::with_capacity(m * d);
    let mut x = vec![0.0; d];
    let mut index = 1u64;
    let budget = 10_000 * m as u64 + 100_000;
    while out.len() < m * d {
        if index > budget {
            return Err(Error::InvalidShape("shape has too little volume to discretize".into()));
        }
        let u = halton(index, d);
        index += 1;
        for k in 0..d {
            x[k] = lo[k] + u[k] * (hi[k] - lo[k]);
        }
        if shape.indicator(&x) && domain.contains(&x) {
            out.extend_from_slice(&x);
        }
    }
    Ok(out)
}

fn indicator_wp(pa: &[f64], po: &[f64], d: usize, p: f64, method: &WassersteinMethod) -> Result<(f64, bool)> {
    let a = DiscreteMeasure::uniform(d, pa.to_vec())?;
    let b = DiscreteMeasure::uniform(d, po.to_vec())?;
    let m = a.len();
    let mm = match method {
        WassersteinMethod::Auto if m <= EXACT_LIMIT => MatchMethod::Exact,
        WassersteinMethod::Auto => MatchMethod::Entropic(EntropicConfig::default()),
        WassersteinMethod::Exact => MatchMethod::Exact,
        WassersteinMethod::Entropic(cfg) => MatchMethod::Entropic(*cfg),
    };
    let plan = match_pcost(&a, &b, p, &mm)?;
    Ok((plan.cost.max(0.0).powf(1.0 / p), plan.exact))
}

/// `W_p(chi_A / |A|, chi_O / |O|)` from `m`-point quasi-random discretizations,
/// with `|W_m - W_2m|` as the error estimate.
pub fn wasserstein_indicator(
    a: &ShapeSpec,
    o: &ShapeSpec,
    domain: &Domain,
    p: f64,
    m: usize,
    method: &WassersteinMethod,
) -> Result<WassersteinEstimate> {
    check_p(p)?;
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one discretization point".into()));
    }
    a.volume(domain)?;
    o.volume(domain)?;
    let d = domain.dim();
    let pa = shape_points(a, domain, 2 * m)?;
    let po = shape_points(o, domain, 2 * m)?;
    let (w1, e1) = indicator_wp(&pa[..m * d], &po[..m * d], d, p, method)?;
    let (w2, e2) = indicator_wp(&pa, &po, d, p, method)?;
    Ok(WassersteinEstimate { value: w1, error: (w1 - w2).abs(), exact: e1 && e2 })
}

/// Total `|x - y|^p` cost of a plan given explicit point sets.
pub fn plan_cost(plan: &TransportPlan, a: &DiscreteMeasure, b: &DiscreteMeasure, p: f64) -> f64 {
    let mut acc = CompensatedSum::new();
    for &(i, j, m) in &plan.entries {
        acc.add(m * dist(a.point(i), b.point(j)).powf(p));
    }
    acc.value()
}
