//! The pairwise energy `GF_{n,delta}` on sample clouds, the composite energy
//! with a Wasserstein penalty, and an annealing search over binary labels.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Domain, SampleCloud, ShapeSpec};
use crate::error::{Error, Result};
use crate::kernels::RadialProfile;
use crate::numerics::{halton, CompensatedSum};
use crate::transport::{self, hungarian, WassersteinEstimate, WassersteinMethod};

/// Values `u(X_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVector {
    values: Vec<f64>,
}

impl LabelVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self { values: vec![value; n] }
    }

    /// `chi_shape` evaluated at the samples.
    pub fn from_shape(cloud: &SampleCloud, shape: &ShapeSpec) -> Self {
        Self { values: cloud.iter().map(|x| if shape.indicator(x) { 1.0 } else { 0.0 }).collect() }
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(cloud: &SampleCloud, f: F) -> Self {
        Self { values: cloud.iter().map(f).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn is_admissible(&self) -> bool {
        self.values.iter().all(|&v| (0.0..=1.0).contains(&v))
    }

    pub fn complement(&self) -> Self {
        Self { values: self.values.iter().map(|v| 1.0 - v).collect() }
    }

    /// Single CSV column `u`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["u"])?;
        for v in &self.values {
            w.write_record([format!("{v:e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let field = rec.get(0).unwrap_or_default();
            values.push(field.trim().parse().map_err(|_| Error::InvalidArgument(format!("not a number: {field:?}")))?);
        }
        Ok(Self { values })
    }
}

/// Energy value or the `+inf` marker, with the number of interacting ordered
/// pairs that contributed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyValue {
    pub value: f64,
    pub pair_count: u64,
}

impl EnergyValue {
    pub const INFINITE: EnergyValue = EnergyValue { value: f64::INFINITY, pair_count: 0 };

    pub fn is_infinite(&self) -> bool {
        self.value.is_infinite()
    }
}

fn check_inputs(cloud: &SampleCloud, u: &LabelVector, delta: f64) -> Result<()> {
    if u.len() != cloud.len() {
        return Err(Error::SizeMismatch { left: u.len(), right: cloud.len() });
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    Ok(())
}

fn prefactor(n: usize, d: usize, delta: f64) -> f64 {
    2.0 / (delta.powi(d as i32 + 1) * (n as f64) * (n as f64))
}

/// Full double sum `(2 / (delta n^2)) sum_{i,j} kappa_delta(X_i - X_j) (1 - u_i) u_j`.
pub fn gf_energy_naive(cloud: &SampleCloud, u: &LabelVector, delta: f64, profile: &RadialProfile) -> Result<EnergyValue> {
    check_inputs(cloud, u, delta)?;
    if !u.is_admissible() {
        return Ok(EnergyValue::INFINITE);
    }
    let n = cloud.len();
    let uv = u.values();
    let mut acc = CompensatedSum::new();
    let mut pairs = 0u64;
    for i in 0..n {
        let a = 1.0 - uv[i];
        for j in 0..n {
            let r = crate::numerics::dist(cloud.point(i), cloud.point(j)) / delta;
            let w = profile.eval(r);
            let t = a * uv[j];
            if w > 0.0 && t != 0.0 {
                pairs += 1;
                acc.add(w * t);
            }
        }
    }
    Ok(EnergyValue { value: prefactor(n, cloud.dim(), delta) * acc.value(), pair_count: pairs })
}

/// Uniform bucket grid over the bounding box of a cloud with cell edge at
/// least the interaction radius.
#[derive(Debug, Clone)]
pub struct NeighborGrid {
    pub cell_size: f64,
    lo: Vec<f64>,
    per_axis: Vec<usize>,
    offsets: Vec<usize>,
    items: Vec<u32>,
}

const MAX_BUCKETS: usize = 1 << 22;

impl NeighborGrid {
    pub fn new(cloud: &SampleCloud, radius: f64) -> Self {
        let d = cloud.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for x in cloud.iter() {
            for k in 0..d {
                lo[k] = lo[k].min(x[k]);
                hi[k] = hi[k].max(x[k]);
            }
        }
        let mut cell_size = radius.max(f64::MIN_POSITIVE);
        let per_axis = loop {
            let per: Vec<usize> = (0..d).map(|k| (((hi[k] - lo[k]) / cell_size).floor() as usize).max(0) + 1).collect();
            if per.iter().try_fold(1usize, |acc, &p| acc.checked_mul(p)).is_some_and(|t| t <= MAX_BUCKETS) {
                break per;
            }
            cell_size *= 2.0;
        };
        let total: usize = per_axis.iter().product();
        let mut grid = Self { cell_size, lo, per_axis, offsets: vec![0; total + 1], items: vec![0; cloud.len()] };
        for x in cloud.iter() {
            let b = grid.bucket(x);
            grid.offsets[b + 1] += 1;
        }
        for b in 0..total {
            grid.offsets[b + 1] += grid.offsets[b];
        }
        let mut fill = grid.offsets.clone();
        for (j, x) in cloud.iter().enumerate() {
            let b = grid.bucket(x);
            grid.items[fill[b]] = j as u32;
            fill[b] += 1;
        }
        grid
    }

    fn coord(&self, x: &[f64], k: usize) -> usize {
        (((x[k] - self.lo[k]) / self.cell_size).floor().max(0.0) as usize).min(self.per_axis[k] - 1)
    }

    fn bucket(&self, x: &[f64]) -> usize {
        (0..x.len()).fold(0, |b, k| b * self.per_axis[k] + self.coord(x, k))
    }

    /// Calls `f` with the points in the buckets adjacent to `x`'s bucket.
    pub fn for_each_near<F: FnMut(usize)>(&self, x: &[f64], mut f: F) {
        let d = x.len();
        let mut lo = [0usize; 8];
        let mut hi = [0usize; 8];
        assert!(d <= 8, "neighbor grid supports at most 8 dimensions");
        for k in 0..d {
            let c = self.coord(x, k);
            lo[k] = c.saturating_sub(1);
            hi[k] = (c + 1).min(self.per_axis[k] - 1);
        }
        let mut idx = lo;
        loop {
            // Innermost axis is contiguous in bucket order.
            let mut base = 0;
            for k in 0..d - 1 {
                base = base * self.per_axis[k] + idx[k];
            }
            base *= self.per_axis[d - 1];
            let (b0, b1) = (base + lo[d - 1], base + hi[d - 1]);
            for &j in &self.items[self.offsets[b0]..self.offsets[b1 + 1]] {
                f(j as usize);
            }
            let mut k = d - 1;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                if idx[k] < hi[k] {
                    idx[k] += 1;
                    break;
                }
                idx[k] = lo[k];
            }
        }
    }
}

const CHUNK: usize = 256;

/// Same value as [`gf_energy_naive`], restricted to neighbor buckets and
/// reduced over fixed chunks in a deterministic order.
pub fn gf_energy_grid(cloud: &SampleCloud, u: &LabelVector, delta: f64, profile: &RadialProfile) -> Result<EnergyValue> {
    check_inputs(cloud, u, delta)?;
    if !u.is_admissible() {
        return Ok(EnergyValue::INFINITE);
    }
    let n = cloud.len();
    let radius = profile.support() * delta;
    let grid = NeighborGrid::new(cloud, radius);
    let uv = u.values();
    let inv_delta = 1.0 / delta;
    let chunks: Vec<(CompensatedSum, u64)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = CompensatedSum::new();
            let mut pairs = 0u64;
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let a = 1.0 - uv[i];
                if a == 0.0 {
                    continue;
                }
                let xi = cloud.point(i);
                let mut row = CompensatedSum::new();
                grid.for_each_near(xi, |j| {
                    let t = uv[j];
                    if t == 0.0 {
                        return;
                    }
                    let r = crate::numerics::dist(xi, cloud.point(j)) * inv_delta;
                    let w = profile.eval(r);
                    if w > 0.0 {
                        pairs += 1;
                        row.add(w * t);
                    }
                });
                acc.add(a * row.value());
            }
            (acc, pairs)
        })
        .collect();
    let mut total = CompensatedSum::new();
    let mut pairs = 0;
    for (s, p) in chunks {
        total.merge(s);
        pairs += p;
    }
    Ok(EnergyValue { value: prefactor(n, cloud.dim(), delta) * total.value(), pair_count: pairs })
}

/// Settings for the Wasserstein term of the composite energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WassersteinConfig {
    pub points: usize,
    #[serde(default)]
    pub method: WassersteinMethod,
    /// Largest tolerated `|A ∩ O|`, relative to `min(|A|, |O|)`.
    #[serde(default = "default_overlap_tol")]
    pub overlap_tol: f64,
}

fn default_overlap_tol() -> f64 {
    1e-3
}

impl Default for WassersteinConfig {
    fn default() -> Self {
        Self { points: 256, method: WassersteinMethod::Auto, overlap_tol: default_overlap_tol() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositeEnergy {
    pub gf: EnergyValue,
    pub wasserstein: Option<WassersteinEstimate>,
    pub total: EnergyValue,
}

const OVERLAP_POINTS: u64 = 1 << 15;

/// Quasi-Monte-Carlo estimate of `|A ∩ O ∩ D|`.
pub fn overlap_volume(a: &ShapeSpec, o: &ShapeSpec, domain: &Domain) -> f64 {
    let d = domain.dim();
    let mut x = vec![0.0; d];
    let mut hits = 0u64;
    for i in 1..=OVERLAP_POINTS {
        let u = halton(i, d);
        for k in 0..d {
            x[k] = domain.lo()[k] + u[k] * domain.extent(k);
        }
        if a.indicator(&x) && o.indicator(&x) {
            hits += 1;
        }
    }
    hits as f64 / OVERLAP_POINTS as f64 * domain.volume()
}

/// `GF_{n,delta}(chi_A) + W_p(A, O)`, or the `+inf` marker when `A` and `O`
/// overlap beyond the tolerance.
#[allow(clippy::too_many_arguments)]
pub fn g_energy(
    cloud: &SampleCloud,
    domain: &Domain,
    a: &ShapeSpec,
    o: &ShapeSpec,
    delta: f64,
    p: f64,
    profile: &RadialProfile,
    cfg: &WassersteinConfig,
) -> Result<CompositeEnergy> {
    let va = a.volume(domain)?.value;
    let vo = o.volume(domain)?.value;
    if overlap_volume(a, o, domain) > cfg.overlap_tol * va.min(vo) {
        return Ok(CompositeEnergy { gf: EnergyValue::INFINITE, wasserstein: None, total: EnergyValue::INFINITE });
    }
    let gf = gf_energy_grid(cloud, &LabelVector::from_shape(cloud, a), delta, profile)?;
    let w = transport::wasserstein_indicator(a, o, domain, p, cfg.points, &cfg.method)?;
    let total = EnergyValue { value: gf.value + w.value, pair_count: gf.pair_count };
    Ok(CompositeEnergy { gf, wasserstein: Some(w), total })
}

/// Three-state labels used by the annealer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Class {
    A,
    O,
    Neither,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub t0: f64,
    pub ratio: f64,
    pub steps: usize,
}

impl AnnealSchedule {
    pub fn greedy(steps: usize) -> Self {
        Self { t0: 0.0, ratio: 1.0, steps }
    }

    pub fn temperature(&self, step: usize) -> f64 {
        self.t0 * self.ratio.powi(step as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub step: usize,
    pub energy: f64,
    pub temperature: f64,
}

#[derive(Debug, Clone)]
pub struct AnnealResult {
    pub labels_a: LabelVector,
    pub labels_o: LabelVector,
    pub classes: Vec<Class>,
    pub best_energy: f64,
    pub best_gf: f64,
    pub best_wasserstein: f64,
    pub initial_energy: f64,
    pub initial_gf: f64,
    /// Best-seen energy after each step (non-increasing).
    pub trace: Vec<TracePoint>,
    pub accepted: usize,
}

/// Writes `step,energy,temperature` rows.
pub fn write_trace_csv<W: Write>(trace: &[TracePoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["step", "energy", "temperature"])?;
    for t in trace {
        w.write_record([t.step.to_string(), format!("{:e}", t.energy), format!("{:e}", t.temperature)])?;
    }
    w.flush()?;
    Ok(())
}

/// Symmetric neighbor lists with weights `kappa_delta(X_i - X_j)` (i != j).
struct Neighbors {
    offsets: Vec<usize>,
    index: Vec<u32>,
    weight: Vec<f64>,
}

impl Neighbors {
    fn build(cloud: &SampleCloud, delta: f64, profile: &RadialProfile) -> Self {
        let grid = NeighborGrid::new(cloud, profile.support() * delta);
        let mut offsets = vec![0];
        let mut index = Vec::new();
        let mut weight = Vec::new();
        for i in 0..cloud.len() {
            let xi = cloud.point(i);
            let mut row: Vec<(u32, f64)> = Vec::new();
            grid.for_each_near(xi, |j| {
                if j != i {
                    let w = profile.eval(crate::numerics::dist(xi, cloud.point(j)) / delta);
                    if w > 0.0 {
                        row.push((j as u32, w));
                    }
                }
            });
            row.sort_by_key(|e| e.0);
            for (j, w) in row {
                index.push(j);
                weight.push(w);
            }
            offsets.push(index.len());
        }
        Self { offsets, index, weight }
    }
}

/// Incremental evaluation of `S = sum_{i,j} w_ij (1 - u_i) u_j` for binary `u`.
struct GfState<'a> {
    nb: &'a Neighbors,
    u: Vec<bool>,
    sum: f64,
    scale: f64,
}

impl<'a> GfState<'a> {
    fn new(nb: &'a Neighbors, u: Vec<bool>, scale: f64) -> Self {
        let mut acc = CompensatedSum::new();
        for i in 0..u.len() {
            if u[i] {
                continue;
            }
            for k in nb.offsets[i]..nb.offsets[i + 1] {
                if u[nb.index[k] as usize] {
                    acc.add(nb.weight[k]);
                }
            }
        }
        Self { nb, u, sum: acc.value(), scale }
    }

    /// Change of `S` when flipping point `k`.
    fn flip_delta(&self, k: usize) -> f64 {
        let nb = self.nb;
        let mut s = 0.0;
        for e in nb.offsets[k]..nb.offsets[k + 1] {
            s += nb.weight[e] * if self.u[nb.index[e] as usize] { -1.0 } else { 1.0 };
        }
        // Setting u_k = 1 adds neighbors with u = 0 and removes those with u = 1.
        if self.u[k] {
            -s
        } else {
            s
        }
    }

    fn flip(&mut self, k: usize) {
        self.sum += self.flip_delta(k);
        self.u[k] = !self.u[k];
    }

    fn value(&self) -> f64 {
        self.scale * self.sum.max(0.0)
    }
}

/// Exact `W_p` between equal-size point subsets of a cloud (uniform weights).
pub fn subset_wasserstein(cloud: &SampleCloud, a: &[usize], o: &[usize], p: f64) -> Result<f64> {
    if a.len() != o.len() {
        return Err(Error::SizeMismatch { left: a.len(), right: o.len() });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let m = a.len();
    let mut cost = Vec::with_capacity(m * m);
    for &i in a {
        for &j in o {
            cost.push(crate::numerics::dist(cloud.point(i), cloud.point(j)).powf(p));
        }
    }
    let sol = hungarian::solve(&cost, m, m)?;
    Ok((sol.cost / m as f64).max(0.0).powf(1.0 / p))
}

/// Composite energy of a three-state labeling.
pub fn class_energy(cloud: &SampleCloud, classes: &[Class], delta: f64, p: f64, profile: &RadialProfile) -> Result<(f64, f64)> {
    let u = LabelVector::new(classes.iter().map(|c| if *c == Class::A { 1.0 } else { 0.0 }).collect());
    let gf = gf_energy_grid(cloud, &u, delta, profile)?.value;
    let a: Vec<usize> = (0..classes.len()).filter(|&i| classes[i] == Class::A).collect();
    let o: Vec<usize> = (0..classes.len()).filter(|&i| classes[i] == Class::O).collect();
    Ok((gf, subset_wasserstein(cloud, &a, &o, p)?))
}

/// Metropolis search over three-state labels with fixed class counts.
/// Moves swap the classes of two points with different classes; the best
/// configuration seen is returned.
#[allow(clippy::too_many_arguments)]
pub fn anneal_minimize(
    cloud: &SampleCloud,
    delta: f64,
    p: f64,
    profile: &RadialProfile,
    count_a: usize,
    count_o: usize,
    schedule: &AnnealSchedule,
    seed: u64,
) -> Result<AnnealResult> {
    let n = cloud.len();
    if count_a + count_o > n {
        return Err(Error::Infeasible(format!("class sizes {count_a} + {count_o} exceed {n} points")));
    }
    if count_a != count_o {
        return Err(Error::Infeasible("the Wasserstein term needs equal class sizes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut classes = vec![Class::Neither; n];
    for &i in &order[..count_a] {
        classes[i] = Class::A;
    }
    for &i in &order[count_a..count_a + count_o] {
        classes[i] = Class::O;
    }
    anneal_from(cloud, delta, p, profile, classes, schedule, &mut rng)
}

/// As [`anneal_minimize`], starting from the given labeling.
pub fn anneal_from_classes(
    cloud: &SampleCloud,
    delta: f64,
    p: f64,
    profile: &RadialProfile,
    classes: Vec<Class>,
    schedule: &AnnealSchedule,
    seed: u64,
) -> Result<AnnealResult> {
    if classes.len() != cloud.len() {
        return Err(Error::SizeMismatch { left: classes.len(), right: cloud.len() });
    }
    let ca = classes.iter().filter(|c| **c == Class::A).count();
    let co = classes.iter().filter(|c| **c == Class::O).count();
    if ca != co {
        return Err(Error::Infeasible("the Wasserstein term needs equal class sizes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    anneal_from(cloud, delta, p, profile, classes, schedule, &mut rng)
}

fn anneal_from(
    cloud: &SampleCloud,
    delta: f64,
    p: f64,
    profile: &RadialProfile,
    mut classes: Vec<Class>,
    schedule: &AnnealSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<AnnealResult> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    let n = cloud.len();
    let nb = Neighbors::build(cloud, delta, profile);
    let scale = prefactor(n, cloud.dim(), delta);
    let mut gf = GfState::new(&nb, classes.iter().map(|c| *c == Class::A).collect(), scale);
    let members = |classes: &[Class], c: Class| -> Vec<usize> { (0..n).filter(|&i| classes[i] == c).collect() };
    let mut wass = subset_wasserstein(cloud, &members(&classes, Class::A), &members(&classes, Class::O), p)?;
    let initial_gf = gf.value();
    let initial = initial_gf + wass;
    let mut current = initial;
    let mut best = (current, gf.value(), wass, classes.clone());
    let mut trace = Vec::with_capacity(schedule.steps);
    let mut accepted = 0;
    let distinct = classes.iter().any(|c| *c != classes[0]);

    for step in 0..schedule.steps {
        let temperature = schedule.temperature(step);
        if distinct {
            let i = rng.gen_range(0..n);
            let mut j = rng.gen_range(0..n);
            while classes[j] == classes[i] {
                j = rng.gen_range(0..n);
            }
            let (ci, cj) = (classes[i], classes[j]);
            let a_changes = (ci == Class::A) != (cj == Class::A);
            let gf_before = gf.sum;
            if a_changes {
                gf.flip(i);
                gf.flip(j);
            }
            classes[i] = cj;
            classes[j] = ci;
            // Every swap moves a point into or out of A or O.
            let new_w = subset_wasserstein(cloud, &members(&classes, Class::A), &members(&classes, Class::O), p)?;
            let proposal = gf.value() + new_w;
            let diff = proposal - current;
            let accept = if temperature > 0.0 {
                diff <= 0.0 || rng.gen::<f64>() < (-diff / temperature).exp()
            } else {
                diff < 0.0
            };
            if accept {
                current = proposal;
                wass = new_w;
                accepted += 1;
                if current < best.0 {
                    best = (current, gf.value(), wass, classes.clone());
                }
            } else {
                classes[i] = ci;
                classes[j] = cj;
                if a_changes {
                    gf.flip(i);
                    gf.flip(j);
                    gf.sum = gf_before;
                }
            }
        }
        trace.push(TracePoint { step, energy: best.0, temperature });
    }

    let (best_energy, best_gf, best_wasserstein, best_classes) = best;
    let labels_a = LabelVector::new(best_classes.iter().map(|c| if *c == Class::A { 1.0 } else { 0.0 }).collect());
    let labels_o = LabelVector::new(best_classes.iter().map(|c| if *c == Class::O { 1.0 } else { 0.0 }).collect());
    Ok(AnnealResult {
        labels_a,
        labels_o,
        classes: best_classes,
        best_energy,
        best_gf,
        best_wasserstein,
        initial_energy: initial,
        initial_gf,
        trace,
        accepted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{sample_iid, DensityModel};

    fn uniform_cloud(n: usize, seed: u64) -> SampleCloud {
        sample_iid(&DensityModel::uniform(Domain::unit(2).unwrap()), n, seed).unwrap()
    }

    #[test]
    fn constant_labels_have_zero_energy() {
        let c = uniform_cloud(200, 1);
        let k = RadialProfile::unit_step();
        for v in [0.0, 1.0] {
            let u = LabelVector::constant(200, v);
            assert_eq!(gf_energy_naive(&c, &u, 0.2, &k).unwrap().value, 0.0);
            assert_eq!(gf_energy_grid(&c, &u, 0.2, &k).unwrap().value, 0.0);
        }
    }

    #[test]
    fn two_point_hand_value() {
        let c = SampleCloud::from_points(2, vec![0.1, 0.1, 0.1, 0.3], 0, "manual").unwrap();
        let u = LabelVector::new(vec![0.0, 1.0]);
        let k = RadialProfile::unit_step();
        let e = gf_energy_naive(&c, &u, 0.5, &k).unwrap();
        assert!((e.value - 4.0).abs() < 1e-14);
        assert_eq!(e.pair_count, 1);
        assert_eq!(gf_energy_grid(&c, &u, 0.5, &k).unwrap(), e);
    }

    #[test]
    fn out_of_range_labels_are_infinite() {
        let c = uniform_cloud(10, 2);
        let mut v = vec![0.5; 10];
        v[3] = 1.2;
        let e = gf_energy_grid(&c, &LabelVector::new(v), 0.3, &RadialProfile::unit_step()).unwrap();
        assert!(e.is_infinite());
    }

    #[test]
    fn isolated_points_with_binary_labels() {
        let c = uniform_cloud(50, 3);
        let u = LabelVector::from_shape(&c, &ShapeSpec::lower_half(2, 0, 0.5));
        let e = gf_energy_grid(&c, &u, 1e-9, &RadialProfile::unit_step()).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn grid_matches_naive_with_fractional_labels() {
        let c = uniform_cloud(700, 4);
        let u = LabelVector::from_fn(&c, |x| x[0] * x[1]);
        let k = RadialProfile::tent(1.5, 1.2).unwrap();
        let a = gf_energy_naive(&c, &u, 0.15, &k).unwrap();
        let b = gf_energy_grid(&c, &u, 0.15, &k).unwrap();
        assert!((a.value - b.value).abs() <= 1e-12 * a.value);
        assert_eq!(a.pair_count, b.pair_count);
    }

    #[test]
    fn label_csv_round_trip() {
        let u = LabelVector::new(vec![0.0, 0.25, 1.0]);
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"u\n"));
        assert_eq!(LabelVector::read_csv(&buf[..]).unwrap(), u);
    }

    #[test]
    fn overlapping_shapes_are_infinite() {
        let d = Domain::unit(2).unwrap();
        let c = uniform_cloud(100, 5);
        let a = ShapeSpec::lower_half(2, 0, 0.6);
        let o = ShapeSpec::lower_half(2, 0, 0.4).complemented();
        let e = g_energy(&c, &d, &a, &o, 0.2, 1.0, &RadialProfile::unit_step(), &WassersteinConfig::default()).unwrap();
        assert!(e.total.is_infinite());
    }

    #[test]
    fn halves_cost_at_least_barycenter_distance() {
        let d = Domain::unit(2).unwrap();
        let c = uniform_cloud(400, 6);
        let a = ShapeSpec::lower_half(2, 0, 0.5);
        let o = a.clone().complemented();
        let e = g_energy(&c, &d, &a, &o, 0.2, 1.0, &RadialProfile::unit_step(), &WassersteinConfig::default()).unwrap();
        let w = e.wasserstein.unwrap();
        assert!(w.value >= 0.5 - 1e-9 - w.error);
        assert!(e.total.value >= e.gf.value + 0.5 - 1e-9 - w.error);
    }

    #[test]
    fn greedy_anneal_never_increases() {
        let c = uniform_cloud(60, 7);
        let r = anneal_minimize(&c, 0.3, 1.0, &RadialProfile::unit_step(), 15, 15, &AnnealSchedule::greedy(300), 9).unwrap();
        assert!(r.best_energy <= r.initial_energy);
        assert!(r.trace.windows(2).all(|w| w[1].energy <= w[0].energy));
        let (gf, w) = class_energy(&c, &r.classes, 0.3, 1.0, &RadialProfile::unit_step()).unwrap();
        assert!((gf + w - r.best_energy).abs() < 1e-9 * r.best_energy.max(1.0));
    }

    #[test]
    fn zero_steps_echo_initial_energy() {
        let c = uniform_cloud(30, 8);
        let r = anneal_minimize(&c, 0.3, 1.0, &RadialProfile::unit_step(), 5, 5, &AnnealSchedule::greedy(0), 1).unwrap();
        assert_eq!(r.best_energy, r.initial_energy);
        assert!(r.trace.is_empty());
    }

    #[test]
    fn infeasible_targets_are_rejected() {
        let c = uniform_cloud(10, 9);
        let k = RadialProfile::unit_step();
        assert!(anneal_minimize(&c, 0.3, 1.0, &k, 6, 6, &AnnealSchedule::greedy(1), 1).is_err());
        assert!(anneal_minimize(&c, 0.3, 1.0, &k, 3, 2, &AnnealSchedule::greedy(1), 1).is_err());
    }
}
