//! Container boxes, bounded Lipschitz densities, i.i.d. sampling and
//! parametric subsets of the container.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dist2, halton};

/// Axis-aligned open box `(lo_1, hi_1) x ... x (lo_d, hi_d)` with `d >= 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainRepr", into = "DomainRepr")]
pub struct Domain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DomainRepr {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl TryFrom<DomainRepr> for Domain {
    type Error = Error;
    fn try_from(r: DomainRepr) -> Result<Self> {
        Domain::new(r.lo, r.hi)
    }
}

impl From<Domain> for DomainRepr {
    fn from(d: Domain) -> Self {
        DomainRepr { lo: d.lo, hi: d.hi }
    }
}

impl Domain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::InvalidDomain(format!(
                "bounds have different dimensions ({} vs {})",
                lo.len(),
                hi.len()
            )));
        }
        if lo.len() < 2 {
            return Err(Error::InvalidDomain(format!("dimension must be at least 2, got {}", lo.len())));
        }
        for (k, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if !(a.is_finite() && b.is_finite() && b > a) {
                return Err(Error::InvalidDomain(format!("axis {k}: need lo < hi, got [{a}, {b}]")));
            }
        }
        Ok(Self { lo, hi })
    }

    /// The unit cube `(0, 1)^d`.
    pub fn unit(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.extent(k)).product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim()).map(|k| self.extent(k).powi(2)).sum::<f64>().sqrt()
    }

    /// Membership in the closure of the box.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutsideDomain { point: x.to_vec() })
        }
    }
}

/// Density family: constant, or affine `c0 + slope . x` before normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityKind {
    Uniform,
    Affine { c0: f64, slope: Vec<f64> },
}

/// Probability density on a [`Domain`], normalized at construction, with its
/// lower bound `a`, upper bound `b` and Lipschitz constant.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityModel {
    domain: Domain,
    kind: DensityKind,
    normalizer: f64,
    lower: f64,
    upper: f64,
    lipschitz: f64,
}

impl DensityModel {
    pub fn uniform(domain: Domain) -> Self {
        let v = 1.0 / domain.volume();
        Self { domain, kind: DensityKind::Uniform, normalizer: 1.0, lower: v, upper: v, lipschitz: 0.0 }
    }

    /// `rho(x) = (c0 + slope . x) / Z` with `Z` the integral over the domain.
    pub fn affine(domain: Domain, c0: f64, slope: Vec<f64>) -> Result<Self> {
        if slope.len() != domain.dim() {
            return Err(Error::InvalidDensity(format!(
                "slope has {} components, domain has dimension {}",
                slope.len(),
                domain.dim()
            )));
        }
        if !c0.is_finite() || slope.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidDensity("non-finite coefficients".into()));
        }
        let center = domain.center();
        let normalizer = domain.volume() * (c0 + dot(&slope, &center));
        let mut min_raw = c0;
        let mut max_raw = c0;
        for (k, s) in slope.iter().enumerate() {
            let (a, b) = (s * domain.lo()[k], s * domain.hi()[k]);
            min_raw += a.min(b);
            max_raw += a.max(b);
        }
        if min_raw <= 0.0 || normalizer <= 0.0 {
            return Err(Error::InvalidDensity(format!(
                "affine density must be bounded away from zero on the domain (minimum {min_raw})"
            )));
        }
        let lipschitz = slope.iter().map(|s| s * s).sum::<f64>().sqrt() / normalizer;
        Ok(Self {
            domain,
            kind: DensityKind::Affine { c0, slope },
            normalizer,
            lower: min_raw / normalizer,
            upper: max_raw / normalizer,
            lipschitz,
        })
    }

    pub fn from_kind(domain: Domain, kind: &DensityKind) -> Result<Self> {
        match kind {
            DensityKind::Uniform => Ok(Self::uniform(domain)),
            DensityKind::Affine { c0, slope } => Self::affine(domain, *c0, slope.clone()),
        }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn kind(&self) -> &DensityKind {
        &self.kind
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.kind, DensityKind::Uniform)
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower
    }

    pub fn upper_bound(&self) -> f64 {
        self.upper
    }

    pub fn lipschitz_constant(&self) -> f64 {
        self.lipschitz
    }

    /// Gradient of the normalized density (constant for this family).
    pub fn gradient(&self) -> Vec<f64> {
        match &self.kind {
            DensityKind::Uniform => vec![0.0; self.domain.dim()],
            DensityKind::Affine { slope, .. } => slope.iter().map(|s| s / self.normalizer).collect(),
        }
    }

    /// Density value without the domain check.
    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            DensityKind::Uniform => self.lower,
            DensityKind::Affine { c0, slope } => (c0 + dot(slope, x)) / self.normalizer,
        }
    }

    /// Density at `x`, which must lie in the (closed) domain.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.domain.check_point(x)?;
        Ok(self.value(x))
    }

    /// `nu(B ∩ D)` for an axis-aligned box `B`, exact for this density family.
    pub fn box_mass(&self, lo: &[f64], hi: &[f64]) -> f64 {
        let mut vol = 1.0;
        let mut center = Vec::with_capacity(lo.len());
        for k in 0..lo.len() {
            let a = lo[k].max(self.domain.lo()[k]);
            let b = hi[k].min(self.domain.hi()[k]);
            if b <= a {
                return 0.0;
            }
            vol *= b - a;
            center.push(0.5 * (a + b));
        }
        vol * self.value(&center)
    }

    /// Short identifier used for provenance in sample clouds and reports.
    pub fn id(&self) -> String {
        match &self.kind {
            DensityKind::Uniform => "uniform".to_string(),
            DensityKind::Affine { c0, slope } => format!("affine(c0={c0},slope={slope:?})"),
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `n` points in `d` dimensions stored row-major, with seed provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCloud {
    dim: usize,
    points: Vec<f64>,
    pub seed: u64,
    pub density_id: String,
}

impl SampleCloud {
    pub fn from_points(dim: usize, points: Vec<f64>, seed: u64, density_id: impl Into<String>) -> Result<Self> {
        if dim == 0 || points.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} coordinates do not form points of dimension {dim}",
                points.len()
            )));
        }
        if points.is_empty() {
            return Err(Error::InvalidArgument("a sample cloud needs at least one point".into()));
        }
        Ok(Self { dim, points, seed, density_id: density_id.into() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.points
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    /// Empirical mass of the axis-aligned box `[lo, hi]`.
    pub fn box_fraction(&self, lo: &[f64], hi: &[f64]) -> f64 {
        let inside = self
            .iter()
            .filter(|p| p.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| *a <= *v && *v <= *b))
            .count();
        inside as f64 / self.len() as f64
    }

    /// Writes the points as CSV with header `x1,...,xd`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record((1..=self.dim).map(|k| format!("x{k}")))?;
        for p in self.iter() {
            w.write_record(p.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, seed: u64, density_id: impl Into<String>) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let dim = r.headers()?.len();
        let mut points = Vec::new();
        for record in r.records() {
            let record = record?;
            for field in record.iter() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("not a number: {field:?}")))?;
                points.push(v);
            }
        }
        Self::from_points(dim, points, seed, density_id)
    }
}

/// Draws `n` i.i.d. points from `model` by rejection against the uniform
/// envelope at the density upper bound.
pub fn sample_iid(model: &DensityModel, n: usize, seed: u64) -> Result<SampleCloud> {
    sample_iid_with_stats(model, n, seed).map(|(cloud, _)| cloud)
}

/// As [`sample_iid`], also returning the number of proposals drawn.
pub fn sample_iid_with_stats(model: &DensityModel, n: usize, seed: u64) -> Result<(SampleCloud, u64)> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let domain = model.domain();
    let d = domain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n * d);
    let mut x = vec![0.0; d];
    let mut proposals = 0u64;
    let envelope = model.upper_bound();
    let mut accepted = 0;
    while accepted < n {
        proposals += 1;
        for (k, xk) in x.iter_mut().enumerate() {
            *xk = domain.lo()[k] + rng.gen::<f64>() * domain.extent(k);
        }
        let u: f64 = rng.gen();
        if model.is_uniform() || u * envelope <= model.value(&x) {
            points.extend_from_slice(&x);
            accepted += 1;
        }
    }
    let cloud = SampleCloud::from_points(d, points, seed, model.id())?;
    Ok((cloud, proposals))
}

/// Parametric shape families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeKind {
    /// `{x : normal . x <= offset}`.
    HalfSpace { normal: Vec<f64>, offset: f64 },
    /// Closed ball.
    Ball { center: Vec<f64>, radius: f64 },
    /// Closed box `[lo, hi]`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

/// A measurable subset of the container, optionally complemented.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    #[serde(flatten)]
    pub kind: ShapeKind,
    #[serde(default)]
    pub complement: bool,
}

/// Volume together with an error bound (zero for closed-form values).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeEstimate {
    pub value: f64,
    pub error: f64,
    pub exact: bool,
}

const QMC_VOLUME_POINTS: u64 = 1 << 16;

impl ShapeSpec {
    pub fn half_space(normal: Vec<f64>, offset: f64) -> Self {
        Self { kind: ShapeKind::HalfSpace { normal, offset }, complement: false }
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        Self { kind: ShapeKind::Ball { center, radius }, complement: false }
    }

    pub fn cuboid(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        Self { kind: ShapeKind::Box { lo, hi }, complement: false }
    }

    /// The set `{x_axis <= t}` in dimension `dim`.
    pub fn lower_half(dim: usize, axis: usize, t: f64) -> Self {
        let mut normal = vec![0.0; dim];
        normal[axis] = 1.0;
        Self::half_space(normal, t)
    }

    pub fn complemented(mut self) -> Self {
        self.complement = !self.complement;
        self
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            ShapeKind::HalfSpace { normal, .. } => normal.len(),
            ShapeKind::Ball { center, .. } => center.len(),
            ShapeKind::Box { lo, .. } => lo.len(),
        }
    }

    pub fn validate(&self, domain: &Domain) -> Result<()> {
        let d = domain.dim();
        let bad = |msg: String| Err(Error::InvalidShape(msg));
        match &self.kind {
            ShapeKind::HalfSpace { normal, offset } => {
                if normal.len() != d {
                    return bad(format!("normal has dimension {}, domain {d}", normal.len()));
                }
                if normal.iter().all(|v| *v == 0.0) || normal.iter().any(|v| !v.is_finite()) || !offset.is_finite() {
                    return bad("half-space needs a finite nonzero normal".into());
                }
            }
            ShapeKind::Ball { center, radius } => {
                if center.len() != d {
                    return bad(format!("center has dimension {}, domain {d}", center.len()));
                }
                if !(*radius > 0.0 && radius.is_finite()) {
                    return bad(format!("radius must be positive, got {radius}"));
                }
            }
            ShapeKind::Box { lo, hi } => {
                if lo.len() != d || hi.len() != d {
                    return bad("box bounds must match the domain dimension".into());
                }
                if lo.iter().zip(hi).any(|(a, b)| !(b > a)) {
                    return bad("box needs lo < hi on every axis".into());
                }
            }
        }
        Ok(())
    }

    /// Closed-set membership; the complement flag flips the result.
    pub fn indicator(&self, x: &[f64]) -> bool {
        let inside = match &self.kind {
            ShapeKind::HalfSpace { normal, offset } => dot(normal, x) <= *offset,
            ShapeKind::Ball { center, radius } => dist2(center, x) <= radius * radius,
            ShapeKind::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| *a <= *v && *v <= *b),
        };
        inside != self.complement
    }

    /// Bounding box of `shape ∩ D` (the whole domain when no tighter box is known).
    pub fn bounding_box(&self, domain: &Domain) -> (Vec<f64>, Vec<f64>) {
        let (mut lo, mut hi) = (domain.lo().to_vec(), domain.hi().to_vec());
        if self.complement {
            return (lo, hi);
        }
        match &self.kind {
            ShapeKind::HalfSpace { normal, offset } => {
                // Axis-aligned half-spaces clip one coordinate.
                let nz: Vec<usize> = (0..normal.len()).filter(|&k| normal[k] != 0.0).collect();
                if nz.len() == 1 {
                    let k = nz[0];
                    let t = offset / normal[k];
                    if normal[k] > 0.0 {
                        hi[k] = hi[k].min(t);
                    } else {
                        lo[k] = lo[k].max(t);
                    }
                }
            }
            ShapeKind::Ball { center, radius } => {
                for k in 0..lo.len() {
                    lo[k] = lo[k].max(center[k] - radius);
                    hi[k] = hi[k].min(center[k] + radius);
                }
            }
            ShapeKind::Box { lo: blo, hi: bhi } => {
                for k in 0..lo.len() {
                    lo[k] = lo[k].max(blo[k]);
                    hi[k] = hi[k].min(bhi[k]);
                }
            }
        }
        (lo, hi)
    }

    /// Lebesgue volume of `shape ∩ D`.
    pub fn volume(&self, domain: &Domain) -> Result<VolumeEstimate> {
        self.validate(domain)?;
        let base = match &self.kind {
            ShapeKind::Box { lo, hi } => VolumeEstimate { value: box_overlap(domain, lo, hi), error: 0.0, exact: true },
            ShapeKind::HalfSpace { normal, offset } => VolumeEstimate {
                value: half_space_box_volume(domain.lo(), domain.hi(), normal, *offset),
                error: 0.0,
                exact: true,
            },
            ShapeKind::Ball { center, radius } => {
                let inside = (0..domain.dim())
                    .all(|k| center[k] - radius >= domain.lo()[k] && center[k] + radius <= domain.hi()[k]);
                if inside {
                    VolumeEstimate { value: ball_volume(domain.dim(), *radius), error: 0.0, exact: true }
                } else {
                    qmc_volume(&ShapeSpec { kind: self.kind.clone(), complement: false }, domain)?
                }
            }
        };
        let est = if self.complement {
            VolumeEstimate { value: domain.volume() - base.value, ..base }
        } else {
            base
        };
        let floor = 1e-14 * domain.volume();
        if est.value <= floor.max(est.error) {
            return Err(Error::EmptyIntersection);
        }
        Ok(est)
    }
}

fn box_overlap(domain: &Domain, lo: &[f64], hi: &[f64]) -> f64 {
    (0..domain.dim())
        .map(|k| (hi[k].min(domain.hi()[k]) - lo[k].max(domain.lo()[k])).max(0.0))
        .product()
}

/// Volume of the `d`-ball of radius `r`.
pub fn ball_volume(d: usize, r: f64) -> f64 {
    let half = d as f64 / 2.0;
    std::f64::consts::PI.powf(half) / statrs::function::gamma::gamma(half + 1.0) * r.powi(d as i32)
}

/// Exact volume of `{x in [lo, hi] : normal . x <= offset}` by inclusion–exclusion
/// over the box vertices.
pub fn half_space_box_volume(lo: &[f64], hi: &[f64], normal: &[f64], offset: f64) -> f64 {
    let d = lo.len();
    let box_vol: f64 = (0..d).map(|k| hi[k] - lo[k]).product();
    // Substitute x = lo + w*y with y in the unit cube and flip negative coefficients.
    let mut s = offset - dot(normal, lo);
    let mut coeffs = Vec::with_capacity(d);
    let scale = (0..d).map(|k| (normal[k] * (hi[k] - lo[k])).abs()).fold(0.0, f64::max);
    for k in 0..d {
        let a = normal[k] * (hi[k] - lo[k]);
        if a.abs() <= 1e-9 * scale {
            // Negligible coefficient: replace y_k by its mean.
            s -= 0.5 * a;
        } else if a < 0.0 {
            s -= a;
            coeffs.push(-a);
        } else {
            coeffs.push(a);
        }
    }
    let m = coeffs.len();
    if m == 0 {
        return if s >= 0.0 { box_vol } else { 0.0 };
    }
    let total: f64 = coeffs.iter().sum();
    if s <= 0.0 {
        return 0.0;
    }
    if s >= total {
        return box_vol;
    }
    let mut frac = 0.0;
    for mask in 0u32..(1u32 << m) {
        let shift: f64 = (0..m).filter(|&k| mask & (1 << k) != 0).map(|k| coeffs[k]).sum();
        let t = s - shift;
        if t > 0.0 {
            let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            frac += sign * t.powi(m as i32);
        }
    }
    let factorial: f64 = (1..=m).map(|k| k as f64).product();
    let prod: f64 = coeffs.iter().product();
    (frac / (factorial * prod)).clamp(0.0, 1.0) * box_vol
}

fn qmc_volume(shape: &ShapeSpec, domain: &Domain) -> Result<VolumeEstimate> {
    let (lo, hi) = shape.bounding_box(domain);
    if (0..lo.len()).any(|k| hi[k] <= lo[k]) {
        return Err(Error::EmptyIntersection);
    }
    let box_vol: f64 = (0..lo.len()).map(|k| hi[k] - lo[k]).product();
    let d = domain.dim();
    let mut x = vec![0.0; d];
    let mut hits = 0u64;
    for i in 1..=QMC_VOLUME_POINTS {
        let u = halton(i, d);
        for k in 0..d {
            x[k] = lo[k] + u[k] * (hi[k] - lo[k]);
        }
        if shape.indicator(&x) {
            hits += 1;
        }
    }
    let p = hits as f64 / QMC_VOLUME_POINTS as f64;
    // Binomial 3-sigma bound; conservative for a low-discrepancy sequence.
    let error = 3.0 * (p * (1.0 - p) / QMC_VOLUME_POINTS as f64).sqrt() * box_vol + box_vol / QMC_VOLUME_POINTS as f64;
    Ok(VolumeEstimate { value: p * box_vol, error, exact: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit2() -> Domain {
        Domain::unit(2).unwrap()
    }

    fn affine_model() -> DensityModel {
        DensityModel::affine(unit2(), 1.0, vec![0.5, 0.0]).unwrap()
    }

    #[test]
    fn domain_rejects_bad_bounds() {
        assert!(Domain::new(vec![0.0], vec![1.0]).is_err());
        assert!(Domain::new(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(Domain::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert_eq!(Domain::new(vec![0.0, -1.0], vec![2.0, 1.0]).unwrap().volume(), 4.0);
    }

    #[test]
    fn density_values_match_closed_forms() {
        let uni = DensityModel::uniform(unit2());
        assert_eq!(uni.eval(&[0.3, 0.7]).unwrap(), 1.0);
        let aff = affine_model();
        assert!((aff.eval(&[0.0, 0.0]).unwrap() - 0.8).abs() < 1e-15);
        assert!((aff.eval(&[1.0, 0.0]).unwrap() - 1.2).abs() < 1e-15);
        assert!((aff.lower_bound() - 0.8).abs() < 1e-15);
        assert!((aff.upper_bound() - 1.2).abs() < 1e-15);
        assert!((aff.lipschitz_constant() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn density_eval_outside_domain_is_an_error() {
        let uni = DensityModel::uniform(unit2());
        assert!(matches!(uni.eval(&[1.5, 0.5]), Err(Error::OutsideDomain { .. })));
    }

    #[test]
    fn affine_density_must_stay_positive() {
        assert!(DensityModel::affine(unit2(), 0.1, vec![-1.0, 0.0]).is_err());
    }

    #[test]
    fn box_mass_is_exact_for_affine() {
        let aff = affine_model();
        // ∫_{x1>0.5} (1 + 0.5 x1)/1.25 = 0.55
        assert!((aff.box_mass(&[0.5, 0.0], &[1.0, 1.0]) - 0.55).abs() < 1e-15);
        assert!((aff.box_mass(&[-1.0, -1.0], &[2.0, 2.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_point_cloud_lies_in_domain() {
        let aff = affine_model();
        for seed in 0..20 {
            let c = sample_iid(&aff, 1, seed).unwrap();
            assert_eq!(c.len(), 1);
            assert!(unit2().contains(c.point(0)));
        }
        assert!(sample_iid(&aff, 0, 1).is_err());
    }

    #[test]
    fn uniform_sample_mean_is_central() {
        let c = sample_iid(&DensityModel::uniform(unit2()), 1000, 7).unwrap();
        for k in 0..2 {
            let m: f64 = c.iter().map(|p| p[k]).sum::<f64>() / 1000.0;
            assert!((m - 0.5).abs() <= 4.0 / 1000f64.sqrt(), "axis {k} mean {m}");
        }
    }

    #[test]
    fn affine_sample_splits_mass_correctly() {
        let c = sample_iid(&affine_model(), 100_000, 3).unwrap();
        let frac = c.iter().filter(|p| p[0] > 0.5).count() as f64 / 1e5;
        assert!((frac - 0.55).abs() < 0.01, "fraction {frac}");
    }

    #[test]
    fn sampling_is_reproducible() {
        let aff = affine_model();
        let a = sample_iid(&aff, 500, 11).unwrap();
        let b = sample_iid(&aff, 500, 11).unwrap();
        assert_eq!(a.coords(), b.coords());
        let c = sample_iid(&aff, 500, 12).unwrap();
        assert_ne!(a.coords(), c.coords());
    }

    #[test]
    fn acceptance_ratio_matches_envelope() {
        let aff = affine_model();
        let n = 50_000;
        let (_, proposals) = sample_iid_with_stats(&aff, n, 5).unwrap();
        let expected = 1.0 / (aff.upper_bound() * unit2().volume());
        let observed = n as f64 / proposals as f64;
        let sigma = (expected * (1.0 - expected) / proposals as f64).sqrt();
        assert!((observed - expected).abs() <= 3.0 * sigma, "{observed} vs {expected}");
    }

    #[test]
    fn csv_round_trip() {
        let c = sample_iid(&affine_model(), 17, 2).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("x1,x2\n"));
        let back = SampleCloud::read_csv(&buf[..], 2, c.density_id.clone()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn shape_indicators() {
        let half = ShapeSpec::lower_half(2, 0, 0.5);
        assert!(half.indicator(&[0.2, 0.9]));
        assert!(half.indicator(&[0.5, 0.1]));
        assert!(!half.clone().complemented().indicator(&[0.5, 0.1]));
        let ball = ShapeSpec::ball(vec![0.5, 0.5], 0.25);
        assert!(!ball.indicator(&[0.9, 0.9]));
        assert!(ball.indicator(&[0.75, 0.5]));
    }

    #[test]
    fn shape_volumes() {
        let d = unit2();
        let v = ShapeSpec::lower_half(2, 0, 0.5).volume(&d).unwrap();
        assert!(v.exact && (v.value - 0.5).abs() < 1e-15);
        let v = ShapeSpec::ball(vec![0.5, 0.5], 0.25).volume(&d).unwrap();
        assert!((v.value - std::f64::consts::PI / 16.0).abs() < 1e-15);
        let v = ShapeSpec::cuboid(vec![0.0, 0.0], vec![0.3, 0.3]).volume(&d).unwrap();
        assert!((v.value - 0.09).abs() < 1e-15);
        let v = ShapeSpec::ball(vec![0.0, 0.0], 0.5).volume(&d).unwrap();
        assert!(!v.exact);
        let quarter = std::f64::consts::PI * 0.25 / 4.0;
        assert!((v.value - quarter).abs() <= v.error, "{} ± {} vs {quarter}", v.value, v.error);
        assert!(matches!(
            ShapeSpec::cuboid(vec![2.0, 2.0], vec![3.0, 3.0]).volume(&d),
            Err(Error::EmptyIntersection)
        ));
        assert!(matches!(ShapeSpec::lower_half(2, 0, -1.0).volume(&d), Err(Error::EmptyIntersection)));
    }

    #[test]
    fn oblique_half_space_volume_matches_triangle() {
        // {x + y <= 1} in the unit square is half of it; {x + y <= 0.5} is 1/8.
        let v = half_space_box_volume(&[0.0, 0.0], &[1.0, 1.0], &[1.0, 1.0], 1.0);
        assert!((v - 0.5).abs() < 1e-15);
        let v = half_space_box_volume(&[0.0, 0.0], &[1.0, 1.0], &[1.0, 1.0], 0.5);
        assert!((v - 0.125).abs() < 1e-15);
        let v = half_space_box_volume(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0], &[-1.0, -1.0, -1.0], -2.5);
        assert!((v - 1.0 / 48.0).abs() < 1e-14);
    }

    #[test]
    fn shape_json_round_trip() {
        let s = ShapeSpec::ball(vec![0.5, 0.5], 0.2).complemented();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<ShapeSpec>(&json).unwrap(), s);
        let h: ShapeSpec = serde_json::from_str(r#"{"kind":"half_space","normal":[1,0],"offset":0.5}"#).unwrap();
        assert_eq!(h, ShapeSpec::lower_half(2, 0, 0.5));
    }
}
