//! Continuum reference functionals on regular grids: the nonlocal energy
//! `F_delta`, its `Phi + Psi` split, weighted perimeters and the companion-set
//! transport problem.

mod companion;
mod stencil;
mod tv;

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{DensityModel, Domain, ShapeSpec};
use crate::error::{Error, Result};
use crate::kernels::RadialProfile;
use crate::numerics::compensated_sum;

pub use companion::{companion_set_lp, companion_set_lp_mask, CompanionSolution};
pub use stencil::{KernelStencil, StencilRow};
pub use tv::{weighted_perimeter_grid, weighted_tv_analytic, TvMethod, WeightedTVValue};

pub const GRID_SCHEMA_VERSION: u32 = 1;

/// `Unit` holds `u` in `[0, 1]`; `Signed` holds `v = 2u - 1` in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueRange {
    Unit,
    Signed,
}

impl ValueRange {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            ValueRange::Unit => (0.0, 1.0),
            ValueRange::Signed => (-1.0, 1.0),
        }
    }
}

/// Cell-center values on a regular grid covering the domain, row-major with
/// the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    domain: Domain,
    resolution: Vec<usize>,
    values: Vec<f64>,
    range: ValueRange,
}

/// JSON sidecar written next to the CSV values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridMeta {
    pub schema_version: u32,
    pub domain: Domain,
    pub resolution: Vec<usize>,
    pub range: ValueRange,
}

impl GridFunction {
    pub fn new(domain: Domain, resolution: Vec<usize>, values: Vec<f64>, range: ValueRange) -> Result<Self> {
        if resolution.len() != domain.dim() {
            return Err(Error::SizeMismatch { left: resolution.len(), right: domain.dim() });
        }
        if resolution.iter().any(|&r| r == 0) {
            return Err(Error::InvalidArgument("grid resolution must be positive on every axis".into()));
        }
        let cells: usize = resolution.iter().product();
        if values.len() != cells {
            return Err(Error::SizeMismatch { left: values.len(), right: cells });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("grid values must be finite".into()));
        }
        Ok(Self { domain, resolution, values, range })
    }

    pub fn from_fn(domain: Domain, resolution: Vec<usize>, range: ValueRange, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        if resolution.len() != domain.dim() {
            return Err(Error::SizeMismatch { left: resolution.len(), right: domain.dim() });
        }
        let cells: usize = resolution.iter().product();
        let values = (0..cells).map(|i| f(&cell_center(&domain, &resolution, i))).collect();
        Self::new(domain, resolution, values, range)
    }

    pub fn constant(domain: Domain, resolution: Vec<usize>, range: ValueRange, c: f64) -> Result<Self> {
        let cells = resolution.iter().product();
        Self::new(domain, resolution, vec![c; cells], range)
    }

    /// `u = 1` on cells whose center lies in the shape.
    pub fn indicator(domain: Domain, resolution: Vec<usize>, shape: &ShapeSpec) -> Result<Self> {
        if shape.dim() != domain.dim() {
            return Err(Error::SizeMismatch { left: shape.dim(), right: domain.dim() });
        }
        Self::from_fn(domain, resolution, ValueRange::Unit, |x| if shape.indicator(x) { 1.0 } else { 0.0 })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.resolution.len()
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn range(&self) -> ValueRange {
        self.range
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cell_widths(&self) -> Vec<f64> {
        cell_widths(&self.domain, &self.resolution)
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_widths().iter().product()
    }

    pub fn cell_center(&self, index: usize) -> Vec<f64> {
        cell_center(&self.domain, &self.resolution, index)
    }

    pub fn in_range(&self) -> bool {
        let (lo, hi) = self.range.bounds();
        self.values.iter().all(|&v| v >= lo && v <= hi)
    }

    pub fn is_binary(&self) -> bool {
        let (lo, hi) = self.range.bounds();
        self.values.iter().all(|&v| v == lo || v == hi)
    }

    /// `v = 2u - 1`.
    pub fn to_signed(&self) -> GridFunction {
        match self.range {
            ValueRange::Signed => self.clone(),
            ValueRange::Unit => GridFunction {
                values: self.values.iter().map(|u| 2.0 * u - 1.0).collect(),
                range: ValueRange::Signed,
                ..self.clone()
            },
        }
    }

    /// `u = (v + 1) / 2`.
    pub fn to_unit(&self) -> GridFunction {
        match self.range {
            ValueRange::Unit => self.clone(),
            ValueRange::Signed => GridFunction {
                values: self.values.iter().map(|v| 0.5 * (v + 1.0)).collect(),
                range: ValueRange::Unit,
                ..self.clone()
            },
        }
    }

    /// `1 - u` (or `-v`).
    pub fn complement(&self) -> GridFunction {
        let values = match self.range {
            ValueRange::Unit => self.values.iter().map(|u| 1.0 - u).collect(),
            ValueRange::Signed => self.values.iter().map(|v| -v).collect(),
        };
        GridFunction { values, ..self.clone() }
    }

    /// `∫ f(x) u(x) dx` by the midpoint rule.
    pub fn integrate(&self, f: impl Fn(&[f64], f64) -> f64) -> f64 {
        let vol = self.cell_volume();
        compensated_sum((0..self.len()).map(|i| f(&self.cell_center(i), self.values[i]))) * vol
    }

    pub fn meta(&self) -> GridMeta {
        GridMeta {
            schema_version: GRID_SCHEMA_VERSION,
            domain: self.domain.clone(),
            resolution: self.resolution.clone(),
            range: self.range,
        }
    }

    /// One CSV row per line along the last axis.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        let m = *self.resolution.last().expect("nonempty resolution");
        for line in self.values.chunks(m) {
            w.write_record(line.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, meta: &GridMeta) -> Result<Self> {
        if meta.schema_version != GRID_SCHEMA_VERSION {
            return Err(Error::InvalidArgument(format!("unsupported grid schema version {}", meta.schema_version)));
        }
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
        let mut values = Vec::new();
        for rec in r.records() {
            for field in rec?.iter() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad grid value {field:?}")))?;
                values.push(v);
            }
        }
        Self::new(meta.domain.clone(), meta.resolution.clone(), values, meta.range)
    }

    /// Writes `<stem>.csv` and `<stem>.json`; returns both paths.
    pub fn save(&self, stem: &Path) -> Result<(PathBuf, PathBuf)> {
        let csv_path = stem.with_extension("csv");
        let json_path = stem.with_extension("json");
        self.write_csv(std::fs::File::create(&csv_path)?)?;
        serde_json::to_writer_pretty(std::fs::File::create(&json_path)?, &self.meta())?;
        Ok((csv_path, json_path))
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let meta: GridMeta = serde_json::from_reader(std::fs::File::open(stem.with_extension("json"))?)?;
        Self::read_csv(std::fs::File::open(stem.with_extension("csv"))?, &meta)
    }
}

pub(crate) fn cell_widths(domain: &Domain, resolution: &[usize]) -> Vec<f64> {
    (0..domain.dim()).map(|i| domain.extent(i) / resolution[i] as f64).collect()
}

pub(crate) fn cell_center(domain: &Domain, resolution: &[usize], mut index: usize) -> Vec<f64> {
    let d = resolution.len();
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        let k = index % resolution[i];
        index /= resolution[i];
        x[i] = domain.lo()[i] + (k as f64 + 0.5) * domain.extent(i) / resolution[i] as f64;
    }
    x
}

/// Quadrature context for `F_delta`, `Phi_delta` and `Psi_delta` on a fixed
/// grid; reuse it across many `u`.
#[derive(Debug, Clone)]
pub struct NonlocalQuadrature {
    domain: Domain,
    resolution: Vec<usize>,
    delta: f64,
    stencil: KernelStencil,
    rho: Vec<f64>,
}

impl NonlocalQuadrature {
    pub fn new(domain: &Domain, resolution: &[usize], rho: &DensityModel, delta: f64, profile: &RadialProfile) -> Result<Self> {
        if domain.dim() < 2 {
            return Err(Error::InvalidDomain(format!("dimension must be at least 2, got {}", domain.dim())));
        }
        if rho.domain() != domain {
            return Err(Error::InvalidDensity("density is defined on a different domain".into()));
        }
        if resolution.len() != domain.dim() || resolution.iter().any(|&r| r == 0) {
            return Err(Error::InvalidArgument(format!("bad grid resolution {resolution:?}")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
        }
        let h = cell_widths(domain, resolution);
        let stencil = KernelStencil::new(profile, delta, &h)?;
        let cells: usize = resolution.iter().product();
        let rho = (0..cells).map(|i| rho.value(&cell_center(domain, resolution, i))).collect();
        Ok(Self { domain: domain.clone(), resolution: resolution.to_vec(), delta, stencil, rho })
    }

    pub fn stencil(&self) -> &KernelStencil {
        &self.stencil
    }

    fn check(&self, g: &GridFunction, range: ValueRange) -> Result<()> {
        if g.domain != self.domain || g.resolution != self.resolution {
            return Err(Error::InvalidArgument("grid function lives on a different grid".into()));
        }
        if g.range != range {
            return Err(Error::InvalidArgument(format!("expected a {range:?} grid function, got {:?}", g.range)));
        }
        Ok(())
    }

    /// `F_delta(u; rho)`; `+inf` when `u` leaves `[0, 1]`.
    pub fn energy_f(&self, u: &GridFunction) -> Result<f64> {
        self.check(u, ValueRange::Unit)?;
        if !u.in_range() {
            return Ok(f64::INFINITY);
        }
        let a: Vec<f64> = u.values.iter().zip(&self.rho).map(|(u, r)| (1.0 - u) * r).collect();
        let b: Vec<f64> = u.values.iter().zip(&self.rho).map(|(u, r)| u * r).collect();
        Ok(2.0 / self.delta * self.bilinear(&a, &b))
    }

    /// `(Phi_delta(v), Psi_delta(v))`; both `+inf` when `v` leaves `[-1, 1]`.
    pub fn phi_psi(&self, v: &GridFunction) -> Result<(f64, f64)> {
        self.check(v, ValueRange::Signed)?;
        if !v.in_range() {
            return Ok((f64::INFINITY, f64::INFINITY));
        }
        let phi = self.pairwise_sq(&v.values) / (4.0 * self.delta);
        let a: Vec<f64> = v.values.iter().zip(&self.rho).map(|(v, r)| (1.0 - v * v) * r).collect();
        let psi = self.bilinear(&a, &self.rho) / (2.0 * self.delta);
        Ok((phi, psi))
    }

    /// `∬ kappa_delta(x - y) rho(x) rho(y) dx dy`.
    pub fn kernel_mass(&self) -> f64 {
        self.bilinear(&self.rho, &self.rho)
    }

    /// `sum_x a_x sum_k W_k b_{x+k}`.
    fn bilinear(&self, a: &[f64], b: &[f64]) -> f64 {
        self.reduce_lines(|x, row_base, w| {
            let av = a[x];
            if av == 0.0 {
                return 0.0;
            }
            let mut s = 0.0;
            for (k, wk) in w.iter().enumerate() {
                s += wk * b[row_base + k];
            }
            av * s
        })
    }

    /// `sum_x rho_x sum_k W_k rho_{x+k} (v_x - v_{x+k})^2`.
    fn pairwise_sq(&self, v: &[f64]) -> f64 {
        let rho = &self.rho;
        self.reduce_lines(|x, row_base, w| {
            let vx = v[x];
            let mut s = 0.0;
            for (k, wk) in w.iter().enumerate() {
                let diff = vx - v[row_base + k];
                s += wk * rho[row_base + k] * diff * diff;
            }
            rho[x] * s
        })
    }

    /// Sums `term(cell, target_start, weights)` over every cell and stencil
    /// row, with the row clipped to the grid. `target_start` indexes the value
    /// paired with `weights[0]`.
    fn reduce_lines<F>(&self, term: F) -> f64
    where
        F: Fn(usize, usize, &[f64]) -> f64 + Sync,
    {
        let d = self.resolution.len();
        let m = self.resolution[d - 1];
        let lead = &self.resolution[..d - 1];
        let lines: usize = lead.iter().product();
        let partial: Vec<f64> = (0..lines)
            .into_par_iter()
            .map(|line| {
                let mut idx = vec![0isize; d - 1];
                let mut rem = line;
                for i in (0..d - 1).rev() {
                    idx[i] = (rem % lead[i]) as isize;
                    rem /= lead[i];
                }
                let base = line * m;
                let mut acc = 0.0;
                let mut c = 0.0;
                for row in &self.stencil.rows {
                    let mut target = 0usize;
                    let mut inside = true;
                    for i in 0..d - 1 {
                        let t = idx[i] + row.offset[i];
                        if t < 0 || t >= lead[i] as isize {
                            inside = false;
                            break;
                        }
                        target = target * lead[i] + t as usize;
                    }
                    if !inside {
                        continue;
                    }
                    let tbase = target * m;
                    let half = row.half;
                    for j in 0..m {
                        let ji = j as isize;
                        let klo = (-half).max(-ji);
                        let khi = half.min(m as isize - 1 - ji);
                        if klo > khi {
                            continue;
                        }
                        let w = &row.weights[(klo + half) as usize..=(khi + half) as usize];
                        let start = (ji + klo) as usize + tbase;
                        // Kahan step per cell keeps the line sum order-stable.
                        let y = term(base + j, start, w) - c;
                        let t = acc + y;
                        c = (t - acc) - y;
                        acc = t;
                    }
                }
                acc
            })
            .collect();
        compensated_sum(partial)
    }
}

/// `F_delta(u; rho) = (2/delta) ∬ kappa_delta(x - y) (1 - u(x)) u(y) rho(x) rho(y)`
/// by exact cell-pair kernel weights and cell-center values.
pub fn nonlocal_energy_f(u: &GridFunction, rho: &DensityModel, delta: f64, profile: &RadialProfile) -> Result<f64> {
    NonlocalQuadrature::new(&u.domain, &u.resolution, rho, delta, profile)?.energy_f(u)
}

/// `(Phi_delta(v), Psi_delta(v))` on the same quadrature as `F_delta`.
pub fn phi_psi_decomposition(v: &GridFunction, rho: &DensityModel, delta: f64, profile: &RadialProfile) -> Result<(f64, f64)> {
    NonlocalQuadrature::new(&v.domain, &v.resolution, rho, delta, profile)?.phi_psi(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{alpha_d, kernel_mass};

    fn unit2() -> Domain {
        Domain::unit(2).unwrap()
    }

    #[test]
    fn constant_u_has_zero_energy() {
        let dom = unit2();
        let rho = DensityModel::uniform(dom.clone());
        for c in [0.0, 1.0] {
            let u = GridFunction::constant(dom.clone(), vec![32, 32], ValueRange::Unit, c).unwrap();
            assert_eq!(nonlocal_energy_f(&u, &rho, 0.1, &RadialProfile::unit_step()).unwrap(), 0.0);
        }
    }

    #[test]
    fn out_of_range_is_infinite() {
        let dom = unit2();
        let rho = DensityModel::uniform(dom.clone());
        let u = GridFunction::constant(dom.clone(), vec![16, 16], ValueRange::Unit, 1.5).unwrap();
        assert!(nonlocal_energy_f(&u, &rho, 0.2, &RadialProfile::unit_step()).unwrap().is_infinite());
        let v = GridFunction::constant(dom, vec![16, 16], ValueRange::Signed, -1.5).unwrap();
        let (phi, psi) = phi_psi_decomposition(&v, &rho, 0.2, &RadialProfile::unit_step()).unwrap();
        assert!(phi.is_infinite() && psi.is_infinite());
    }

    #[test]
    fn one_dimensional_input_is_rejected() {
        assert!(Domain::unit(1).is_err());
    }

    #[test]
    fn resolution_guard_applies() {
        let dom = unit2();
        let rho = DensityModel::uniform(dom.clone());
        let u = GridFunction::constant(dom, vec![16, 16], ValueRange::Unit, 0.5).unwrap();
        let r = nonlocal_energy_f(&u, &rho, 0.1, &RadialProfile::unit_step());
        assert!(matches!(r, Err(Error::Resolution { .. })));
    }

    #[test]
    fn phi_psi_constants() {
        let dom = unit2();
        let rho = DensityModel::affine(dom.clone(), 1.0, vec![0.4, -0.2]).unwrap();
        let p = RadialProfile::unit_step();
        let q = NonlocalQuadrature::new(&dom, &[40, 40], &rho, 0.1, &p).unwrap();
        let one = GridFunction::constant(dom.clone(), vec![40, 40], ValueRange::Signed, 1.0).unwrap();
        assert_eq!(q.phi_psi(&one).unwrap(), (0.0, 0.0));
        let zero = GridFunction::constant(dom, vec![40, 40], ValueRange::Signed, 0.0).unwrap();
        let (phi, psi) = q.phi_psi(&zero).unwrap();
        assert_eq!(phi, 0.0);
        assert!((psi - q.kernel_mass() / 0.2).abs() <= 1e-14 * psi);
    }

    #[test]
    fn decomposition_identity() {
        let dom = Domain::new(vec![0.0, -0.5], vec![1.0, 0.7]).unwrap();
        let rho = DensityModel::affine(dom.clone(), 2.0, vec![0.5, 0.3]).unwrap();
        let p = RadialProfile::tent(1.0, 1.0).unwrap();
        let q = NonlocalQuadrature::new(&dom, &[30, 36], &rho, 0.12, &p).unwrap();
        let v = GridFunction::from_fn(dom, vec![30, 36], ValueRange::Signed, |x| (7.0 * x[0] + 3.0 * x[1]).sin()).unwrap();
        let (phi, psi) = q.phi_psi(&v).unwrap();
        let f = q.energy_f(&v.to_unit()).unwrap();
        assert!(((phi + psi) - f).abs() <= 1e-10 * f, "{} vs {f}", phi + psi);
    }

    #[test]
    fn complement_symmetry() {
        let dom = unit2();
        let rho = DensityModel::affine(dom.clone(), 1.0, vec![0.5, 0.2]).unwrap();
        let q = NonlocalQuadrature::new(&dom, &[48, 48], &rho, 0.1, &RadialProfile::unit_step()).unwrap();
        let u = GridFunction::indicator(dom, vec![48, 48], &ShapeSpec::ball(vec![0.4, 0.6], 0.3)).unwrap();
        let a = q.energy_f(&u).unwrap();
        let b = q.energy_f(&u.complement()).unwrap();
        assert!((a - b).abs() <= 1e-12 * a, "{a} {b}");
    }

    #[test]
    fn interior_mass_matches_tau() {
        // Kernel mass of rho = 1 against a cell far from the boundary.
        let dom = Domain::new(vec![0.0, 0.0], vec![4.0, 4.0]).unwrap();
        let rho = DensityModel::uniform(dom.clone());
        let p = RadialProfile::unit_step();
        let q = NonlocalQuadrature::new(&dom, &[64, 64], &rho, 0.3, &p).unwrap();
        let cell = (4.0f64 / 64.0).powi(2);
        assert!((q.stencil().total() / cell - kernel_mass(&p, 2)).abs() < 1e-12);
    }

    #[test]
    fn half_space_energy_approaches_alpha() {
        let dom = unit2();
        let rho = DensityModel::uniform(dom.clone());
        let p = RadialProfile::unit_step();
        let alpha = alpha_d(&p, 2).unwrap();
        let u = GridFunction::indicator(dom, vec![256, 256], &ShapeSpec::lower_half(2, 0, 0.5)).unwrap();
        let mut last = 0.0;
        for delta in [0.2, 0.1, 0.05] {
            let f = nonlocal_energy_f(&u, &rho, delta, &p).unwrap();
            assert!(f < alpha && f > last, "delta={delta} F={f}");
            last = f;
        }
        assert!((last - alpha).abs() < 0.05 * alpha);
    }

    #[test]
    fn grid_round_trip() {
        let dom = Domain::new(vec![0.0, 0.0, 0.0], vec![1.0, 2.0, 1.0]).unwrap();
        let g = GridFunction::from_fn(dom, vec![3, 4, 5], ValueRange::Unit, |x| x[0] * x[1] / 2.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("u");
        g.save(&stem).unwrap();
        assert_eq!(GridFunction::load(&stem).unwrap(), g);
    }
}
