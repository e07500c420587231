//! Experiment configuration: a single JSON document, validated in full at load.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::continuum::weighted_tv_analytic;
use crate::discrete_energy::AnnealSchedule;
use crate::domain::{DensityKind, DensityModel, Domain, ShapeSpec};
use crate::error::{Error, Result};
use crate::kernels::RadialProfile;
use crate::numerics::stream_seed;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Strict-inequality margin applied to the upper bound on the exponent.
pub const H4_MARGIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    GammaSweep,
    TransportScaling,
    MeanIdentity,
    MinimizerStudy,
}

/// `delta_n = prefactor * n^{-gamma}`, or a constant `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeltaRule {
    Power {
        gamma: f64,
        #[serde(default = "one")]
        prefactor: f64,
    },
    Fixed {
        delta: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl DeltaRule {
    /// `n^{-1/(d+2)}`, inside the admissible range in every dimension.
    pub fn default_for(dim: usize) -> Self {
        DeltaRule::Power { gamma: 1.0 / (dim as f64 + 2.0), prefactor: 1.0 }
    }

    pub fn delta(&self, n: usize) -> f64 {
        match *self {
            DeltaRule::Power { gamma, prefactor } => prefactor * (n as f64).powf(-gamma),
            DeltaRule::Fixed { delta } => delta,
        }
    }
}

/// Largest admissible exponent before the margin: `1/2` for `d = 2`, `1/d` above.
pub fn h4_exponent_bound(dim: usize) -> f64 {
    if dim == 2 {
        0.5
    } else {
        1.0 / dim as f64
    }
}

/// Checks a power-law rule against the scaling hypothesis; `Err` carries
/// the diagnostic.
pub fn check_h4(dim: usize, gamma: f64) -> std::result::Result<(), String> {
    let bound = h4_exponent_bound(dim);
    let limit = if dim == 2 {
        "(log n)^{3/4} / (n^{1/2} delta_n) -> 0".to_string()
    } else {
        format!("(log n)^{{1/{dim}}} / (n^{{1/{dim}}} delta_n) -> 0")
    };
    if !(gamma > 0.0) {
        return Err(format!("delta_rule.gamma = {gamma}: delta_n must decrease to zero, need gamma > 0"));
    }
    if gamma > bound - H4_MARGIN {
        return Err(format!(
            "delta_rule.gamma = {gamma} violates the scaling hypothesis {limit} (d = {dim}): \
             need gamma < {bound}, enforced as gamma <= {:.4}",
            bound - H4_MARGIN
        ));
    }
    Ok(())
}

/// Labels `u` evaluated on samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelSpec {
    /// `chi_A` for `shape_a`.
    #[default]
    Shape,
    Zero,
    /// `clamp((x_axis - lo) / (hi - lo), 0, 1)`.
    Ramp { axis: usize, lo: f64, hi: f64 },
}

impl LabelSpec {
    pub fn eval(&self, shape: Option<&ShapeSpec>, x: &[f64]) -> f64 {
        match self {
            LabelSpec::Shape => match shape {
                Some(s) if s.indicator(x) => 1.0,
                _ => 0.0,
            },
            LabelSpec::Zero => 0.0,
            LabelSpec::Ramp { axis, lo, hi } => ((x[*axis] - lo) / (hi - lo)).clamp(0.0, 1.0),
        }
    }

    pub fn is_binary(&self) -> bool {
        !matches!(self, LabelSpec::Ramp { .. })
    }
}

/// A parametric pair `(A, O)` for the minimizer reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Competitor {
    pub a: ShapeSpec,
    pub o: ShapeSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Transport-map grid cells per sample.
    pub map_cells_per_sample: usize,
    pub map_rel_tol: f64,
    pub tie_break_limit: usize,
    /// Largest `n` for which transport maps are built in a sweep; `None` for all.
    pub transport_max_n: Option<usize>,
    /// Cells per axis for continuum quadrature.
    pub quadrature_cells: usize,
    pub anneal: AnnealSchedule,
    /// Share of points in each of the classes `A` and `O`.
    pub class_fraction: f64,
    /// Cells per axis for the companion problem.
    pub companion_cells: usize,
    /// Quadrature points per set for continuum Wasserstein references.
    pub wasserstein_points: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            map_cells_per_sample: 64,
            map_rel_tol: 5e-3,
            tie_break_limit: 4096,
            transport_max_n: None,
            quadrature_cells: 256,
            anneal: AnnealSchedule { t0: 0.5, ratio: 0.9995, steps: 20_000 },
            class_fraction: 0.25,
            companion_cells: 32,
            wasserstein_points: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub domain: Domain,
    #[serde(default = "uniform_density")]
    pub density: DensityKind,
    #[serde(default = "RadialProfile::unit_step")]
    pub kernel: RadialProfile,
    #[serde(default)]
    pub shape_a: Option<ShapeSpec>,
    #[serde(default)]
    pub shape_o: Option<ShapeSpec>,
    #[serde(default)]
    pub label: LabelSpec,
    pub n_schedule: Vec<usize>,
    #[serde(default)]
    pub delta_rule: Option<DeltaRule>,
    #[serde(default = "one")]
    pub p: f64,
    #[serde(default = "one_seed")]
    pub seeds: usize,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub competitors: Vec<Competitor>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn uniform_density() -> DensityKind {
    DensityKind::Uniform
}

fn one_seed() -> usize {
    1
}

impl ExperimentConfig {
    /// A config with defaults for everything but the essentials.
    pub fn new(kind: ExperimentKind, domain: Domain, n_schedule: Vec<usize>) -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            kind,
            domain,
            density: DensityKind::Uniform,
            kernel: RadialProfile::unit_step(),
            shape_a: None,
            shape_o: None,
            label: LabelSpec::Shape,
            n_schedule,
            delta_rule: None,
            p: 1.0,
            seeds: 1,
            seed_base: 0,
            solver: SolverSettings::default(),
            competitors: Vec::new(),
            output_dir: None,
        }
    }

    /// Parses and validates.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn delta_rule(&self) -> DeltaRule {
        self.delta_rule.unwrap_or_else(|| DeltaRule::default_for(self.dim()))
    }

    pub fn density_model(&self) -> Result<DensityModel> {
        DensityModel::from_kind(self.domain.clone(), &self.density)
    }

    /// Seed of run `s` at sample size `n`; independent of `self.seeds`.
    pub fn seed_for(&self, n: usize, s: usize) -> u64 {
        stream_seed(stream_seed(self.seed_base, n as u64), s as u64)
    }

    /// Collects every problem before failing.
    pub fn validate(&self) -> Result<()> {
        let mut errs: Vec<String> = Vec::new();
        let d = self.dim();
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            errs.push(format!("schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})", self.schema_version));
        }
        let model = match self.density_model() {
            Ok(m) => Some(m),
            Err(e) => {
                errs.push(format!("density: {e}"));
                None
            }
        };
        if self.n_schedule.iter().any(|&n| n == 0) {
            errs.push("n_schedule entries must be at least 1".into());
        }
        if self.seeds == 0 {
            errs.push("seeds must be at least 1".into());
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            errs.push(format!("p must be finite and at least 1, got {}", self.p));
        }
        for (name, shape) in [("shape_a", &self.shape_a), ("shape_o", &self.shape_o)] {
            if let Some(s) = shape {
                if s.dim() != d {
                    errs.push(format!("{name}: dimension {} does not match the domain ({d})", s.dim()));
                } else if let Err(e) = s.volume(&self.domain) {
                    errs.push(format!("{name}: {e}"));
                }
            }
        }
        if let LabelSpec::Ramp { axis, lo, hi } = &self.label {
            if *axis >= d || !(hi > lo) {
                errs.push(format!("label ramp needs axis < {d} and lo < hi"));
            }
        }
        if self.label == LabelSpec::Shape
            && self.shape_a.is_none()
            && matches!(self.kind, ExperimentKind::GammaSweep | ExperimentKind::MeanIdentity)
        {
            errs.push("label kind 'shape' needs shape_a".into());
        }

        let rule = self.delta_rule();
        match rule {
            DeltaRule::Power { gamma, prefactor } => {
                if !(prefactor > 0.0 && prefactor.is_finite()) {
                    errs.push(format!("delta_rule.prefactor must be positive, got {prefactor}"));
                }
                if self.kind != ExperimentKind::TransportScaling {
                    if let Err(msg) = check_h4(d, gamma) {
                        errs.push(msg);
                    }
                }
            }
            DeltaRule::Fixed { delta } => {
                if !(delta > 0.0 && delta.is_finite()) {
                    errs.push(format!("delta_rule.delta must be positive, got {delta}"));
                }
                if matches!(self.kind, ExperimentKind::GammaSweep | ExperimentKind::MinimizerStudy) {
                    errs.push("a fixed delta does not satisfy the scaling hypothesis (delta_n must vanish); use kind 'power'".into());
                }
            }
        }

        let s = &self.solver;
        if s.map_cells_per_sample == 0 {
            errs.push("solver.map_cells_per_sample must be positive".into());
        }
        if !(s.map_rel_tol > 0.0 && s.map_rel_tol < 1.0) {
            errs.push(format!("solver.map_rel_tol must lie in (0, 1), got {}", s.map_rel_tol));
        }
        if s.quadrature_cells < 2 {
            errs.push("solver.quadrature_cells must be at least 2".into());
        }
        if s.companion_cells < 2 {
            errs.push("solver.companion_cells must be at least 2".into());
        }
        if s.wasserstein_points == 0 {
            errs.push("solver.wasserstein_points must be positive".into());
        }
        if !(s.anneal.t0 >= 0.0 && s.anneal.t0.is_finite() && s.anneal.ratio > 0.0 && s.anneal.ratio <= 1.0) {
            errs.push("solver.anneal needs t0 >= 0 and ratio in (0, 1]".into());
        }

        match self.kind {
            ExperimentKind::GammaSweep => {
                if !self.label.is_binary() {
                    errs.push("gamma_sweep needs binary labels (shape or zero)".into());
                }
                if let (Some(m), Some(a), LabelSpec::Shape) = (&model, &self.shape_a, &self.label) {
                    if let Err(e) = weighted_tv_analytic(a, m, 2) {
                        errs.push(format!("shape_a has no analytic perimeter reference: {e}"));
                    }
                }
            }
            ExperimentKind::TransportScaling => {}
            ExperimentKind::MeanIdentity => {
                let h = (0..d).map(|k| self.domain.extent(k)).fold(0.0, f64::max) / s.quadrature_cells as f64;
                for &n in &self.n_schedule {
                    let delta = rule.delta(n);
                    if delta * self.kernel.support() < 2.0 * h {
                        errs.push(format!(
                            "delta = {delta} at n = {n} is below the quadrature guard (support must span two of {} cells per axis)",
                            s.quadrature_cells
                        ));
                        break;
                    }
                }
            }
            ExperimentKind::MinimizerStudy => {
                if let Some(m) = &model {
                    if !m.is_uniform() {
                        errs.push("minimizer_study needs a uniform density".into());
                    }
                }
                if !(s.class_fraction > 0.0 && s.class_fraction <= 0.5) {
                    errs.push(format!("solver.class_fraction must lie in (0, 1/2], got {}", s.class_fraction));
                }
                for &n in &self.n_schedule {
                    if ((s.class_fraction * n as f64).round() as usize) < 1 {
                        errs.push(format!("n = {n} leaves an empty class at class_fraction {}", s.class_fraction));
                        break;
                    }
                }
                for (i, c) in self.competitors.iter().enumerate() {
                    if c.a.dim() != d || c.o.dim() != d {
                        errs.push(format!("competitors[{i}]: dimension does not match the domain"));
                    }
                }
            }
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sweep() -> ExperimentConfig {
        let mut c = ExperimentConfig::new(ExperimentKind::GammaSweep, Domain::unit(2).unwrap(), vec![256]);
        c.shape_a = Some(ShapeSpec::lower_half(2, 0, 0.5));
        c
    }

    #[test]
    fn default_rule_is_admissible() {
        for d in 2..6 {
            let DeltaRule::Power { gamma, .. } = DeltaRule::default_for(d) else { unreachable!() };
            assert!(check_h4(d, gamma).is_ok(), "d={d}");
        }
        assert!(sweep().validate().is_ok());
    }

    #[test]
    fn rejects_half_exponent_in_two_dimensions() {
        let mut c = sweep();
        c.delta_rule = Some(DeltaRule::Power { gamma: 0.5, prefactor: 1.0 });
        let Err(Error::Config(msgs)) = c.validate() else { panic!("accepted gamma = 1/2") };
        assert!(msgs.iter().any(|m| m.contains("(log n)^{3/4}") && m.contains("gamma < 0.5")), "{msgs:?}");
        c.delta_rule = Some(DeltaRule::Power { gamma: 0.49, prefactor: 1.0 });
        assert!(c.validate().is_ok());
        c.delta_rule = Some(DeltaRule::Power { gamma: 0.495, prefactor: 1.0 });
        assert!(c.validate().is_err());
    }

    #[test]
    fn three_dimensional_bound() {
        assert!(check_h4(3, 0.32).is_ok());
        assert!(check_h4(3, 0.33).is_err());
        assert!(check_h4(4, 0.25).is_err());
        assert!(check_h4(2, 0.0).is_err());
    }

    #[test]
    fn collects_all_problems() {
        let mut c = sweep();
        c.seeds = 0;
        c.p = 0.5;
        c.delta_rule = Some(DeltaRule::Fixed { delta: 0.1 });
        let Err(Error::Config(msgs)) = c.validate() else { panic!() };
        assert_eq!(msgs.len(), 3, "{msgs:?}");
    }

    #[test]
    fn json_round_trip() {
        let c = sweep();
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), c);
        let minimal = r#"{"schema_version":1,"kind":"transport_scaling","domain":{"lo":[0,0],"hi":[1,1]},"n_schedule":[64]}"#;
        assert!(ExperimentConfig::from_json(minimal).is_ok());
        assert!(ExperimentConfig::from_json(r#"{"schema_version":1}"#).is_err());
    }

    #[test]
    fn seeds_do_not_depend_on_count() {
        let mut c = sweep();
        let a = c.seed_for(256, 0);
        c.seeds = 20;
        assert_eq!(c.seed_for(256, 0), a);
        assert_ne!(c.seed_for(256, 1), a);
    }
}
