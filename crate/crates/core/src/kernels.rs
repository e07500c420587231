//! Radial interaction profiles `eta`, their rescalings
//! `kappa_delta(x) = delta^{-d} eta(|x| / delta)` and the derived constants.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta;
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Step,
    Tent,
    Poly,
}

/// `eta(r) = A g(r / r0)` for `r < r0` and zero beyond, with `g = 1`,
/// `g(s) = 1 - s` or `g(s) = (1 - s)^q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileRepr", into = "ProfileRepr")]
pub struct RadialProfile {
    kind: ProfileKind,
    amplitude: f64,
    r0: f64,
    q: f64,
}

#[derive(Serialize, Deserialize)]
struct ProfileRepr {
    kind: ProfileKind,
    #[serde(rename = "A")]
    amplitude: f64,
    r0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q: Option<f64>,
}

impl TryFrom<ProfileRepr> for RadialProfile {
    type Error = Error;
    fn try_from(r: ProfileRepr) -> Result<Self> {
        match (r.kind, r.q) {
            (ProfileKind::Step, None) => RadialProfile::step(r.amplitude, r.r0),
            (ProfileKind::Tent, None) => RadialProfile::tent(r.amplitude, r.r0),
            (ProfileKind::Poly, Some(q)) => RadialProfile::poly(r.amplitude, r.r0, q),
            (ProfileKind::Poly, None) => Err(Error::InvalidKernel("poly profile needs an exponent q".into())),
            (_, Some(_)) => Err(Error::InvalidKernel("exponent q only applies to the poly profile".into())),
        }
    }
}

impl From<RadialProfile> for ProfileRepr {
    fn from(p: RadialProfile) -> Self {
        ProfileRepr {
            kind: p.kind,
            amplitude: p.amplitude,
            r0: p.r0,
            q: (p.kind == ProfileKind::Poly).then_some(p.q),
        }
    }
}

impl RadialProfile {
    fn checked(kind: ProfileKind, amplitude: f64, r0: f64, q: f64) -> Result<Self> {
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(Error::InvalidKernel(format!("amplitude must be positive, got {amplitude}")));
        }
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(Error::InvalidKernel(format!("support radius must be positive, got {r0}")));
        }
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::InvalidKernel(format!("exponent must be positive, got {q}")));
        }
        Ok(Self { kind, amplitude, r0, q })
    }

    pub fn step(amplitude: f64, r0: f64) -> Result<Self> {
        Self::checked(ProfileKind::Step, amplitude, r0, 1.0)
    }

    pub fn tent(amplitude: f64, r0: f64) -> Result<Self> {
        Self::checked(ProfileKind::Tent, amplitude, r0, 1.0)
    }

    pub fn poly(amplitude: f64, r0: f64, q: f64) -> Result<Self> {
        Self::checked(ProfileKind::Poly, amplitude, r0, q)
    }

    /// `step(1, 1)`, the indicator of the unit ball.
    pub fn unit_step() -> Self {
        Self { kind: ProfileKind::Step, amplitude: 1.0, r0: 1.0, q: 1.0 }
    }

    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn support(&self) -> f64 {
        self.r0
    }

    pub fn exponent(&self) -> Option<f64> {
        (self.kind == ProfileKind::Poly).then_some(self.q)
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        if r >= self.r0 {
            return 0.0;
        }
        let s = r / self.r0;
        match self.kind {
            ProfileKind::Step => self.amplitude,
            ProfileKind::Tent => self.amplitude * (1.0 - s),
            ProfileKind::Poly => self.amplitude * (1.0 - s).powf(self.q),
        }
    }

    /// `∫_0^{r0} eta(r) r^k dr` in closed form.
    pub fn radial_moment(&self, k: u32) -> f64 {
        let kf = k as f64;
        let unit = match self.kind {
            ProfileKind::Step => 1.0 / (kf + 1.0),
            ProfileKind::Tent => 1.0 / ((kf + 1.0) * (kf + 2.0)),
            ProfileKind::Poly => beta(kf + 1.0, self.q + 1.0),
        };
        self.amplitude * self.r0.powi(k as i32 + 1) * unit
    }

    /// Step profile below `self`: height `eta(r0 / 2)` on radius `r0 / 2`.
    pub fn step_minorant(&self) -> RadialProfile {
        let half = 0.5 * self.r0;
        Self { kind: ProfileKind::Step, amplitude: self.eval(half), r0: half, q: 1.0 }
    }
}

/// Surface measure of the unit sphere in `R^d`.
pub fn sphere_surface(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(h) / gamma(h)
}

/// `tau_d = ∫ kappa(x) dx`.
pub fn kernel_mass(profile: &RadialProfile, d: usize) -> f64 {
    sphere_surface(d) * profile.radial_moment(d as u32 - 1)
}

/// `∫ |x| kappa(x) dx`.
pub fn first_moment(profile: &RadialProfile, d: usize) -> f64 {
    sphere_surface(d) * profile.radial_moment(d as u32)
}

/// Mean of `|<z, e>|` over the unit sphere `S^{d-1}`.
pub fn sphere_abs_cosine_mean(d: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!("dimension must be at least 2, got {d}")));
    }
    let h = d as f64 / 2.0;
    Ok((ln_gamma(h) - ln_gamma(h + 0.5)).exp() / std::f64::consts::PI.sqrt())
}

/// Limit constant `alpha_d`: spherical mean of `|<z, e>|` times the first moment.
pub fn alpha_d(profile: &RadialProfile, d: usize) -> Result<f64> {
    Ok(sphere_abs_cosine_mean(d)? * first_moment(profile, d))
}

/// `kappa_delta` in dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescaledKernel {
    pub profile: RadialProfile,
    pub delta: f64,
    pub dim: usize,
    scale: f64,
}

impl RescaledKernel {
    pub fn new(profile: RadialProfile, delta: f64, dim: usize) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        Ok(Self { profile, delta, dim, scale: delta.powi(-(dim as i32)) })
    }

    pub fn support_radius(&self) -> f64 {
        self.profile.support() * self.delta
    }

    #[inline]
    pub fn eval_radius(&self, r: f64) -> f64 {
        self.scale * self.profile.eval(r / self.delta)
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.eval_radius(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::integrate_gl;
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn kernel_eval_examples() {
        let k = RescaledKernel::new(RadialProfile::unit_step(), 0.5, 2).unwrap();
        assert_eq!(k.eval(&[0.2, 0.0]), 4.0);
        assert_eq!(k.eval(&[0.6, 0.0]), 0.0);
        let t = RescaledKernel::new(RadialProfile::tent(2.0, 1.0).unwrap(), 1.0, 2).unwrap();
        assert_eq!(t.eval(&[0.5, 0.0]), 1.0);
    }

    #[test]
    fn masses_and_moments() {
        let s = RadialProfile::unit_step();
        let t = RadialProfile::tent(1.0, 1.0).unwrap();
        assert!(close(kernel_mass(&s, 2), PI, 1e-14));
        assert!(close(kernel_mass(&s, 3), 4.0 * PI / 3.0, 1e-14));
        assert!(close(kernel_mass(&t, 2), PI / 3.0, 1e-14));
        assert!(close(first_moment(&s, 2), 2.0 * PI / 3.0, 1e-14));
        assert!(close(first_moment(&s, 3), PI, 1e-14));
        assert!(close(first_moment(&t, 2), PI / 6.0, 1e-14));
    }

    #[test]
    fn abs_cosine_means() {
        assert!(close(sphere_abs_cosine_mean(2).unwrap(), 2.0 / PI, 1e-14));
        assert!(close(sphere_abs_cosine_mean(3).unwrap(), 0.5, 1e-14));
        assert!(close(sphere_abs_cosine_mean(4).unwrap(), 4.0 / (3.0 * PI), 1e-14));
        assert!(sphere_abs_cosine_mean(1).is_err());
        // |cos θ| averaged over the circle.
        let q = integrate_gl(|t: f64| t.cos().abs(), 0.0, 2.0 * PI, 8, 64) / (2.0 * PI);
        assert!(close(q, 2.0 / PI, 1e-12));
    }

    #[test]
    fn alpha_examples() {
        assert!(close(alpha_d(&RadialProfile::unit_step(), 2).unwrap(), 4.0 / 3.0, 1e-14));
        assert!(close(alpha_d(&RadialProfile::unit_step(), 3).unwrap(), PI / 2.0, 1e-14));
        assert!(close(alpha_d(&RadialProfile::tent(1.0, 1.0).unwrap(), 2).unwrap(), 1.0 / 3.0, 1e-14));
    }

    #[test]
    fn poly_moments_match_quadrature() {
        let p = RadialProfile::poly(1.5, 0.7, 2.5).unwrap();
        for k in 0..5 {
            let q = integrate_gl(|r| p.eval(r) * r.powi(k as i32), 0.0, 0.7, 20, 16);
            assert!(close(p.radial_moment(k), q, 1e-10), "k={k}");
        }
    }

    #[test]
    fn step_minorant_is_below() {
        for p in [RadialProfile::unit_step(), RadialProfile::tent(2.0, 1.5).unwrap(), RadialProfile::poly(1.0, 1.0, 3.0).unwrap()] {
            let m = p.step_minorant();
            assert!(m.amplitude() > 0.0);
            for i in 0..=10_000 {
                let r = 2.0 * p.support() * i as f64 / 10_000.0;
                assert!(m.eval(r) <= p.eval(r), "r={r}");
            }
        }
    }

    #[test]
    fn profile_json_shape() {
        let p: RadialProfile = serde_json::from_str(r#"{"kind":"poly","A":2,"r0":1,"q":3}"#).unwrap();
        assert_eq!(p, RadialProfile::poly(2.0, 1.0, 3.0).unwrap());
        let s = serde_json::to_string(&RadialProfile::unit_step()).unwrap();
        assert_eq!(s, r#"{"kind":"step","A":1.0,"r0":1.0}"#);
        assert!(serde_json::from_str::<RadialProfile>(r#"{"kind":"step","A":-1,"r0":1}"#).is_err());
        assert!(serde_json::from_str::<RadialProfile>(r#"{"kind":"poly","A":1,"r0":1}"#).is_err());
    }
}
