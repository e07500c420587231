//! Cell-pair kernel weights `W(k) = ∫_{C_0} ∫_{C_k} kappa_delta(x - y) dy dx`
//! on a regular grid, stored as contiguous runs along the last axis.

use crate::error::{Error, Result};
use crate::kernels::{ProfileKind, RadialProfile};
use crate::numerics::gauss_legendre;

/// One run of weights: offset `offset` on the leading axes and last-axis
/// offsets `-half..=half`.
#[derive(Debug, Clone)]
pub struct StencilRow {
    pub offset: Vec<isize>,
    pub half: isize,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct KernelStencil {
    pub h: Vec<f64>,
    pub rows: Vec<StencilRow>,
}

impl KernelStencil {
    /// Builds the stencil for cell widths `h`; requires `r0 delta >= 2 h_i`.
    pub fn new(profile: &RadialProfile, delta: f64, h: &[f64]) -> Result<Self> {
        let d = h.len();
        if d < 2 {
            return Err(Error::InvalidDomain(format!("dimension must be at least 2, got {d}")));
        }
        let support = profile.support() * delta;
        let hmax = h.iter().copied().fold(0.0, f64::max);
        if support < 2.0 * hmax {
            return Err(Error::Resolution { support, required: 2.0 * hmax });
        }
        let quad = Quadrature::new(profile, delta, h);
        let kmax: Vec<isize> = h.iter().map(|&hi| (support / hi).ceil() as isize + 1).collect();

        // Weights for nonnegative offsets; reflections give the rest.
        let lead = &kmax[..d - 1];
        let mut rows = Vec::new();
        let mut idx: Vec<isize> = lead.iter().map(|k| -k).collect();
        let mut cache: std::collections::HashMap<Vec<isize>, f64> = std::collections::HashMap::new();
        loop {
            let mut weights_pos = Vec::new();
            let mut k_last = 0isize;
            loop {
                let mut key: Vec<isize> = idx.iter().map(|v| v.abs()).collect();
                key.push(k_last);
                let w = *cache.entry(key.clone()).or_insert_with(|| quad.weight(&key));
                if w == 0.0 && !quad.touches(&key) {
                    break;
                }
                weights_pos.push(w);
                k_last += 1;
            }
            while weights_pos.last() == Some(&0.0) {
                weights_pos.pop();
            }
            if !weights_pos.is_empty() {
                let half = weights_pos.len() as isize - 1;
                let mut weights = Vec::with_capacity(2 * weights_pos.len() - 1);
                weights.extend(weights_pos.iter().rev());
                weights.extend(&weights_pos[1..]);
                rows.push(StencilRow { offset: idx.clone(), half, weights });
            }
            // Odometer over the leading axes.
            let mut k = d - 1;
            loop {
                if k == 0 {
                    return Ok(Self { h: h.to_vec(), rows });
                }
                k -= 1;
                if idx[k] < lead[k] {
                    idx[k] += 1;
                    break;
                }
                idx[k] = -lead[k];
            }
        }
    }

    /// `sum_k W(k)`, the full stencil mass.
    pub fn total(&self) -> f64 {
        self.rows.iter().flat_map(|r| r.weights.iter()).sum()
    }
}

/// Integrator for one cell-pair weight.
struct Quadrature {
    profile: RadialProfile,
    delta: f64,
    radius: f64,
    scale: f64,
    h: Vec<f64>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    inner_nodes: Vec<f64>,
    inner_weights: Vec<f64>,
    tol: f64,
}

impl Quadrature {
    fn new(profile: &RadialProfile, delta: f64, h: &[f64]) -> Self {
        let d = h.len();
        let (nodes, weights) = gauss_legendre(6);
        let (inner_nodes, inner_weights) = gauss_legendre(12);
        let scale = delta.powi(-(d as i32));
        let cell2: f64 = h.iter().map(|x| x * x).product();
        let rel = if d == 2 { 1e-13 } else { 1e-10 };
        Self {
            profile: *profile,
            delta,
            radius: profile.support() * delta,
            scale,
            h: h.to_vec(),
            nodes,
            weights,
            inner_nodes,
            inner_weights,
            tol: rel * cell2 * scale * profile.amplitude(),
        }
    }

    /// Whether the box `k h + [-h, h]` meets the support ball.
    fn touches(&self, k: &[isize]) -> bool {
        let mut s = 0.0;
        for (i, &ki) in k.iter().enumerate() {
            let c = ki as f64 * self.h[i];
            let gap = (c.abs() - self.h[i]).max(0.0);
            s += gap * gap;
        }
        s < self.radius * self.radius
    }

    #[inline]
    fn kappa(&self, r: f64) -> f64 {
        self.scale * self.profile.eval(r / self.delta)
    }

    /// `∫_{[-h,h]^d} prod (h_i - |s_i|) kappa(k h + s) ds`.
    fn weight(&self, k: &[isize]) -> f64 {
        if !self.touches(k) {
            return 0.0;
        }
        let d = k.len();
        let mut total = 0.0;
        // Orthants in s, mapped to x = k h + s where the tent factor is linear.
        for mask in 0..(1usize << d) {
            let mut lo = vec![0.0; d];
            let mut hi = vec![0.0; d];
            let mut lin = vec![(0.0, 0.0); d];
            for i in 0..d {
                let c = k[i] as f64 * self.h[i];
                if mask & (1 << i) == 0 {
                    // s in [-h, 0]: factor h + s = h + x - c.
                    lo[i] = c - self.h[i];
                    hi[i] = c;
                    lin[i] = (self.h[i] - c, 1.0);
                } else {
                    lo[i] = c;
                    hi[i] = c + self.h[i];
                    lin[i] = (self.h[i] + c, -1.0);
                }
            }
            total += self.orthant(&lo, &hi, &lin);
        }
        total
    }

    /// Integral over the box of `prod (alpha_i + beta_i x_i) kappa(|x|)`.
    fn orthant(&self, lo: &[f64], hi: &[f64], lin: &[(f64, f64)]) -> f64 {
        let d = lo.len();
        let (mut near, mut far) = (0.0, 0.0);
        for i in 0..d {
            let n = if lo[i] > 0.0 { lo[i] } else if hi[i] < 0.0 { -hi[i] } else { 0.0 };
            let f = lo[i].abs().max(hi[i].abs());
            near += n * n;
            far += f * f;
        }
        let r2 = self.radius * self.radius;
        if near >= r2 {
            return 0.0;
        }
        if far < r2 && self.profile.kind() == ProfileKind::Step {
            let mut p = self.scale * self.profile.amplitude();
            for i in 0..d {
                p *= lin_integral(lin[i], lo[i], hi[i]);
            }
            return p;
        }
        let outer = d - 1;
        let (a, b) = (lo[outer], hi[outer]);
        if outer > 1 {
            return self.adaptive(&lo[..outer], &hi[..outer], a, b, lin, self.tol, 0);
        }
        // One outer axis: split where the chord meets the box ends or vanishes.
        let mut cuts = vec![lo[0], hi[0], 0.0];
        for e in [a, b, 0.0] {
            if e.abs() < self.radius {
                let s = (r2 - e * e).sqrt();
                cuts.extend([s, -s]);
            }
        }
        cuts.retain(|&c| c >= lo[0] && c <= hi[0]);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let pieces = (cuts.len() - 1) as f64;
        cuts.windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| self.adaptive(&w[..1], &w[1..], a, b, lin, self.tol / pieces, 0))
            .sum()
    }

    /// Outer integrand at leading coordinates `x`: leading tent factors times
    /// the exact (or Gauss) integral along the last axis.
    fn outer_integrand(&self, x: &[f64], a: f64, b: f64, lin: &[(f64, f64)]) -> f64 {
        let d = lin.len();
        let mut factor = 1.0;
        let mut rho2 = 0.0;
        for i in 0..d - 1 {
            factor *= lin[i].0 + lin[i].1 * x[i];
            rho2 += x[i] * x[i];
        }
        let r2 = self.radius * self.radius;
        if rho2 >= r2 {
            return 0.0;
        }
        let tau = (r2 - rho2).sqrt();
        let (t1, t2) = (a.max(-tau), b.min(tau));
        if t2 <= t1 {
            return 0.0;
        }
        let last = lin[d - 1];
        let inner = if self.profile.kind() == ProfileKind::Step {
            self.scale * self.profile.amplitude() * lin_integral(last, t1, t2)
        } else {
            let g = |t: f64| (last.0 + last.1 * t) * self.kappa((rho2 + t * t).sqrt());
            let whole = self.inner_gl(&g, t1, t2);
            self.inner_adaptive(&g, t1, t2, whole, self.tol / (self.h[0] * 16.0), 0)
        };
        factor * inner
    }

    fn inner_gl(&self, g: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        let mut s = 0.0;
        for (z, w) in self.inner_nodes.iter().zip(&self.inner_weights) {
            s += w * g(mid + half * z);
        }
        s * half
    }

    /// Bisection on the last axis; resolves the cone of `kappa` at the origin.
    fn inner_adaptive(&self, g: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: usize) -> f64 {
        let m = 0.5 * (a + b);
        let (left, right) = (self.inner_gl(g, a, m), self.inner_gl(g, m, b));
        if (left + right - whole).abs() <= tol || depth >= 30 {
            return left + right;
        }
        self.inner_adaptive(g, a, m, left, 0.5 * tol, depth + 1) + self.inner_adaptive(g, m, b, right, 0.5 * tol, depth + 1)
    }

    fn tensor_gl(&self, lo: &[f64], hi: &[f64], a: f64, b: f64, lin: &[(f64, f64)]) -> f64 {
        let m = lo.len();
        let q = self.nodes.len();
        let mut idx = vec![0usize; m];
        let mut x = vec![0.0; m];
        let mut total = 0.0;
        loop {
            let mut w = 1.0;
            for i in 0..m {
                let half = 0.5 * (hi[i] - lo[i]);
                x[i] = lo[i] + half * (1.0 + self.nodes[idx[i]]);
                w *= self.weights[idx[i]] * half;
            }
            total += w * self.outer_integrand(&x, a, b, lin);
            let mut k = m;
            loop {
                if k == 0 {
                    return total;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < q {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn adaptive(&self, lo: &[f64], hi: &[f64], a: f64, b: f64, lin: &[(f64, f64)], tol: f64, depth: usize) -> f64 {
        let m = lo.len();
        let whole = self.tensor_gl(lo, hi, a, b, lin);
        let max_depth = if m == 1 { 40 } else { 9 };
        let children = 1usize << m;
        let mut parts = 0.0;
        let mut boxes = Vec::with_capacity(children);
        for mask in 0..children {
            let mut clo = lo.to_vec();
            let mut chi = hi.to_vec();
            for i in 0..m {
                let mid = 0.5 * (lo[i] + hi[i]);
                if mask & (1 << i) == 0 {
                    chi[i] = mid;
                } else {
                    clo[i] = mid;
                }
            }
            parts += self.tensor_gl(&clo, &chi, a, b, lin);
            boxes.push((clo, chi));
        }
        if (depth >= MIN_DEPTH && (parts - whole).abs() <= tol) || depth >= max_depth {
            return parts;
        }
        let sub = tol / children as f64;
        boxes.iter().map(|(clo, chi)| self.adaptive(clo, chi, a, b, lin, sub, depth + 1)).sum()
    }
}

/// Subdivisions forced before the error test, so thin support slivers are seen.
const MIN_DEPTH: usize = 2;

/// `∫_a^b (alpha + beta t) dt`.
#[inline]
fn lin_integral(l: (f64, f64), a: f64, b: f64) -> f64 {
    l.0 * (b - a) + 0.5 * l.1 * (b * b - a * a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::kernel_mass;

    fn interior_mass(st: &KernelStencil) -> f64 {
        let cell: f64 = st.h.iter().product();
        st.total() / cell
    }

    #[test]
    fn stencil_mass_matches_kernel_mass() {
        // For an interior cell, sum_k W(k) = |C| tau_d exactly.
        for (profile, delta) in [
            (RadialProfile::unit_step(), 0.1),
            (RadialProfile::unit_step(), 0.037),
            (RadialProfile::tent(2.0, 1.0).unwrap(), 0.1),
            (RadialProfile::poly(1.0, 1.5, 2.0).unwrap(), 0.05),
        ] {
            let st = KernelStencil::new(&profile, delta, &[1.0 / 64.0, 1.0 / 64.0]).unwrap();
            let tau = kernel_mass(&profile, 2);
            assert!((interior_mass(&st) - tau).abs() <= 1e-9 * tau, "{profile:?} {delta}: {}", interior_mass(&st));
        }
    }

    #[test]
    fn mass_is_independent_of_delta() {
        let p = RadialProfile::unit_step();
        let m1 = interior_mass(&KernelStencil::new(&p, 0.08, &[0.01, 0.02]).unwrap());
        let m2 = interior_mass(&KernelStencil::new(&p, 0.2, &[0.01, 0.02]).unwrap());
        assert!((m1 - m2).abs() < 1e-9 * m1);
    }

    #[test]
    fn three_dimensional_mass() {
        let p = RadialProfile::unit_step();
        let st = KernelStencil::new(&p, 0.1, &[0.025; 3]).unwrap();
        let tau = kernel_mass(&p, 3);
        assert!((interior_mass(&st) - tau).abs() <= 1e-7 * tau, "{}", interior_mass(&st));
    }

    #[test]
    fn resolution_guard() {
        let p = RadialProfile::unit_step();
        assert!(matches!(KernelStencil::new(&p, 0.01, &[0.01, 0.01]), Err(Error::Resolution { .. })));
        assert!(KernelStencil::new(&p, 0.02, &[0.01, 0.01]).is_ok());
    }
}
