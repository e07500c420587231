//! Brute-force reference solvers for small instances, used by tests and the
//! `oracle` subcommand.

use crate::discrete_energy::{class_energy, Class};
use crate::domain::SampleCloud;
use crate::error::{Error, Result};
use crate::kernels::RadialProfile;
use crate::numerics::{dist, integrate_gl};
use crate::transport::DiscreteMeasure;

/// Largest size accepted by the permutation oracles.
pub const PERMUTATION_LIMIT: usize = 9;

/// Calls `visit` on every permutation of `0..m` (Heap's algorithm).
pub fn for_each_permutation(m: usize, mut visit: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..m).collect();
    let mut c = vec![0usize; m];
    visit(&perm);
    let mut i = 0;
    while i < m {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

fn check_small(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<usize> {
    let m = a.len();
    if b.len() != m {
        return Err(Error::SizeMismatch { left: m, right: b.len() });
    }
    if m == 0 || m > PERMUTATION_LIMIT {
        return Err(Error::InvalidArgument(format!("permutation oracle needs 1..={PERMUTATION_LIMIT} points, got {m}")));
    }
    if !a.is_uniform() || !b.is_uniform() {
        return Err(Error::Unsupported("permutation oracle needs uniform weights".into()));
    }
    Ok(m)
}

/// Minimum over permutations of a row-major cost matrix, divided by `m`.
fn min_permutation(cost: &[f64], m: usize) -> (f64, Vec<usize>) {
    let mut best = (f64::INFINITY, Vec::new());
    for_each_permutation(m, |perm| {
        let c: f64 = perm.iter().enumerate().map(|(i, &j)| cost[i * m + j]).sum();
        if c < best.0 {
            best = (c, perm.to_vec());
        }
    });
    (best.0 / m as f64, best.1)
}

/// Optimal mean `p`-cost `min_sigma (1/m) sum |a_i - b_sigma(i)|^p`.
pub fn brute_pcost(a: &DiscreteMeasure, b: &DiscreteMeasure, p: f64) -> Result<f64> {
    let m = check_small(a, b)?;
    let mut cost = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            cost.push(dist(a.point(i), b.point(j)).powf(p));
        }
    }
    Ok(min_permutation(&cost, m).0)
}

/// `min_sigma max_i |a_i - b_sigma(i)|`.
pub fn brute_bottleneck(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
    let m = check_small(a, b)?;
    let mut best = f64::INFINITY;
    for_each_permutation(m, |perm| {
        let r = perm.iter().enumerate().map(|(i, &j)| dist(a.point(i), b.point(j))).fold(0.0, f64::max);
        best = best.min(r);
    });
    Ok(best)
}

/// `min_sigma (1/m) sum (|a_i - b_sigma(i)|^p + |f_i - g_sigma(i)|^p)`.
pub fn brute_tlp(a: &DiscreteMeasure, f: &[f64], b: &DiscreteMeasure, g: &[f64], p: f64) -> Result<f64> {
    let m = check_small(a, b)?;
    if f.len() != m || g.len() != m {
        return Err(Error::SizeMismatch { left: f.len(), right: g.len() });
    }
    let mut cost = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            cost.push(dist(a.point(i), b.point(j)).powf(p) + (f[i] - g[j]).abs().powf(p));
        }
    }
    Ok(min_permutation(&cost, m).0)
}

/// Largest cloud accepted by [`exhaustive_class_minimum`].
pub const EXHAUSTIVE_LIMIT: usize = 14;

/// Minimum of `GF + W_p` over every labeling with exactly `count` points in
/// each of the classes `A` and `O`.
pub fn exhaustive_class_minimum(
    cloud: &SampleCloud,
    delta: f64,
    p: f64,
    profile: &RadialProfile,
    count: usize,
) -> Result<(f64, Vec<Class>)> {
    let n = cloud.len();
    if n > EXHAUSTIVE_LIMIT {
        return Err(Error::InvalidArgument(format!("exhaustive search limited to {EXHAUSTIVE_LIMIT} points, got {n}")));
    }
    if 2 * count > n {
        return Err(Error::Infeasible(format!("two classes of {count} exceed {n} points")));
    }
    let mut best = (f64::INFINITY, Vec::new());
    for a_mask in 0u32..(1 << n) {
        if a_mask.count_ones() as usize != count {
            continue;
        }
        for o_mask in 0u32..(1 << n) {
            if o_mask & a_mask != 0 || o_mask.count_ones() as usize != count {
                continue;
            }
            let classes: Vec<Class> = (0..n)
                .map(|i| {
                    if a_mask >> i & 1 == 1 {
                        Class::A
                    } else if o_mask >> i & 1 == 1 {
                        Class::O
                    } else {
                        Class::Neither
                    }
                })
                .collect();
            let (gf, w) = class_energy(cloud, &classes, delta, p, profile)?;
            if gf + w < best.0 {
                best = (gf + w, classes);
            }
        }
    }
    Ok(best)
}

/// `alpha_d` by one-dimensional quadrature only: the polar split
/// `∫ |x_1| eta(|x|) dx = |S^{d-2}| ∫_0^pi |cos t| sin^{d-2} t dt ∫_0^r0 eta(r) r^d dr`,
/// with sphere areas built by the recursion `|S^k| = |S^{k-1}| ∫_0^pi sin^{k-1}`.
pub fn alpha_d_quadrature(profile: &RadialProfile, d: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!("dimension must be at least 2, got {d}")));
    }
    let pi = std::f64::consts::PI;
    let mut sphere = 2.0; // |S^0|
    for k in 1..=d - 2 {
        sphere *= integrate_gl(|t| t.sin().powi(k as i32 - 1), 0.0, pi, 20, 16);
    }
    let angular = integrate_gl(|t| t.cos().abs() * t.sin().powi(d as i32 - 2), 0.0, pi, 20, 16);
    let r0 = profile.support();
    let radial = integrate_gl(|r| profile.eval(r) * r.powi(d as i32), 0.0, r0, 20, 16);
    Ok(sphere * angular * radial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::alpha_d;

    #[test]
    fn permutation_count() {
        let mut n = 0;
        let mut seen = std::collections::HashSet::new();
        for_each_permutation(5, |p| {
            n += 1;
            seen.insert(p.to_vec());
        });
        assert_eq!(n, 120);
        assert_eq!(seen.len(), 120);
    }

    #[test]
    fn quadrature_alpha() {
        let pi = std::f64::consts::PI;
        let s = RadialProfile::unit_step();
        assert!((alpha_d_quadrature(&s, 2).unwrap() - 4.0 / 3.0).abs() < 1e-12);
        assert!((alpha_d_quadrature(&s, 3).unwrap() - pi / 2.0).abs() < 1e-12);
        let t = RadialProfile::poly(1.3, 0.8, 2.5).unwrap();
        for d in 2..6 {
            let a = alpha_d(&t, d).unwrap();
            assert!((alpha_d_quadrature(&t, d).unwrap() - a).abs() < 1e-10 * a, "d={d}");
        }
    }

    #[test]
    fn brute_on_line() {
        let a = DiscreteMeasure::uniform(2, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let b = DiscreteMeasure::uniform(2, vec![1.0, 0.5, 0.0, 0.5]).unwrap();
        assert!((brute_pcost(&a, &b, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((brute_bottleneck(&a, &b).unwrap() - 0.5).abs() < 1e-15);
        assert!(brute_tlp(&a, &[0.0, 1.0], &b, &[1.0, 0.0], 1.0).unwrap() >= 0.5);
    }
}
