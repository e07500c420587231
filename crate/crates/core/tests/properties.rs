use gamma_lab::continuum::{
    companion_set_lp, nonlocal_energy_f, phi_psi_decomposition, weighted_tv_analytic, GridFunction, ValueRange,
};
use gamma_lab::discrete_energy::{gf_energy_grid, gf_energy_naive, LabelVector};
use gamma_lab::domain::{sample_iid, DensityModel, Domain, SampleCloud, ShapeSpec};
use gamma_lab::kernels::{RadialProfile, RescaledKernel};
use gamma_lab::numerics::dist;
use gamma_lab::transport::{
    build_transport_map, match_bottleneck, match_pcost, tlp_distance, DiscreteMeasure, EntropicConfig, MatchMethod,
};
use proptest::prelude::*;

fn unit2() -> Domain {
    Domain::unit(2).unwrap()
}

fn profile() -> impl Strategy<Value = RadialProfile> {
    (0usize..3, 0.5f64..2.0, 0.5f64..1.5, 1.0f64..3.0).prop_map(|(k, a, r0, q)| match k {
        0 => RadialProfile::step(a, r0).unwrap(),
        1 => RadialProfile::tent(a, r0).unwrap(),
        _ => RadialProfile::poly(a, r0, q).unwrap(),
    })
}

fn density() -> impl Strategy<Value = DensityModel> {
    (-0.45f64..0.45, -0.45f64..0.45).prop_map(|(gx, gy)| {
        if gx.abs() < 0.05 {
            DensityModel::uniform(unit2())
        } else {
            DensityModel::affine(unit2(), 1.0, vec![gx, gy]).unwrap()
        }
    })
}

fn measure(m: usize) -> impl Strategy<Value = DiscreteMeasure> {
    prop::collection::vec(0.0f64..1.0, 2 * m).prop_map(|pts| DiscreteMeasure::uniform(2, pts).unwrap())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gf_complement_symmetry(seed in 0u64..10_000, n in 2usize..300, delta in 0.05f64..0.5, k in profile(), t in 0.1f64..0.9) {
        let cloud = sample_iid(&DensityModel::uniform(unit2()), n, seed).unwrap();
        let u = LabelVector::from_shape(&cloud, &ShapeSpec::lower_half(2, 0, t));
        let a = gf_energy_grid(&cloud, &u, delta, &k).unwrap().value;
        let b = gf_energy_grid(&cloud, &u.complement(), delta, &k).unwrap().value;
        prop_assert!(rel(a, b) <= 1e-13, "{a} vs {b}");
    }

    #[test]
    fn gf_is_nonnegative_and_grid_matches_naive(
        seed in 0u64..10_000, n in 1usize..400, delta in 0.03f64..0.6, k in profile(),
        labels in prop::collection::vec(0.0f64..=1.0, 400),
    ) {
        let cloud = sample_iid(&DensityModel::uniform(unit2()), n, seed).unwrap();
        let u = LabelVector::new(labels[..n].to_vec());
        let g = gf_energy_grid(&cloud, &u, delta, &k).unwrap().value;
        let v = gf_energy_naive(&cloud, &u, delta, &k).unwrap().value;
        prop_assert!(g >= 0.0);
        prop_assert!(rel(g, v) <= 1e-12 || (g == 0.0 && v == 0.0), "{g} vs {v}");
    }

    #[test]
    fn gf_scales_with_inverse_power(seed in 0u64..10_000, n in 2usize..200, delta in 0.05f64..0.5, lambda in 0.2f64..5.0, k in profile()) {
        // (lambda X, lambda delta) multiplies GF by lambda^{-(d+1)}.
        let cloud = sample_iid(&DensityModel::uniform(unit2()), n, seed).unwrap();
        let u = LabelVector::from_shape(&cloud, &ShapeSpec::ball(vec![0.5, 0.5], 0.3));
        let a = gf_energy_grid(&cloud, &u, delta, &k).unwrap().value;
        let scaled = |l: f64| SampleCloud::from_points(2, cloud.coords().iter().map(|x| x * l).collect(), 0, "scaled").unwrap();
        let pow2 = 2f64.powi((seed % 5) as i32 - 2);
        let b = gf_energy_grid(&scaled(pow2), &u, pow2 * delta, &k).unwrap().value;
        prop_assert!(rel(b, a * pow2.powi(-3)) <= 1e-13, "{b} vs {}", a * pow2.powi(-3));
        let c = gf_energy_grid(&scaled(lambda), &u, lambda * delta, &k).unwrap().value;
        prop_assert!(rel(c, a * lambda.powi(-3)) <= 1e-12, "{c} vs {}", a * lambda.powi(-3));
    }

    #[test]
    fn kernel_is_isotropic_and_monotone(k in profile(), delta in 0.05f64..1.0, r in 0.0f64..2.0, theta in 0.0f64..std::f64::consts::TAU, s in 0.0f64..1.0) {
        let kern = RescaledKernel::new(k.clone(), delta, 2).unwrap();
        let x = [r * delta, 0.0];
        let y = [r * delta * theta.cos(), r * delta * theta.sin()];
        prop_assert!(rel(kern.eval(&x), kern.eval(&y)) <= 1e-12 || kern.eval(&x) == kern.eval(&y));
        prop_assert!(k.eval(r * s) >= k.eval(r));
        let m = k.step_minorant();
        prop_assert!(m.eval(r) <= k.eval(r));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn continuum_complement_and_decomposition(
        rho in density(), k in profile(), g in 16usize..40, delta_cells in 2.0f64..6.0,
        cx in 0.2f64..0.8, cy in 0.2f64..0.8, r in 0.1f64..0.4, smooth in any::<bool>(),
    ) {
        let h = 1.0 / g as f64;
        let delta = delta_cells * h / k.support();
        let u = GridFunction::from_fn(unit2(), vec![g, g], ValueRange::Unit, |x| {
            let d = ((x[0] - cx).powi(2) + (x[1] - cy).powi(2)).sqrt();
            if smooth { (1.0 - d / r).clamp(0.0, 1.0) } else if d <= r { 1.0 } else { 0.0 }
        }).unwrap();
        let f = nonlocal_energy_f(&u, &rho, delta, &k).unwrap();
        let fc = nonlocal_energy_f(&u.complement(), &rho, delta, &k).unwrap();
        prop_assert!(rel(f, fc) <= 1e-13, "{f} vs {fc}");
        let (phi, psi) = phi_psi_decomposition(&u.to_signed(), &rho, delta, &k).unwrap();
        prop_assert!(rel(phi + psi, f) <= 1e-10, "{} vs {f}", phi + psi);
    }

    #[test]
    fn wasserstein_metric_axioms(a in measure(5), b in measure(5), c in measure(5), p in 1.0f64..3.0) {
        let w = |x: &DiscreteMeasure, y: &DiscreteMeasure| match_pcost(x, y, p, &MatchMethod::Exact).unwrap().cost.powf(1.0 / p);
        prop_assert_eq!(w(&a, &b), w(&b, &a));
        prop_assert!(w(&a, &a) == 0.0);
        prop_assert!(w(&a, &c) <= w(&a, &b) + w(&b, &c) + 1e-9);
    }

    #[test]
    fn tl1_metric_axioms(
        a in measure(6), b in measure(6), c in measure(6),
        f in prop::collection::vec(0.0f64..1.0, 6), g in prop::collection::vec(0.0f64..1.0, 6), h in prop::collection::vec(0.0f64..1.0, 6),
    ) {
        let ab = tlp_distance(&a, &f, &b, &g, 1.0).unwrap();
        prop_assert_eq!(ab, tlp_distance(&b, &g, &a, &f, 1.0).unwrap());
        prop_assert_eq!(tlp_distance(&a, &f, &a, &f, 1.0).unwrap(), 0.0);
        let ac = tlp_distance(&a, &f, &c, &h, 1.0).unwrap();
        let bc = tlp_distance(&b, &g, &c, &h, 1.0).unwrap();
        prop_assert!(ac <= ab + bc + 1e-9);
    }

    #[test]
    fn translation_is_optimal(a in measure(7), tx in -0.3f64..0.3, ty in -0.3f64..0.3, p in 1.0f64..3.0) {
        let pts: Vec<f64> = (0..a.len()).flat_map(|i| [a.point(i)[0] + tx, a.point(i)[1] + ty]).collect();
        let b = DiscreteMeasure::uniform(2, pts).unwrap();
        let t = (tx * tx + ty * ty).sqrt();
        let w = match_pcost(&a, &b, p, &MatchMethod::Exact).unwrap().cost.powf(1.0 / p);
        // Strict convexity makes the translation optimal for p > 1; p = 1 attains it too.
        prop_assert!((w - t).abs() <= 1e-9, "{w} vs {t}");
    }

    #[test]
    fn bottleneck_radius_is_a_pairwise_distance(a in measure(6), b in measure(6)) {
        let (_, r) = match_bottleneck(&a, &b).unwrap();
        let hit = (0..6).any(|i| (0..6).any(|j| dist(a.point(i), b.point(j)) == r));
        prop_assert!(hit);
    }

    #[test]
    fn entropic_bounds_exact_from_above(a in measure(6), b in measure(6)) {
        let exact = match_pcost(&a, &b, 2.0, &MatchMethod::Exact).unwrap().cost;
        let ent = match_pcost(&a, &b, 2.0, &MatchMethod::Entropic(EntropicConfig::default())).unwrap().cost;
        prop_assert!(ent >= exact - 1e-12);
    }

    #[test]
    fn map_pushes_forward_onto_the_empirical_measure(seed in 0u64..10_000, n in 1usize..40, affine in any::<bool>()) {
        let model = if affine { DensityModel::affine(unit2(), 1.0, vec![0.6, -0.3]).unwrap() } else { DensityModel::uniform(unit2()) };
        let cloud = sample_iid(&model, n, seed).unwrap();
        let map = build_transport_map(&model, &cloud, 16 * n).unwrap();
        for m in map.sample_mass() {
            prop_assert!((m - 1.0 / n as f64).abs() <= 1e-9);
        }
    }

    #[test]
    fn constant_density_scales_perimeter(side in 0.5f64..2.0, r in 0.05f64..0.2, t in 0.1f64..0.9, power in 1u32..3) {
        let domain = Domain::new(vec![0.0, 0.0], vec![side, side]).unwrap();
        let rho = DensityModel::uniform(domain);
        let c = 1.0 / (side * side);
        let ball = weighted_tv_analytic(&ShapeSpec::ball(vec![0.5 * side, 0.5 * side], r * side), &rho, power).unwrap().value;
        prop_assert!(rel(ball, c.powi(power as i32) * 2.0 * std::f64::consts::PI * r * side) <= 1e-8);
        let half = weighted_tv_analytic(&ShapeSpec::lower_half(2, 1, t * side), &rho, power).unwrap().value;
        prop_assert!(rel(half, c.powi(power as i32) * side) <= 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn companion_mass_and_support(cx in 0.3f64..0.7, cy in 0.3f64..0.7, r in 0.1f64..0.25, p in 1.0f64..2.0) {
        let shape = ShapeSpec::ball(vec![cx, cy], r);
        let sol = companion_set_lp(&shape, &unit2(), p, &[24, 24]).unwrap();
        let total: f64 = sol.masses.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
        for i in 0..sol.theta.len() {
            if shape.indicator(&sol.theta.cell_center(i)) {
                prop_assert!(sol.theta.values()[i].abs() <= 1e-12);
            }
        }
    }
}
