//! Property checks of the structural identities each module must satisfy.

use std::f64::consts::PI;

use fracmin::cone::{dimension_gap, hardy_ratio, HardyCutoff, SphereGrid};
use fracmin::geometry::{build_stack_fn, normal_and_curvature, sheet_distance, GraphSheet, GridSpec};
use fracmin::kernel::{profile_f, sphere_area, FractionalParams};
use fracmin::nonlocal::h_k;
use fracmin::quadrature::{am_hm_bound, pv_integrate_symmetric, tail_integral, QuadratureSpec};
use fracmin::slab::{min_margin, slab_hs_1d, ScanConfig, SlabPattern};
use fracmin::toda::{ansatz, lane_emden_radial, solve_balancing, toda_residual, toda_solve, TodaDomain, TodaOptions, TodaState};
use proptest::prelude::*;

fn cheap() -> ProptestConfig {
    ProptestConfig { cases: 24, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cheap())]

    #[test]
    fn odd_integrands_vanish(a in -2.0..2.0f64, b in -2.0..2.0f64, s in 0.1..0.95f64, x0 in -1.0..1.0f64) {
        let spec = QuadratureSpec::new(0.05, 0.1, 5.0, 1e-10).unwrap();
        let f = move |z: &[f64]| {
            let r = z[0].abs();
            z[0].signum() * r.powf(-1.0 - s) * (1.0 + a * z[0] * z[0] + b * z[0].powi(4)) / (1.0 + r.powi(6))
        };
        let v = pv_integrate_symmetric(f, &[x0], &spec).unwrap().value;
        prop_assert!(v.abs() <= 1e-12, "odd integrand gave {v}");
    }

    #[test]
    fn am_hm_holds(h in prop::collection::vec(1e-3..1e3f64, 1..20)) {
        let (lhs, rhs) = am_hm_bound(&h).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12));
    }

    #[test]
    fn am_hm_equality_for_constant_vectors(v in 1e-3..1e3f64, len in 1usize..20) {
        let (lhs, rhs) = am_hm_bound(&vec![v; len]).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs);
    }

    #[test]
    fn tail_matches_radial_sum(rho in 0.1..10.0f64, dim in 1usize..4, excess in 0.5..3.0f64) {
        let power = dim as f64 + excess;
        // ∫_ρ^∞ r^{dim-1-power} dr with r = ρ e^x, by panels of Gauss–Legendre
        let nodes = gauss_quad::GaussLegendre::new(20).unwrap();
        let f = |x: f64| rho.powf(-excess) * (-excess * x).exp();
        let panel = 1.0 / excess;
        let radial: f64 = (0..80).map(|k| nodes.integrate(k as f64 * panel, (k + 1) as f64 * panel, f)).sum();
        let brute = sphere_area(dim) * radial;
        let exact = tail_integral(rho, power, dim).unwrap();
        prop_assert!((exact - brute).abs() <= 1e-6 * exact, "{exact} vs {brute}");
    }

    #[test]
    fn profile_is_monotone_with_kernel_derivative(t in -6.0..6.0f64, dt in 1e-3..1.0f64, n in 2usize..5, s in 0.05..0.99f64, c in 0.5..2.0f64) {
        let p = FractionalParams::new(n, s).unwrap();
        prop_assert!(profile_f(t + dt, &p, c) > profile_f(t, &p, c));
        // fourth-order central difference
        let h = 1e-3;
        let d = (profile_f(t - 2.0 * h, &p, c) - 8.0 * profile_f(t - h, &p, c) + 8.0 * profile_f(t + h, &p, c) - profile_f(t + 2.0 * h, &p, c)) / (12.0 * h);
        let scaled = d * (1.0 + t * t).powf(0.5 * (n as f64 + s));
        prop_assert!((scaled - c).abs() <= 1e-8 * c, "F'(t)(1+t^2)^((n+s)/2) = {scaled}");
    }

    #[test]
    fn reflection_flips_curvature(a in -0.5..0.5f64, b in -0.5..0.5f64, c in -0.3..0.3f64, x in -0.5..0.5f64) {
        let grid = GridSpec::new(1, 1.0, 81, false).unwrap();
        let g = GraphSheet::from_fn(grid, |z| a * z[0] + b * z[0] * z[0] + c * z[0].powi(3)).unwrap();
        let (nu, h, _) = normal_and_curvature(&g, &[x]).unwrap();
        let (nu_r, h_r, _) = normal_and_curvature(&g.negated(), &[x]).unwrap();
        prop_assert!((h + h_r).abs() <= 1e-10 * (1.0 + h.abs()));
        prop_assert!((nu[0] + nu_r[0]).abs() <= 1e-12);
        prop_assert!((nu[1] - nu_r[1]).abs() <= 1e-12);
    }

    #[test]
    fn distance_and_vertical_gap_are_comparable(b in -0.05..0.05f64, c in -0.05..0.05f64, gap in 0.05..0.3f64, x in -0.5..0.5f64) {
        let grid = GridSpec::new(1, 2.0, 161, false).unwrap();
        let p = FractionalParams::new(2, 0.9).unwrap();
        let st = build_stack_fn(grid, &[&move |z: &[f64]| b * z[0] + c * z[0] * z[0], &move |z: &[f64]| gap + b * z[0] + c * z[0] * z[0]], p).unwrap();
        let delta = st.sheets.iter().map(|s| s.max_gradient()).fold(0.0, f64::max);
        let factor = (1.0 + delta * delta).sqrt();
        let dist = sheet_distance(&st, 0, &[x], 1).unwrap();
        prop_assert!(dist <= gap * factor * (1.0 + 1e-9) && dist >= gap / factor * (1.0 - 1e-9), "dist {dist}, gap {gap}, factor {factor}");
    }

    #[test]
    fn symmetric_slab_patterns_balance(sigma in 0.01..0.5f64, offsets in prop::collection::vec(0.05..1.0f64, 1..5)) {
        let p = FractionalParams::from_sigma(2, sigma).unwrap();
        let mut d = 0.0;
        let mut side = Vec::new();
        for o in offsets {
            d += o;
            side.push(d);
        }
        let mut planes: Vec<f64> = side.iter().rev().map(|x| -x).collect();
        planes.push(0.0);
        planes.extend(&side);
        let centre = side.len();
        let pattern = SlabPattern::new(planes, None, p).unwrap();
        let v = slab_hs_1d(&pattern, centre).unwrap();
        prop_assert!(v.abs() <= 1e-8, "H_s = {v}");
    }

    #[test]
    fn power_law_comparability(sigma in 1e-3..0.1f64, t in 0.0..1.0f64) {
        // gaps log-uniform in (σ⁴, 1)
        let gap = (4.0 * sigma.ln() * (1.0 - t)).exp();
        let s = 1.0 - sigma;
        let ratio = gap.powf(1.0 + s) / (gap * gap);
        let band = 8.0 * sigma * sigma.ln().abs();
        prop_assert!(ratio >= 1.0 - band && ratio <= 1.0 + band, "ratio {ratio}, band {band}");
    }

    #[test]
    fn hardy_never_beats_the_constant(n in 3usize..9, ramp in 0.5..10.0f64, plateau in 1.0..50.0f64) {
        let r = hardy_ratio(n, &[HardyCutoff { ramp, plateau }]).unwrap();
        let floor = ((n as f64 - 3.0) / 2.0).powi(2);
        prop_assert!(r >= floor - 1e-6, "{r} < {floor}");
    }
}

#[test]
fn slab_reduction_matches_set_quadrature() {
    // 5 finite flat patterns, compared with the set-based principal value on planes
    let spec = QuadratureSpec::new(0.005, 0.02, 2000.0, 1e-9).unwrap();
    let patterns: [&[f64]; 5] = [&[0.0, 0.3], &[0.0, 0.2, 0.5], &[-0.1, 0.15, 0.3, 0.7], &[0.0, 0.45, 0.6], &[-0.3, -0.1, 0.25, 0.4, 0.55]];
    for (idx, planes) in patterns.iter().enumerate() {
        let sigma = 0.05 + 0.05 * idx as f64;
        let p = FractionalParams::from_sigma(2, sigma).unwrap();
        // flat planes carry an O(h²) grid error in the set-based form
        let grid = GridSpec::new(1, 4.0, 128, true).unwrap();
        let fns: Vec<Box<dyn Fn(&[f64]) -> f64>> = planes.iter().map(|&h| Box::new(move |_: &[f64]| h) as Box<dyn Fn(&[f64]) -> f64>).collect();
        let refs: Vec<&dyn Fn(&[f64]) -> f64> = fns.iter().map(|f| f.as_ref()).collect();
        let st = build_stack_fn(grid, &refs, p).unwrap();
        let pattern = SlabPattern::new(planes.to_vec(), None, p).unwrap();
        for k in 0..planes.len() {
            let slab = slab_hs_1d(&pattern, k).unwrap();
            // the stack puts E below its first sheet, the pattern puts E^c there
            let orient = if st.e_below() { -1.0 } else { 1.0 };
            let set = orient * sigma * h_k(&st, k, &[0.3], &spec).unwrap().value;
            assert!((slab - set).abs() <= 1e-5 * (1.0 + slab.abs()), "pattern {idx} plane {k}: {slab} vs {set}");
        }
    }
}

#[test]
fn margin_grows_with_spacing() {
    let mut config = ScanConfig::standard();
    config.resolution = 61;
    let spec = QuadratureSpec::new(0.1, 0.2, 200.0, 1e-4).unwrap();
    let sigma: f64 = 0.2;
    let margins: Vec<f64> = [0.5, 1.0, 2.0]
        .iter()
        .map(|c| min_margin(sigma, c * sigma.sqrt(), &config, &spec).unwrap().min_margin)
        .collect();
    assert!(margins.windows(2).all(|w| w[1] >= w[0]), "{margins:?}");
    assert!(margins[0] < 0.0 && margins[2] > 0.0, "{margins:?}");
}

#[test]
fn balancing_vectors_are_antisymmetric() {
    for n in 1..=8 {
        let b = solve_balancing(n).unwrap();
        for i in 0..n {
            assert!((b.a[i] + b.a[n - 1 - i]).abs() <= 1e-10, "N = {n}: {:?}", b.a);
        }
        assert!(b.a.windows(2).all(|w| w[0] > w[1]));
    }
}

#[test]
fn flip_maps_residuals() {
    for (dom, n) in [
        (TodaDomain::Disc { radius: 1.0, n_r: 8, n_theta: 16 }, 3),
        (TodaDomain::Rectangle { lx: 1.0, ly: 1.5, nx: 12, ny: 16 }, 2),
        (TodaDomain::Interval { length: 2.0, nodes: 40 }, 4),
    ] {
        let (bnd, vals) = ansatz(&dom, n, 1.0).unwrap();
        // perturb so the residual is far from zero
        let vals: Vec<Vec<f64>> = vals.iter().enumerate().map(|(i, v)| v.iter().enumerate().map(|(k, x)| x + 0.01 * ((i + 3 * k) % 7) as f64).collect()).collect();
        let st = TodaState::new(dom.clone(), vals, bnd.clone()).unwrap();
        let r = toda_residual(&st).unwrap().fields;
        let rf = toda_residual(&st.flipped()).unwrap().fields;
        for i in 0..n {
            for (a, b) in r[i].iter().zip(&rf[n - 1 - i]) {
                assert!((a + b).abs() <= 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
            }
        }
        let sol = toda_solve(&dom, bnd, None, &TodaOptions::default()).unwrap();
        for k in 0..dom.len() {
            assert!((1..n).all(|i| sol.profiles[i][k] > sol.profiles[i - 1][k]));
        }
        assert!(toda_residual(&sol.flipped()).unwrap().max.iter().all(|m| *m <= 1e-8));
    }
}

#[test]
fn lane_emden_scaling() {
    // g solves Δg = 1/g  ⇒  λ g(r/λ) does too
    for m in [1, 2] {
        let base = lane_emden_radial(m, 4.0, 1.0).unwrap();
        for lambda in [0.5, 2.0] {
            let scaled = lane_emden_radial(m, 4.0 * lambda, lambda).unwrap();
            for r in [0.0, 0.3, 1.0, 2.5, 3.9] {
                let a = scaled.value(lambda * r);
                let b = lambda * base.value(r);
                assert!((a - b).abs() <= 1e-8 * b, "m {m} lambda {lambda} r {r}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn dimension_gap_sign_pattern() {
    for n in 3..=12 {
        assert_eq!(dimension_gap(n) > 0.0, (3..=7).contains(&n), "n = {n}");
    }
}

#[test]
fn sphere_quadrature_integrates_harmonics() {
    let g = SphereGrid::sphere(32, 64).unwrap();
    let ones = vec![1.0; g.len()];
    assert!((g.integrate(&ones) - 4.0 * PI).abs() <= 1e-8);
    let harmonics: [fn(&[f64]) -> f64; 5] = [|p| p[0], |p| p[1], |p| p[2], |p| p[0] * p[1], |p| 3.0 * p[2] * p[2] - 1.0];
    for y in harmonics {
        let vals: Vec<f64> = (0..g.len()).map(|k| y(&g.point(k))).collect();
        assert!(g.integrate(&vals).abs() <= 1e-8);
    }
}

#[test]
fn stack_documents_round_trip_exactly() {
    let grid = GridSpec::new(1, 2.0, 161, false).unwrap();
    let p = FractionalParams::new(2, 0.9).unwrap();
    let st = build_stack_fn(grid, &[&|x: &[f64]| 0.1 * (3.0 * x[0]).sin() - 0.2, &|x: &[f64]| 0.3 + x[0] * x[0] / 7.0], p).unwrap();
    let text = st.to_json();
    let back = fracmin::geometry::SheetStack::from_json(&text).unwrap();
    assert_eq!(back.to_json(), text);
    assert_eq!(back.sheets[1].values, st.sheets[1].values);
}
