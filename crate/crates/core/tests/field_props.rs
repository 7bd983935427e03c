use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};

use fbms::fields::{div_sigma_radial, fd_div_oracle, random_boundary_point, random_sample, star_term};
use fbms::threshold::{star_max, STAR_TOL};
use fbms::{find_r_bar, make_preset, CalibrationField, ConformalChart, Preset, RadialGeometry};
use proptest::prelude::*;

fn preset() -> impl Strategy<Value = Preset> {
    prop_oneof![Just(Preset::Euclidean), Just(Preset::Sphere), Just(Preset::GaussianShrinker)]
}

fn setup(p: Preset) -> (RadialGeometry, ConformalChart) {
    let prof = make_preset(p);
    let chart = ConformalChart::for_profile(&prof).unwrap();
    (RadialGeometry::new(prof), chart)
}

/// Admissible radius `R = t·R̄` (euclidean: `R = 2t`).
fn field(p: Preset, t: f64) -> CalibrationField {
    let (g, c) = setup(p);
    let bar = find_r_bar(&g, 1e-10, 400).unwrap().r_bar;
    let big_r = if bar.is_finite() { t * bar } else { 2.0 * t };
    let s = c.s_of_r(big_r).unwrap();
    CalibrationField::conformal(g, c, big_r, vec![s, 0.0, 0.0]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn divergence_bounded_by_one(p in preset(), t in 0.2..1.0f64, seed in any::<u64>()) {
        let f = field(p, t);
        for i in 0..64 {
            let s = random_sample(seed, i, f.chart_radius(), f.y(), 1e-6);
            let div = f.div_exact(&s).unwrap();
            prop_assert!(div <= 1.0 + 1e-9, "div = {}", div);
            prop_assert!(f.div_bound(&s).unwrap() - div >= -1e-9);
        }
    }

    #[test]
    fn oracle_agrees(p in preset(), t in 0.2..1.0f64, seed in any::<u64>()) {
        let f = field(p, t);
        let h = 1e-4 * f.chart_radius();
        for i in 0..16 {
            let s = random_sample(seed, i, f.chart_radius(), f.y(), 10.0 * h);
            let exact = f.div_exact(&s).unwrap();
            let fd = fd_div_oracle(&f, &s, h).unwrap();
            prop_assert!((exact - fd).abs() / exact.abs().max(1.0) <= 1e-6);
        }
    }

    #[test]
    fn tangent_on_boundary(p in preset(), t in 0.2..1.0f64, seed in any::<u64>()) {
        let f = field(p, t);
        for i in 0..32 {
            let x = random_boundary_point(seed, i, f.chart_radius(), f.y(), 1e-3 * f.chart_radius());
            prop_assert!(f.tangency_residual(&x).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn extrinsic_field_tangent_on_boundary(t in 0.2..1.0f64, seed in any::<u64>()) {
        let big_r = t * FRAC_PI_2;
        let f = CalibrationField::sphere_extrinsic(big_r, vec![2.0 * (0.5 * big_r).tan(), 0.0, 0.0]).unwrap();
        for i in 0..32 {
            let x = random_boundary_point(seed, i, f.chart_radius(), f.y(), 1e-3 * f.chart_radius());
            prop_assert!(f.tangency_residual(&x).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn radial_plane_is_an_equality_case(p in preset(), u in 0.01..0.9f64) {
        let (g, _) = setup(p);
        let r_max = g.r_max();
        let r = if r_max.is_finite() { u * r_max } else { 4.0 * u };
        prop_assert!((div_sigma_radial(&g, r, 1.0).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn star_small_radius_law(p in prop_oneof![Just(Preset::Sphere), Just(Preset::GaussianShrinker)], t in 0.2..1.0f64) {
        let (g, _) = setup(p);
        let big_r = t * find_r_bar(&g, 1e-10, 400).unwrap().r_bar;
        let k0 = g.profile().k0();
        let limit = (-1.0 + k0 * g.integral_i(big_r).unwrap()) * k0 / 4.0;
        let q = |r: f64| star_term(&g, r, big_r).unwrap() / r.powi(4);
        let est = (100.0 * q(1e-3) - q(1e-2)) / 99.0;
        prop_assert!((est - limit).abs() <= 1e-3 * limit.abs());
    }
}

#[test]
fn star_sign_structure() {
    for p in [Preset::Sphere, Preset::GaussianShrinker] {
        let g = setup(p).0;
        let bar = find_r_bar(&g, 1e-10, 400).unwrap().r_bar;
        for t in [0.25, 0.5, 0.9, 0.99] {
            let big_r = t * bar;
            // the supremum is approached as r -> 0, where (*) vanishes like r⁴
            assert!(star_max(&g, big_r, 400).unwrap().value <= STAR_TOL, "{p} at {t}");
            assert!(star_term(&g, 0.5 * big_r, big_r).unwrap() < 0.0, "{p} at {t}");
        }
    }
    let g = setup(Preset::Sphere).0;
    for big_r in [FRAC_PI_2 + 1e-3, 1.8, 2.5] {
        assert!(star_max(&g, big_r, 400).unwrap().value > 0.0);
    }
    assert!(star_max(&g, FRAC_PI_3, 400).unwrap().value <= STAR_TOL);
}
