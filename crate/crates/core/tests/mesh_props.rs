use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};

use fbms::audit::{equality_alignment, local_edge_length};
use fbms::mesh::area_g;
use fbms::{
    calibration_audit, make_mesh, make_preset, minimize, CalibrationField, ConformalChart, MinimizeOptions, Preset,
    RadialGeometry, Shape,
};
use proptest::prelude::*;

fn setup(p: Preset) -> (RadialGeometry, ConformalChart) {
    let prof = make_preset(p);
    let chart = ConformalChart::for_profile(&prof).unwrap();
    (RadialGeometry::new(prof), chart)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn solves_respect_the_area_bound(
        p in prop_oneof![Just(Preset::Euclidean), Just(Preset::Sphere), Just(Preset::GaussianShrinker)],
        t in 0.3..1.0f64,
        seed in any::<u64>(),
    ) {
        let (g, c) = setup(p);
        let big_r = match p {
            Preset::Euclidean => 2.0 * t,
            Preset::Sphere => t * FRAC_PI_2,
            Preset::GaussianShrinker => t * 1.8,
        };
        let big_s = c.s_of_r(big_r).unwrap();
        let mesh = make_mesh(Shape::PerturbedDisk, big_s, 24, seed, 0.05 * big_s).unwrap();
        let opts = MinimizeOptions { trace: true, ..MinimizeOptions::default() };
        let (out, rep) = minimize(&mesh, &g, &c, &opts).unwrap();
        prop_assert!(rep.converged);
        prop_assert!(rep.orthogonality_defect.to_degrees() <= 2.0);
        prop_assert!(rep.area_g >= rep.bound * (1.0 - 0.01));
        for w in rep.trace.windows(2) {
            prop_assert!(w[1].area <= w[0].area);
        }
        if rep.gap.abs() <= 0.01 * rep.bound {
            prop_assert!(equality_alignment(&out) >= 0.95);
        }
    }
}

#[test]
fn flat_disk_area_converges_at_second_order() {
    let (g, c) = setup(Preset::Sphere);
    let big_r = FRAC_PI_3;
    let bound = g.disk_area(big_r).unwrap();
    let s = c.s_of_r(big_r).unwrap();
    let errs: Vec<f64> = [12, 24, 48]
        .iter()
        .map(|&m| (area_g(&make_mesh(Shape::FlatDisk, s, m, 0, 0.0).unwrap(), &c) - bound).abs())
        .collect();
    for w in errs.windows(2) {
        let rate = (w[0] / w[1]).log2();
        assert!(rate > 1.8, "errors {errs:?}");
    }
}

#[test]
fn audit_residual_shrinks_under_refinement() {
    let (g, c) = setup(Preset::Sphere);
    let big_r = FRAC_PI_2;
    let s = c.s_of_r(big_r).unwrap();
    let mut prev: Option<(f64, [f64; 3])> = None;
    for m in [50, 100] {
        let mesh = make_mesh(Shape::FlatDisk, s, m, 0, 0.0).unwrap();
        let yv = mesh.nearest_boundary_vertex(&[s, 0.0, 0.0]).unwrap();
        let y = mesh.vertices()[yv].to_vec();
        let f = CalibrationField::conformal(g.clone(), c.clone(), big_r, y).unwrap();
        let eps = 0.32;
        assert!(eps >= 5.0 * local_edge_length(&mesh, yv));
        let rec = calibration_audit(&mesh, &f, eps).unwrap();
        let h = mesh.max_edge_length();
        let res = [(rec.area_g - rec.bound).abs(), rec.divergence_residual, rec.boundary_flux];
        if let Some((h0, r0)) = prev {
            // at least first order in the edge length
            for (a, b) in r0.iter().zip(&res) {
                assert!(*b <= a * (h / h0) * 1.05, "residuals {r0:?} -> {res:?}");
            }
        }
        prev = Some((h, res));
    }
}
