use cabm::intensities::{multi_time_intensity, single_time_intensity};
use cabm::kernels::{extended_block, propagated_block, propagated_block_quadrature};
use cabm::simulator::{run_ensemble, SimConfig};
use cabm::skewalg::{determinant, pfaffian, SkewMatrix};
use cabm::stats::estimate_window_density;
use cabm::{ModelKind, SpaceTimePoint};
use proptest::prelude::*;

fn pt(t: f64, z: f64) -> SpaceTimePoint {
    SpaceTimePoint::new(t, z).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cbm_intensity_is_power_of_two_times_abm(
        raw in prop::collection::vec((0.3f64..2.0, -2.0f64..2.0), 1..5)
    ) {
        let points: Vec<_> = raw.iter().map(|&(t, z)| pt(t, z)).collect();
        let a = multi_time_intensity(&points, ModelKind::Abm).unwrap().value;
        let c = multi_time_intensity(&points, ModelKind::Cbm).unwrap().value;
        let scale = 2f64.powi(points.len() as i32);
        prop_assert!((c - scale * a).abs() <= 1e-10 * (1.0 + c.abs()));
    }

    #[test]
    fn intensity_is_translation_invariant(
        raw in prop::collection::vec((0.3f64..2.0, -2.0f64..2.0), 1..5),
        shift in -3.0f64..3.0,
    ) {
        let a: Vec<_> = raw.iter().map(|&(t, z)| pt(t, z)).collect();
        let b: Vec<_> = raw.iter().map(|&(t, z)| pt(t, z + shift)).collect();
        let va = multi_time_intensity(&a, ModelKind::Abm).unwrap().value;
        let vb = multi_time_intensity(&b, ModelKind::Abm).unwrap().value;
        prop_assert!((va - vb).abs() <= 1e-10 * (1.0 + va.abs()));
    }

    #[test]
    fn equal_times_agree_with_single_time_assembly(
        t in 0.2f64..3.0,
        zs in prop::collection::vec(-3.0f64..3.0, 1..6),
    ) {
        let points: Vec<_> = zs.iter().map(|&z| pt(t, z)).collect();
        let multi = multi_time_intensity(&points, ModelKind::Abm).unwrap().value;
        let single = single_time_intensity(t, &zs, ModelKind::Abm).unwrap().value;
        prop_assert!((multi - single).abs() <= 1e-12 * (1.0 + multi.abs()));
    }

    #[test]
    fn pfaffian_squares_to_determinant(n in 1usize..8, seed in any::<u64>()) {
        let mut x = seed | 1;
        let mut next = move || {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let a = SkewMatrix::from_upper(2 * n, |_, _| next()).unwrap();
        let pf = pfaffian(&a);
        let det = determinant(&a);
        prop_assert!((pf * pf - det).abs() <= 1e-10 * (1.0 + det.abs()));
    }
}

#[test]
fn extended_kernel_orders_its_arguments() {
    let p = pt(0.5, 0.3);
    let q = pt(1.2, -0.4);
    let forward = extended_block(p, q, ModelKind::Abm).unwrap();
    let back = extended_block(q, p, ModelKind::Abm).unwrap();
    assert!(forward.max_abs_diff(&back.neg_transpose()) < 1e-14);
}

#[test]
fn closed_form_matches_quadrature() {
    for (t, s, z) in [(1.0, 0.5, 0.0), (2.0, 0.3, -1.7), (0.8, 0.7, 2.4)] {
        let closed = propagated_block(t, s, z, ModelKind::Cbm).unwrap();
        let quad = propagated_block_quadrature(t, s, z, ModelKind::Cbm).unwrap();
        assert!(closed.max_abs_diff(&quad) < 1e-9, "t={t} s={s} z={z}");
    }
}

#[test]
fn one_point_density() {
    // (4πt)^{-1/2} for ABM, (πt)^{-1/2} for CBM
    let abm = multi_time_intensity(&[pt(2.0, 0.7)], ModelKind::Abm).unwrap().value;
    let cbm = multi_time_intensity(&[pt(2.0, 0.7)], ModelKind::Cbm).unwrap().value;
    assert!((abm - 0.19947114020071635).abs() < 1e-15);
    assert!((cbm - 0.3989422804014327).abs() < 1e-15);
}

#[test]
fn small_simulation_is_reproducible_and_near_density() {
    let cfg = SimConfig::with_default_margin(ModelKind::Cbm, 40.0, 6.0, 1e-3, vec![1.0], 11);
    let a = run_ensemble(&cfg, 200).unwrap();
    let b = run_ensemble(&cfg, 200).unwrap();
    assert_eq!(a, b);
    let est = estimate_window_density(&a, 1.0).unwrap();
    let exact = std::f64::consts::PI.powf(-0.5);
    assert!((est.value - exact).abs() < 5.0 * est.stderr, "{} ± {}", est.value, est.stderr);
}
