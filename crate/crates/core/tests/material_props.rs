use std::f64::consts::PI;

use approx::assert_relative_eq;
use hopper_core::material::{
    build_leg, bulk_density_from_porosity, porosity_from_bulk_density, series_equivalent_stiffness,
    stiffness_from_modulus, LegGeometry, MaterialSpec, SegmentSpec,
};
use proptest::prelude::*;

fn segment(e: f64, r: f64, l: f64) -> SegmentSpec {
    SegmentSpec::new(MaterialSpec::new("m", 1000.0, e).unwrap(), l, r).unwrap()
}

proptest! {
    #[test]
    fn series_matches_harmonic_sum(ks in prop::collection::vec(1e-3f64..1e9, 1..=6)) {
        let oracle = 1.0 / ks.iter().map(|k| 1.0 / k).sum::<f64>();
        let k = series_equivalent_stiffness(&ks).unwrap();
        prop_assert!(((k - oracle) / oracle).abs() < 1e-12);
    }

    #[test]
    fn series_is_at_most_the_softest(ks in prop::collection::vec(1e-3f64..1e9, 1..=6)) {
        let k = series_equivalent_stiffness(&ks).unwrap();
        let min = ks.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(k <= min * (1.0 + 1e-12));
    }

    #[test]
    fn series_of_equal_springs(k in 1.0f64..1e9, n in 1usize..=8) {
        let eq = series_equivalent_stiffness(&vec![k; n]).unwrap();
        prop_assert!((eq - k / n as f64).abs() <= 1e-12 * k);
    }

    #[test]
    fn stiffness_scaling(e in 1e8f64..1e12, r in 1e-3f64..0.05, l in 0.05f64..1.0, a in 0.2f64..5.0) {
        let k = stiffness_from_modulus(&segment(e, r, l));
        let ratio = |k2: f64, expected: f64| ((k2 / k) / expected - 1.0).abs();
        prop_assert!(ratio(stiffness_from_modulus(&segment(a * e, r, l)), a) < 1e-9);
        prop_assert!(ratio(stiffness_from_modulus(&segment(e, a * r, l)), a.powi(4)) < 1e-9);
        prop_assert!(ratio(stiffness_from_modulus(&segment(e, r, a * l)), a.powi(-3)) < 1e-9);
    }

    #[test]
    fn porosity_round_trip(solid in 100.0f64..25000.0, phi in 0.0f64..=1.0) {
        let bulk = bulk_density_from_porosity(phi, solid).unwrap();
        let back = porosity_from_bulk_density(bulk, solid).unwrap();
        prop_assert!((back - phi).abs() < 1e-12);
    }

    #[test]
    fn porosity_decreases_with_bulk_density(solid in 100.0f64..25000.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        prop_assume!((a - b).abs() > 1e-9);
        let (lo, hi) = (a.min(b) * solid, a.max(b) * solid);
        prop_assert!(porosity_from_bulk_density(lo, solid).unwrap() > porosity_from_bulk_density(hi, solid).unwrap());
    }

    #[test]
    fn leg_mass_is_the_sum_of_segments(
        densities in prop::collection::vec(500.0f64..22500.0, 1..=6),
        r in 5e-3f64..0.03,
        total in 0.2f64..1.5,
    ) {
        let mats: Vec<MaterialSpec> = densities.iter().map(|&d| MaterialSpec::new("m", d, 1e10).unwrap()).collect();
        let leg = build_leg(&mats, LegGeometry { radius: r, total_length: total }, 0.05).unwrap();
        let l = total / densities.len() as f64;
        let oracle: f64 = densities.iter().map(|d| d * PI * r * r * l).sum();
        prop_assert!((leg.total_mass() - oracle).abs() <= 1e-12 * oracle);
    }

    #[test]
    fn reversed_gradient_keeps_bulk_properties(
        props in prop::collection::vec((500.0f64..22500.0, 1e8f64..1e12), 2..=4),
    ) {
        let mats: Vec<MaterialSpec> = props.iter().map(|&(d, e)| MaterialSpec::new("m", d, e).unwrap()).collect();
        let mut rev = mats.clone();
        rev.reverse();
        prop_assume!(rev != mats);
        let g = LegGeometry { radius: 0.0125, total_length: 0.5 };
        let a = build_leg(&mats, g, 0.05).unwrap();
        let b = build_leg(&rev, g, 0.05).unwrap();
        prop_assert!((a.total_mass() - b.total_mass()).abs() <= 1e-12 * a.total_mass());
        let (ka, kb) = (a.equivalent_stiffness().unwrap(), b.equivalent_stiffness().unwrap());
        prop_assert!((ka - kb).abs() <= 1e-12 * ka);
        prop_assert_ne!(a, b);
    }
}

#[test]
fn mono_leg_is_one_segment_over_n() {
    let ss = MaterialSpec::new("SS", 8000.0, 200e9).unwrap();
    let g = LegGeometry { radius: 0.0125, total_length: 0.5 };
    let one = build_leg(&[ss.clone()], g, 0.0).unwrap().equivalent_stiffness().unwrap();
    // A third-length segment is 27 times stiffer than the whole link;
    // three of them in series give 9 times.
    let three = build_leg(&[ss.clone(), ss.clone(), ss], g, 0.0).unwrap();
    let k_seg = three.segments()[0].stiffness;
    assert_relative_eq!(three.equivalent_stiffness().unwrap(), k_seg / 3.0, max_relative = 1e-12);
    assert_relative_eq!(three.equivalent_stiffness().unwrap(), 9.0 * one, max_relative = 1e-12);
}

#[test]
fn damping_follows_the_ratio() {
    let ss = MaterialSpec::new("SS", 8000.0, 200e9).unwrap();
    let leg = build_leg(&[ss], LegGeometry { radius: 0.0125, total_length: 0.5 }, 0.05).unwrap();
    let s = &leg.segments()[0];
    assert_relative_eq!(s.damping, 2.0 * 0.05 * (s.stiffness * s.mass).sqrt(), max_relative = 1e-12);
}
