mod common;

use fractal_lq::dyadic_measure::{
    coarsen, convolve, discretize, discretize_in, lq_norm, lq_sum_streaming, restrict_normalize, AtomicMeasure,
    DyadicMeasure, Geometry,
};
use fractal_lq::Error;
use proptest::prelude::*;

fn measure_at(geometry: Geometry, m: u32) -> impl Strategy<Value = DyadicMeasure> {
    prop::collection::vec((0..1i64 << m, 0.01f64..1.0), 1..50).prop_map(move |v| {
        let s: f64 = v.iter().map(|e| e.1).sum();
        DyadicMeasure::from_entries(geometry, m, v.into_iter().map(|(k, w)| (k, w / s)).collect()).unwrap()
    })
}

fn measure(geometry: Geometry) -> impl Strategy<Value = DyadicMeasure> {
    (1u32..=12).prop_flat_map(move |m| measure_at(geometry, m))
}

fn circle_pair() -> impl Strategy<Value = (DyadicMeasure, DyadicMeasure)> {
    (1u32..=12).prop_flat_map(|m| (measure_at(Geometry::Circle, m), measure_at(Geometry::Circle, m)))
}

fn atoms() -> impl Strategy<Value = AtomicMeasure> {
    prop::collection::vec((0.0f64..1.0, 0.01f64..1.0), 1..40).prop_map(|v| {
        let s: f64 = v.iter().map(|e| e.1).sum();
        AtomicMeasure::new(v.into_iter().map(|(x, w)| (x, w / s)).collect()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn convolution_preserves_mass_and_commutes((a, b) in circle_pair()) {
        let ab = convolve(&a, &b, Geometry::Circle).unwrap();
        let ba = convolve(&b, &a, Geometry::Circle).unwrap();
        prop_assert!((ab.total_mass() - 1.0).abs() < 1e-12);
        for (x, y) in ab.to_entries().iter().zip(ba.to_entries()) {
            prop_assert_eq!(x.0, y.0);
            prop_assert!((x.1 - y.1).abs() < 1e-14);
        }
    }

    #[test]
    fn line_convolution_support_is_sumset(a in measure(Geometry::Line)) {
        let aa = convolve(&a, &a, Geometry::Line).unwrap();
        let sup = a.support();
        let mut want: Vec<i64> = sup.iter().flat_map(|x| sup.iter().map(move |y| x + y)).collect();
        want.sort();
        want.dedup();
        prop_assert_eq!(aa.support(), want);
    }

    #[test]
    fn lq_sum_decreases_in_q(a in measure(Geometry::Circle), p in 1.01f64..4.0, dq in 0.01f64..3.0) {
        let lo = lq_norm(&a, p).unwrap();
        let hi = lq_norm(&a, p + dq).unwrap();
        prop_assert!(hi <= lo * (1.0 + 1e-12));
        prop_assert!(lo <= 1.0 + 1e-12);
        prop_assert!(hi >= a.max_mass().powf(p + dq) * (1.0 - 1e-12));
    }

    #[test]
    fn coarsening_composes(a in measure(Geometry::Circle), s in 0u32..6, t in 0u32..6) {
        let m = a.scale_m();
        let (m1, m2) = (m.saturating_sub(s), m.saturating_sub(s + t));
        let two = coarsen(&coarsen(&a, m1).unwrap(), m2).unwrap();
        let one = coarsen(&a, m2).unwrap();
        prop_assert!((one.total_mass() - 1.0).abs() < 1e-12);
        for (x, y) in one.to_entries().iter().zip(two.to_entries()) {
            prop_assert_eq!(x.0, y.0);
            prop_assert!((x.1 - y.1).abs() < 1e-14);
        }
    }

    #[test]
    fn restriction_is_a_probability(a in measure(Geometry::Circle), s in 0u32..4) {
        let s = s.min(a.scale_m());
        let j = a.support()[0] >> (a.scale_m() - s);
        let r = restrict_normalize(&a, s, j).unwrap();
        prop_assert!((r.total_mass() - 1.0).abs() < 1e-12);
        prop_assert_eq!(r.scale_m(), a.scale_m());
        prop_assert!(r.support().iter().all(|&k| k >> (a.scale_m() - s) == j));
    }

    #[test]
    fn discretization_keeps_mass(am in atoms(), m in 1u32..20) {
        let dm = discretize(&am, m, Geometry::Circle).unwrap();
        prop_assert!((dm.total_mass() - 1.0).abs() < 1e-12);
        let streamed = lq_sum_streaming(&am, m, (0.0, 1.0), 2.5).unwrap();
        let grid = lq_norm(&discretize_in(&am, m, (0.0, 1.0)).unwrap(), 2.5).unwrap();
        prop_assert!((streamed - grid).abs() <= 1e-12 * grid);
    }
}

#[test]
fn dirac_and_uniform() {
    let d = DyadicMeasure::dirac(Geometry::Circle, 8, 3).unwrap();
    assert_eq!(d.mass_at(3), 1.0);
    assert_eq!(lq_norm(&d, 3.0).unwrap(), 1.0);
    let u = DyadicMeasure::uniform(Geometry::Circle, 10).unwrap();
    let l2 = lq_norm(&u, 2.0).unwrap();
    assert!((l2 - 2f64.powi(-10)).abs() < 1e-18);
}

#[test]
fn restriction_to_empty_interval_fails() {
    let d = DyadicMeasure::dirac(Geometry::Circle, 8, 3).unwrap();
    assert!(matches!(restrict_normalize(&d, 2, 3), Err(Error::EmptyRestriction)));
}

#[test]
fn lq_needs_q_above_one() {
    let d = DyadicMeasure::uniform(Geometry::Circle, 4).unwrap();
    assert!(lq_norm(&d, 0.5).is_err());
}
