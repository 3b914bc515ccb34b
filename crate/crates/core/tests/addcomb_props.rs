mod common;

use fractal_lq::addcomb::{
    additive_energy, additive_energy_direct, branching, center, doubling, extract_uniform, inverse_witness, is_centered,
    q_to_2_check, representation_counts, sumset, DyadicSet,
};
use fractal_lq::dyadic_measure::{convolve, lq_norm, DyadicMeasure, Geometry};
use proptest::prelude::*;

fn set(max_m: u32, max_len: usize) -> impl Strategy<Value = DyadicSet> {
    (2..=max_m).prop_flat_map(move |m| {
        prop::collection::vec(0..1i64 << m, 1..max_len).prop_map(move |v| DyadicSet::new(m, v).unwrap())
    })
}

fn pair(max_m: u32, max_len: usize) -> impl Strategy<Value = (DyadicSet, DyadicSet)> {
    (2..=max_m).prop_flat_map(move |m| {
        let s = prop::collection::vec(0..1i64 << m, 1..max_len);
        (s.clone(), s).prop_map(move |(a, b)| (DyadicSet::new(m, a).unwrap(), DyadicSet::new(m, b).unwrap()))
    })
}

/// Counting measure of the set: unit mass per point, not normalised.
fn counting(a: &DyadicSet) -> DyadicMeasure {
    DyadicMeasure::from_entries(Geometry::Line, a.scale_m(), a.indices().iter().map(|&k| (k, 1.0)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_is_l2_norm_of_convolution((a, b) in pair(10, 80)) {
        let e = additive_energy(&a, &b).unwrap();
        let conv = convolve(&counting(&a), &counting(&b), Geometry::Line).unwrap();
        let l2 = lq_norm(&conv, 2.0).unwrap();
        prop_assert_eq!(l2.round() as u128, e);
        prop_assert!((l2 - e as f64).abs() < 1e-6);
    }

    #[test]
    fn energy_bounds((a, b) in pair(10, 80)) {
        let e = additive_energy_direct(&a, &b).unwrap();
        let (na, nb) = (a.len() as u128, b.len() as u128);
        prop_assert!(e >= na * nb);
        prop_assert!(e <= (na * na * nb).min(na * nb * nb));
        let r = representation_counts(&a, &b);
        prop_assert_eq!(r.values().sum::<u64>() as u128, na * nb);
    }

    #[test]
    fn sumset_size_bounds((a, b) in pair(12, 60)) {
        let s = sumset(&a, &b, Geometry::Line).unwrap();
        let (na, nb) = (a.len(), b.len());
        prop_assert!(s.len() + 1 >= na + nb);
        prop_assert!(s.len() <= na * nb);
        for &x in a.indices() {
            for &y in b.indices() {
                prop_assert!(s.contains(x + y));
            }
        }
        let c = sumset(&a, &b, Geometry::Circle).unwrap();
        prop_assert!(c.len() <= s.len());
        prop_assert!(c.indices().iter().all(|&k| (0..1i64 << a.scale_m()).contains(&k)));
    }

    #[test]
    fn doubling_bounds(a in set(12, 60)) {
        let k = doubling(&a).unwrap();
        let n = a.len() as f64;
        prop_assert!(k >= (2.0 * n - 1.0) / n - 1e-12);
        prop_assert!(k <= (n + 1.0) / 2.0 + 1e-12);
    }

    #[test]
    fn q_to_2_transfer_holds((a, b) in pair(10, 60), q in 1.1f64..6.0) {
        let rep = q_to_2_check(&a, &b, q).unwrap();
        prop_assert!(rep.passes, "energy 2^{} below 2^{}", (rep.energy as f64).log2(), rep.rhs_log2);
        prop_assert!(rep.kappa >= -1e-12);
    }

    #[test]
    fn regularization_keeps_a_subset(a in set(12, 400), d in 2u32..4) {
        prop_assume!(a.scale_m() % d == 0);
        let u = extract_uniform(&a, d).unwrap();
        prop_assert!(u.indices().iter().all(|&k| a.contains(k)));
        prop_assert!(branching(&u, d).unwrap().is_uniform());
        let c = center(&a, d).unwrap();
        prop_assert!(c.subset.indices().iter().all(|&k| a.contains(k)));
        prop_assert!(is_centered(&c.subset, c.translation, d).unwrap());
    }
}

#[test]
fn branching_of_digit_set_is_uniform() {
    let a = DyadicSet::from_digits(2, &[vec![0, 3], vec![1, 2, 3], vec![0]]).unwrap();
    let p = branching(&a, 2).unwrap();
    assert_eq!(p.counts(), Some(vec![2, 3, 1]));
    assert_eq!(a.len(), 6);
}

#[test]
fn branching_needs_d_dividing_m() {
    let a = DyadicSet::full(5).unwrap();
    assert!(branching(&a, 2).is_err());
}

#[test]
fn witness_on_full_grid() {
    // Uniform measures on the full grid: one level set, full branching.
    let mu = DyadicMeasure::uniform(Geometry::Circle, 12).unwrap();
    let rep = inverse_witness(&mu, &mu, 2.0, 2, 0.5).unwrap();
    assert!(!rep.full_branching.is_empty());
    assert!(rep.clauses.iter().all(|c| c.passes), "{:?}", rep.clauses);
    assert!(rep.clause("v").is_some());
}
