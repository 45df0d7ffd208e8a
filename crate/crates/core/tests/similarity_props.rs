use std::collections::BTreeMap;

use proptest::prelude::*;

use placerec::vocabulary::{similarity, VisualVector};

fn sparse(max_word: u32, max_len: usize) -> impl Strategy<Value = VisualVector> {
    prop::collection::vec((0..max_word, 1e-3f64..1.0), 1..max_len)
        .prop_map(|w| VisualVector::from_weights(w).unwrap())
}

/// Reference value from the dense `2 * sum(min)` form.
fn twice_min(a: &VisualVector, b: &VisualVector) -> f64 {
    let mut dense: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
    for &(w, v) in a.entries() {
        dense.entry(w).or_default().0 = v;
    }
    for &(w, v) in b.entries() {
        dense.entry(w).or_default().1 = v;
    }
    2.0 * dense.values().map(|(x, y)| x.min(*y)).sum::<f64>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn symmetric(a in sparse(200, 40), b in sparse(200, 40)) {
        prop_assert_eq!(similarity(&a, &b), similarity(&b, &a));
    }

    #[test]
    fn self_similarity_is_two(a in sparse(5000, 200)) {
        prop_assert!((similarity(&a, &a) - 2.0).abs() <= 1e-9);
    }

    #[test]
    fn matches_min_identity(a in sparse(100, 60), b in sparse(100, 60)) {
        let s = similarity(&a, &b);
        prop_assert!((s - twice_min(&a, &b)).abs() <= 1e-12);
        prop_assert!((-1e-12..=2.0 + 1e-12).contains(&s));
    }

    #[test]
    fn disjoint_support_scores_zero(a in sparse(500, 30), b in sparse(500, 30)) {
        let b = VisualVector::from_weights(b.entries().iter().map(|&(w, v)| (w + 500, v))).unwrap();
        prop_assert_eq!(similarity(&a, &b), 0.0);
    }

    #[test]
    fn unit_l1_norm(a in sparse(1000, 100)) {
        prop_assert!((a.l1_norm() - 1.0).abs() < 1e-12);
        prop_assert!(a.entries().windows(2).all(|w| w[0].0 < w[1].0));
    }
}

#[test]
fn empty_vector_scores_zero() {
    let a = VisualVector::from_weights([(1, 1.0), (4, 3.0)]).unwrap();
    assert_eq!(similarity(&a, &VisualVector::empty()), 0.0);
    assert_eq!(similarity(&VisualVector::empty(), &VisualVector::empty()), 0.0);
}
