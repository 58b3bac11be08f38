mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use gdnn_core::admissibility::theta;
use gdnn_core::grad::{bce_with_logits, sigmoid};
use gdnn_core::named::named_group;
use gdnn_core::{Admission, ElemSet, Mat, Model, SignedPerm};

fn signed_perm(n: usize) -> impl Strategy<Value = SignedPerm> {
    (Just((0..n as u32).collect::<Vec<u32>>()).prop_shuffle(), prop::collection::vec(prop::bool::ANY, n))
        .prop_map(|(p, s)| SignedPerm::new(p, s.into_iter().map(|b| if b { 1 } else { -1 }).collect()).unwrap())
}

fn two_perms() -> impl Strategy<Value = (SignedPerm, SignedPerm, SignedPerm)> {
    (1usize..9).prop_flat_map(|n| (signed_perm(n), signed_perm(n), signed_perm(n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn compose_is_associative_with_inverses((a, b, c) in two_perms()) {
        prop_assert_eq!(a.compose(&b).compose(&c), a.compose(&b.compose(&c)));
        prop_assert!(a.compose(&a.inverse()).is_identity());
        prop_assert!(a.inverse().compose(&a).is_identity());
    }

    #[test]
    fn compose_matches_dense_product((a, b, _c) in two_perms()) {
        let (da, db) = (Mat::from_signed(&a), Mat::from_signed(&b));
        prop_assert_eq!(Mat::from_signed(&a.compose(&b)), da.mul(&db));
    }

    #[test]
    fn unravel_and_channels_are_homomorphisms((a, b, _c) in two_perms(), k in 1usize..4) {
        prop_assert_eq!(a.compose(&b).unravel(), a.unravel().compose(&b.unravel()));
        prop_assert_eq!(a.compose(&b).with_channels(k), a.with_channels(k).compose(&b.with_channels(k)));
        prop_assert!(a.unravel().is_unsigned());
    }

    #[test]
    fn apply_matches_dense((a, _b, _c) in two_perms(), seed in 0u64..1000) {
        let mut rng = common::rng(seed);
        let x = common::random_inputs(1, a.degree(), &mut rng).remove(0);
        prop_assert_eq!(a.apply(&x), Mat::from_signed(&a).matvec(&x));
        prop_assert_eq!(a.apply_channels(&x, 1), a.apply(&x));
    }

    #[test]
    fn elemset_matches_btreeset(xs in prop::collection::vec(0usize..512, 0..40), ys in prop::collection::vec(0usize..512, 0..40)) {
        let (a, b) = (ElemSet::from_indices(xs.iter().copied()), ElemSet::from_indices(ys.iter().copied()));
        let (sa, sb): (BTreeSet<usize>, BTreeSet<usize>) = (xs.iter().copied().collect(), ys.iter().copied().collect());
        prop_assert_eq!(a.and(&b).to_vec(), sa.intersection(&sb).copied().collect::<Vec<_>>());
        prop_assert_eq!(a.or(&b).to_vec(), sa.union(&sb).copied().collect::<Vec<_>>());
        prop_assert_eq!(a.minus(&b).to_vec(), sa.difference(&sb).copied().collect::<Vec<_>>());
        prop_assert_eq!(a.len(), sa.len());
        prop_assert_eq!(a.is_subset(&b), sa.is_subset(&sb));
        prop_assert_eq!(a.first(), sa.iter().next().copied());
    }

    #[test]
    fn bce_is_stable(f in -60.0f64..60.0, y in prop::bool::ANY) {
        let y = if y { 1.0 } else { 0.0 };
        let p = sigmoid(f);
        let naive = -(y * p.max(1e-300).ln() + (1.0 - y) * (1.0 - p).max(1e-300).ln());
        let l = bce_with_logits(f, y);
        prop_assert!(l >= 0.0);
        if f.abs() < 15.0 {
            prop_assert!((l - naive).abs() <= 1e-9 * naive.max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn theta_matches_oracle_on_random_d4_and_q8_triples(gi in 0usize..2, pi in 0usize..64, ji in 0usize..64) {
        let g = named_group(["D4", "Q8"][gi]).unwrap();
        let pairs = g.subgroup_pairs();
        let pair = &pairs[pi % pairs.len()];
        let j = &g.subgroups()[ji % g.subgroups().len()];
        prop_assert_eq!(theta(&g, pair, j).unwrap(), common::theta_oracle(&g, pair, j));
    }

    #[test]
    fn random_z6_and_d4_models_are_invariant(seed in 0u64..10_000, gi in 0usize..2, bn in prop::bool::ANY) {
        let calc = common::calc(["Z6", "D4_deg4"][gi]);
        let mut rng = common::rng(seed);
        let arch = common::random_architecture(&calc, &mut rng, 1 + (seed % 2) as usize, bn, 8);
        let model = Model::compile_with(&arch, Admission::Strict, &calc).unwrap();
        let w = common::random_weights(&model, seed);
        let xs = common::random_inputs(8, model.input_width(), &mut rng);
        prop_assert!(model.invariance_deviation(&w, &xs).unwrap() <= 1e-9);
    }

    #[test]
    fn admissible_prefixes_extend_admissibly(seed in 0u64..10_000) {
        let calc = common::calc("D4");
        let mut rng = common::rng(seed);
        let arch = common::random_architecture(&calc, &mut rng, 1, false, 8);
        let pairs = arch.pairs();
        let report = calc.is_admissible(&pairs[..pairs.len() - 1]).unwrap();
        prop_assert!(report.admissible);
        for cand in calc.admissible_next(&pairs[..pairs.len() - 1], false).unwrap() {
            prop_assert!(cand.admissible);
            prop_assert_eq!(cand.phi, cand.pair.1);
        }
    }
}
