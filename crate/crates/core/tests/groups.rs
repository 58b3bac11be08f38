mod common;

use std::collections::BTreeSet;

use gdnn_core::group::GroupJson;
use gdnn_core::named::{named_group, NAMES};
use gdnn_core::{ElemSet, Group, SubgroupPair};

fn closed(g: &Group, s: &ElemSet) -> bool {
    s.contains(0) && s.iter().all(|a| s.iter().all(|b| s.contains(g.mul(a, b))))
}

#[test]
fn group_axioms_hold_for_named_groups() {
    for name in ["Z6", "C8", "C2xC4", "C2^3", "D4", "Q8", "D4_deg4", "Icosahedral", "BinProd8"] {
        let g = named_group(name).unwrap();
        let n = g.order();
        assert!(g.element(0).is_identity(), "{name}: identity first");
        for a in 0..n {
            assert_eq!(g.mul(a, g.inv(a)), 0);
            assert_eq!(g.mul(0, a), a);
            // the table agrees with matrix products
            for b in 0..n {
                let p = g.element(a).compose(g.element(b));
                assert_eq!(g.index_of(&p), Some(g.mul(a, b)));
            }
        }
        for a in (0..n).step_by(3) {
            for b in (0..n).step_by(5) {
                for c in (0..n).step_by(7) {
                    assert_eq!(g.mul(g.mul(a, b), c), g.mul(a, g.mul(b, c)));
                }
            }
        }
    }
}

#[test]
fn named_group_orders() {
    let expected = [
        ("C8", 8),
        ("C2xC4", 8),
        ("C2^3", 8),
        ("D4", 8),
        ("Q8", 8),
        ("Z6", 6),
        ("Icosahedral", 60),
        ("IcosahedralMesh", 60),
        ("BinProd8", 8),
        ("BinProd16", 128),
    ];
    for (name, order) in expected {
        assert_eq!(named_group(name).unwrap().order(), order, "{name}");
    }
    assert!(NAMES.iter().all(|n| named_group(n).is_ok()));
    assert!(named_group("nope").is_err());
    assert_eq!(named_group("binprod(16)").unwrap().order(), 128);
}

#[test]
fn subgroup_lattice_matches_exhaustive_search() {
    // every subset of a small group, kept when closed
    for name in ["Z6", "Q8", "D4_deg4", "C2^3"] {
        let g = named_group(name).unwrap();
        let n = g.order();
        let mut brute = BTreeSet::new();
        for mask in 0u32..(1 << n) {
            let s = ElemSet::from_indices((0..n).filter(|i| mask >> i & 1 == 1));
            if closed(&g, &s) {
                brute.insert(s);
            }
        }
        let lattice: BTreeSet<ElemSet> = g.subgroups().iter().copied().collect();
        assert_eq!(lattice, brute, "{name}");
    }
}

#[test]
fn subgroup_counts() {
    assert_eq!(named_group("Z6").unwrap().subgroups().len(), 4);
    assert_eq!(named_group("Q8").unwrap().subgroups().len(), 6);
    assert_eq!(named_group("Icosahedral").unwrap().subgroups().len(), 59);
    assert_eq!(named_group("D4").unwrap().subgroups().len(), 10);
    assert_eq!(named_group("C2^3").unwrap().subgroups().len(), 16);
}

#[test]
fn z6_pairs() {
    let g = named_group("Z6").unwrap();
    let pairs = g.subgroup_pairs();
    let type2 = pairs.iter().filter(|p| p.is_type2()).count();
    // H ∈ {1, C2, C3, C6}; index-2 subgroups only inside C2 and C6
    assert_eq!(pairs.len(), 6);
    assert_eq!(type2, 2);
    assert_eq!(g.pair_classes().len(), 6);
}

#[test]
fn pair_classes_match_brute_force_conjugacy() {
    for name in ["D4", "Q8", "D4_deg4", "Icosahedral"] {
        let g = named_group(name).unwrap();
        let pairs = common::all_pairs(&g);
        let mut classes: Vec<Vec<SubgroupPair>> = Vec::new();
        for p in &pairs {
            match classes.iter_mut().find(|c| (0..g.order()).any(|x| g.conjugate_pair(x, &c[0]) == *p)) {
                Some(c) => c.push(*p),
                None => classes.push(vec![*p]),
            }
        }
        assert_eq!(g.pair_classes().len(), classes.len(), "{name}");
        let mut sizes: Vec<usize> = classes.iter().map(|c| c.len()).collect();
        let mut got: Vec<usize> = g.pair_classes().iter().map(|c| c.size).collect();
        sizes.sort();
        got.sort();
        assert_eq!(sizes, got, "{name}");
        for p in &pairs {
            let ci = g.class_of_pair(p).unwrap();
            assert!(g.pair_conjugator(&g.pair_classes()[ci].rep, p).is_some());
        }
    }
}

#[test]
fn projections_are_idempotent_and_symmetric() {
    for name in ["Z6", "D4", "Icosahedral"] {
        let g = named_group(name).unwrap();
        for s in g.subgroups().iter().step_by(3) {
            let p = g.projection(s);
            assert_eq!(p.mul(&p), p, "{name}");
            assert_eq!(p.transpose(), p, "{name}");
            assert!(g.projection_nonzero(s));
        }
    }
}

#[test]
fn double_cosets_partition_the_cosets() {
    let g = named_group("Icosahedral").unwrap();
    let subs = g.subgroups();
    for k in subs.iter().step_by(7) {
        for j in subs.iter().step_by(11) {
            let (cos, blocks) = g.double_cosets(k, j);
            let mut seen = vec![0usize; cos.len()];
            for b in &blocks {
                for &c in &b.cosets {
                    seen[c] += 1;
                }
                // K x J as a set of elements equals the union of its cosets
                let kxj: BTreeSet<usize> =
                    k.iter().flat_map(|a| j.iter().map(move |b2| (a, b2))).map(|(a, b2)| g.mul(g.mul(a, b.rep), b2)).collect();
                let union: BTreeSet<usize> =
                    b.cosets.iter().flat_map(|&c| j.iter().map(move |y| (c, y))).map(|(c, y)| g.mul(cos.reps[c], y)).collect();
                assert_eq!(kxj, union);
            }
            assert!(seen.iter().all(|&s| s == 1));
        }
    }
}

#[test]
fn partition_stabilizer_of_singletons_is_the_core() {
    let g = named_group("D4").unwrap();
    for j in g.subgroups() {
        let cos = g.left_cosets(j);
        let singletons: Vec<Vec<usize>> = (0..cos.len()).map(|c| vec![c]).collect();
        let stab = g.partition_stabilizer(&cos, &singletons).unwrap();
        // kernel of the coset action: intersection of all conjugates of J
        let core = (0..g.order()).fold(g.full(), |acc, x| acc.and(&g.conjugate(x, j)));
        assert_eq!(stab, core);
    }
    let cos = g.left_cosets(&g.trivial());
    assert!(g.partition_stabilizer(&cos, &[vec![0]]).is_err());
}

#[test]
fn group_json_round_trip() {
    for name in ["D4", "Icosahedral", "BinProd8"] {
        let g = named_group(name).unwrap();
        let text = serde_json::to_string(&g.to_json()).unwrap();
        let back = Group::from_json(&serde_json::from_str::<GroupJson>(&text).unwrap()).unwrap();
        assert_eq!(back.order(), g.order());
        assert_eq!(back.degree(), g.degree());
        assert!(g.elements().iter().all(|e| back.index_of(e).is_some()));
    }
}

#[test]
fn signed_generators_close_into_a_group() {
    let json = r#"{"degree": 2, "generators": [[[2, 1], [1, -1]]]}"#;
    let g = Group::from_json(&serde_json::from_str(json).unwrap()).unwrap();
    // a quarter turn
    assert_eq!(g.order(), 4);
    assert!(g.elements().iter().any(|e| !e.is_unsigned()));
}

#[test]
fn invalid_pairs_are_rejected() {
    let g = named_group("Z6").unwrap();
    assert_eq!(g.generate(&[g.generators()[0]]).len(), 6);
    let full = g.full();
    assert!(SubgroupPair::new(g.trivial(), full).is_err());
    let c2 = *g.subgroups().iter().find(|s| s.len() == 2).unwrap();
    let c3 = *g.subgroups().iter().find(|s| s.len() == 3).unwrap();
    assert!(SubgroupPair::new(full, c2).is_err());
    assert!(SubgroupPair::new(full, c3).unwrap().is_type2());
}
