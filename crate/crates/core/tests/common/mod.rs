#![allow(dead_code)]

use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gdnn_core::admissibility::Calculus;
use gdnn_core::arch::{ArchitectureSpec, GroupRef};
use gdnn_core::model::TensorKind;
use gdnn_core::reps::{check_orthogonality, equivalent, fixed_space_projector, Irrep};
use gdnn_core::{Architecture, ElemSet, Group, LatentWeights, Model, Subgroup, SubgroupPair};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `{g : g·(xJ) = (gx)J}` acting on `G/J`, found by brute force over element pairs.
fn coset_ids(g: &Group, j: &Subgroup) -> (Vec<usize>, usize) {
    let n = g.order();
    let mut id = vec![usize::MAX; n];
    let mut next = 0;
    for x in 0..n {
        if id[x] != usize::MAX {
            continue;
        }
        for (y, slot) in id.iter_mut().enumerate() {
            // y ∈ xJ  ⇔  x⁻¹y ∈ J
            if j.contains(g.mul(g.inv(x), y)) {
                *slot = next;
            }
        }
        next += 1;
    }
    (id, next)
}

/// The defining θ: stabilizer of `P_K − (|H:K|−1) P_H` under the permutation action on `G/J`,
/// with projections averaged over the group elements in exact rationals.
pub fn theta_oracle(g: &Group, pair: &SubgroupPair, j: &Subgroup) -> Subgroup {
    let (id, nc) = coset_ids(g, j);
    let reps: Vec<usize> = (0..nc).map(|c| id.iter().position(|&x| x == c).unwrap()).collect();
    let act = |el: usize, c: usize| id[g.mul(el, reps[c])];
    let projection = |s: &Subgroup| {
        let mut p = vec![BigRational::zero(); nc * nc];
        let w = BigRational::new(BigInt::from(1), BigInt::from(s.len()));
        for el in s.iter() {
            for c in 0..nc {
                p[act(el, c) * nc + c] += &w;
            }
        }
        p
    };
    let mut m = projection(&pair.k);
    if pair.is_type2() {
        for (a, b) in m.iter_mut().zip(projection(&pair.h)) {
            *a -= b;
        }
    }
    let mut out = ElemSet::empty();
    for el in 0..g.order() {
        let fixed = (0..nc).all(|r| (0..nc).all(|c| m[act(el, r) * nc + c] == m[r * nc + c]));
        if fixed {
            out.insert(el);
        }
    }
    out
}

/// A random subgroup pair: `H` generated by up to three random elements, `K` either `H`
/// or a random index-two subgroup when one is found.
pub fn random_pair(g: &Group, rng: &mut ChaCha8Rng) -> SubgroupPair {
    let n = g.order();
    let gens: Vec<usize> = (0..rng.random_range(0..=3)).map(|_| rng.random_range(0..n)).collect();
    let h = g.generate(&gens);
    if rng.random_bool(0.5) && h.len().is_multiple_of(2) {
        let els = h.to_vec();
        for _ in 0..40 {
            let kg: Vec<usize> = (0..rng.random_range(1..=3)).map(|_| *els.choose(rng).unwrap()).collect();
            let k = g.generate(&kg);
            if 2 * k.len() == h.len() {
                return SubgroupPair::new(h, k).unwrap();
            }
        }
    }
    SubgroupPair::new(h, h).unwrap()
}

/// A random admissible architecture with 1–2 hidden layers of 1–2 irreps each.
pub fn random_architecture(
    calc: &Calculus,
    rng: &mut ChaCha8Rng,
    channels: usize,
    batchnorm: bool,
    max_degree: usize,
) -> Architecture {
    let g = calc.group().clone();
    let hidden = rng.random_range(1..=2);
    let mut layers: Vec<Vec<(SubgroupPair, usize)>> = Vec::new();
    for _ in 0..hidden {
        let prefix: Vec<Vec<SubgroupPair>> = layers.iter().map(|l| l.iter().map(|x| x.0).collect()).collect();
        let want = rng.random_range(1..=2);
        let mut layer: Vec<(SubgroupPair, usize)> = Vec::new();
        for _ in 0..400 {
            if layer.len() == want {
                break;
            }
            let p = random_pair(&g, rng);
            if g.order() / p.h.len() > max_degree {
                continue;
            }
            if calc.phi(&prefix, &p).unwrap() != p.k {
                continue;
            }
            if prefix.is_empty() && !calc.is_admissible(&[vec![p]]).unwrap().admissible {
                continue;
            }
            let irrep = Irrep::new(&g, p).unwrap();
            if layer.iter().any(|(q, _)| equivalent(&g, &Irrep::new(&g, *q).unwrap(), &irrep)) {
                continue;
            }
            layer.push((p, rng.random_range(1..=2)));
        }
        assert!(!layer.is_empty(), "no admissible irrep found for {}", g.name());
        layers.push(layer);
    }
    let full = g.full();
    layers.push(vec![(SubgroupPair::new(full, full).unwrap(), 1)]);
    let spec = ArchitectureSpec::from_pairs(GroupRef::Name(g.name().to_string()), &layers, channels, batchnorm);
    Architecture::resolve_in(&spec, g).unwrap()
}

/// Normal coefficients plus random biases and batchnorm affine parameters.
pub fn random_weights(model: &Model, seed: u64) -> LatentWeights {
    let mut w = model.init_weights(seed, "normal").unwrap();
    let mut r = rng(seed ^ 0x5eed);
    for t in &model.tensors {
        let range = t.offset..t.offset + t.len();
        match t.kind {
            TensorKind::Coef => {}
            TensorKind::Bias | TensorKind::Beta => w.params[range].iter_mut().for_each(|v| *v = r.random_range(-0.5..0.5)),
            TensorKind::Gamma => w.params[range].iter_mut().for_each(|v| *v = r.random_range(0.5..1.5)),
        }
    }
    for v in &mut w.bn_mean {
        *v = r.random_range(-0.2..0.2);
    }
    for v in &mut w.bn_var {
        *v = r.random_range(0.5..2.0);
    }
    w
}

pub fn random_inputs(n: usize, width: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..width).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

pub fn shared(name: &str) -> Arc<Group> {
    gdnn_core::named::shared(name).unwrap()
}

pub fn calc(name: &str) -> Calculus {
    Calculus::with_cache_dir(shared(name), None)
}

/// All subgroup pairs, found by checking every subgroup against every subgroup.
pub fn all_pairs(g: &Group) -> Vec<SubgroupPair> {
    let subs = g.subgroups();
    let mut out = Vec::new();
    for h in subs {
        for k in subs {
            if k.is_subset(h) && (k.len() == h.len() || 2 * k.len() == h.len()) {
                out.push(SubgroupPair::new(*h, *k).unwrap());
            }
        }
    }
    out
}

pub fn first_fixed_vector(g: &Group, pair: &SubgroupPair) -> Option<Vec<BigRational>> {
    let m = fixed_space_projector(g, pair);
    (0..m.cols()).map(|c| (0..m.rows()).map(|r| m.get(r, c).clone()).collect::<Vec<_>>()).find(|v| v.iter().any(|x| !x.is_zero()))
}

/// `H` and its index-two subgroups, for `H` elementary abelian: kernels of the sign characters.
pub fn elementary_pairs(g: &Group, h: &gdnn_core::ElemSet) -> Vec<gdnn_core::ElemSet> {
    let mut basis: Vec<usize> = Vec::new();
    for x in h.iter() {
        if !g.generate(&basis).contains(x) {
            basis.push(x);
        }
    }
    let mut out = vec![*h];
    for mask in 1u32..(1 << basis.len()) {
        let mut sign = vec![0i8; g.order()];
        sign[0] = 1;
        let mut frontier = vec![0usize];
        while let Some(y) = frontier.pop() {
            for (i, &b) in basis.iter().enumerate() {
                let z = g.mul(y, b);
                if sign[z] == 0 {
                    sign[z] = if mask >> i & 1 == 1 { -sign[y] } else { sign[y] };
                    frontier.push(z);
                }
            }
        }
        out.push(gdnn_core::ElemSet::from_indices(h.iter().filter(|&y| sign[y] == 1)));
    }
    out
}

pub fn orthogonality_over(g: &Group, hs: &[gdnn_core::ElemSet], ks: impl Fn(&gdnn_core::ElemSet) -> Vec<gdnn_core::ElemSet>) -> usize {
    let mut checked = 0;
    for h in hs {
        let reps: Vec<Irrep> = ks(h).iter().map(|k| Irrep::new(g, SubgroupPair::new(*h, *k).unwrap()).unwrap()).collect();
        for (i, a) in reps.iter().enumerate() {
            for b in &reps[i + 1..] {
                if equivalent(g, a, b) {
                    continue;
                }
                let (Some(w1), Some(w2)) = (first_fixed_vector(g, a.pair()), first_fixed_vector(g, b.pair())) else {
                    continue;
                };
                assert!(check_orthogonality(g, a, b, &w1, &w2).unwrap(), "{:?} {:?}", a.pair(), b.pair());
                checked += 1;
            }
        }
    }
    checked
}


/// Every subgroup generated by at most two elements.
pub fn two_generated_subgroups(g: &Group) -> Vec<Subgroup> {
    let mut out: Vec<Subgroup> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for a in 0..g.order() {
        for b in a..g.order() {
            let s = g.generate(&[a, b]);
            if seen.insert(s) {
                out.push(s);
            }
        }
    }
    out.sort();
    out
}

/// Stabilizer of the first point of a permutation representation, and whether it is transitive.
pub fn point_stabilizer(g: &Group, images: &[gdnn_core::SignedPerm]) -> (ElemSet, bool) {
    let stab = ElemSet::from_indices((0..g.order()).filter(|&x| images[x].image(0) == 0));
    let mut hit = vec![false; images[0].degree()];
    for im in images {
        hit[im.image(0)] = true;
    }
    (stab, hit.iter().all(|&h| h))
}

pub fn conjugate_subgroups(g: &Group, a: &ElemSet, b: &ElemSet) -> bool {
    (0..g.order()).any(|x| g.conjugate(x, a) == *b)
}

fn trace(p: &gdnn_core::SignedPerm) -> i64 {
    (0..p.degree()).filter(|&i| p.image(i) == i).map(|i| i64::from(p.sign(i))).sum()
}

/// `dim Hom(π, ρ) = (1/|G|) Σ_g χ_ρ(g) χ_π(g)` for real orthogonal representations.
pub fn character_dim(rho: &[gdnn_core::SignedPerm], pi: &[gdnn_core::SignedPerm]) -> usize {
    let s: i64 = rho.iter().zip(pi).map(|(r, p)| trace(r) * trace(p)).sum();
    assert_eq!(s % rho.len() as i64, 0);
    (s / rho.len() as i64) as usize
}

/// Every (output irrep, input summand) block of a model against both oracles, over the full group.
pub fn check_model_blocks(model: &Model) -> usize {
    let g = model.group();
    let mut checked = 0;
    for (li, layer) in model.layers.iter().enumerate() {
        for (a, slot) in layer.slots.iter().enumerate() {
            let rho = slot.irrep.images();
            for j in 0..=li {
                for (b, src) in model.segments[j].slots.iter().enumerate() {
                    let pi = &src.pi;
                    let want = character_dim(rho, pi);
                    if slot.degree() * src.degree <= 400 {
                        let gens: Vec<usize> = (0..g.order()).collect();
                        let r: Vec<gdnn_core::SignedPerm> = gens.iter().map(|&x| rho[x].clone()).collect();
                        let p: Vec<gdnn_core::SignedPerm> = gens.iter().map(|&x| pi[x].clone()).collect();
                        assert_eq!(gdnn_core::basis::oracle_basis_dim(&r, &p, slot.degree(), src.degree, 400).unwrap(), want);
                    }
                    match layer.blocks.iter().find(|bl| bl.slot == a && bl.seg == j && bl.src == b) {
                        Some(block) => {
                            assert!(gdnn_core::basis::verify_basis(&block.basis, rho, pi), "layer {li} block {a}.{j}.{b}");
                            assert_eq!(block.basis.len(), want, "layer {li} block {a}.{j}.{b}");
                        }
                        None => assert_eq!(want, 0, "layer {li} block {a}.{j}.{b} was dropped"),
                    }
                    checked += 1;
                }
            }
        }
    }
    checked
}
