use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::bits::{ElemSet, MAX_ELEMENTS};
use crate::error::{Error, Result};
use crate::perm::SignedPerm;
use crate::rational::RationalMatrix;

pub type Subgroup = ElemSet;

/// `(H, K)` with `K ≤ H` and `|H:K| ≤ 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubgroupPair {
    pub h: Subgroup,
    pub k: Subgroup,
}

impl SubgroupPair {
    pub fn new(h: Subgroup, k: Subgroup) -> Result<Self> {
        if !k.is_subset(&h) || k.is_empty() {
            return Err(Error::InvalidPair("K is not contained in H".into()));
        }
        let (nh, nk) = (h.len(), k.len());
        if nh != nk && nh != 2 * nk {
            return Err(Error::InvalidPair(format!("|H:K| = {nh}/{nk} is not 1 or 2")));
        }
        Ok(SubgroupPair { h, k })
    }

    pub fn index(&self) -> usize {
        self.h.len() / self.k.len()
    }

    pub fn is_type2(&self) -> bool {
        self.index() == 2
    }
}

/// A simultaneous-conjugacy class of subgroup pairs.
#[derive(Clone, Debug)]
pub struct PairClass {
    pub rep: SubgroupPair,
    /// Number of pairs in the class.
    pub size: usize,
    /// Number of conjugates of `H`.
    pub h_class_size: usize,
}

impl PairClass {
    /// Number of `N_G(H)`-conjugates of `K` inside `H`.
    pub fn k_multiplicity(&self) -> usize {
        self.size / self.h_class_size
    }
}

/// Left cosets `xJ`, numbered in order of their smallest element.
#[derive(Clone, Debug)]
pub struct Cosets {
    pub reps: Vec<usize>,
    pub of: Vec<u32>,
}

impl Cosets {
    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DoubleCoset {
    pub rep: usize,
    /// Indices of the left cosets of `J` it contains, ascending.
    pub cosets: Vec<usize>,
}

pub struct Group {
    name: String,
    degree: usize,
    elements: Vec<SignedPerm>,
    lookup: HashMap<SignedPerm, usize>,
    generators: Vec<usize>,
    mul: Vec<u16>,
    inv: Vec<u16>,
    lattice: OnceLock<Vec<Subgroup>>,
    classes: OnceLock<(Vec<PairClass>, HashMap<SubgroupPair, usize>)>,
}

impl fmt::Debug for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Group")
            .field("name", &self.name)
            .field("degree", &self.degree)
            .field("order", &self.order())
            .finish()
    }
}

impl Group {
    pub fn from_generators(degree: usize, gens: &[SignedPerm]) -> Result<Group> {
        Self::from_generators_capped(degree, gens, MAX_ELEMENTS)
    }

    /// Closure by breadth-first search from the identity, applying generators on the left in order.
    pub fn from_generators_capped(degree: usize, gens: &[SignedPerm], cap: usize) -> Result<Group> {
        let cap = cap.min(MAX_ELEMENTS);
        for g in gens {
            if g.degree() != degree {
                return Err(Error::DegreeMismatch { expected: degree, got: g.degree() });
            }
        }
        let id = SignedPerm::identity(degree);
        let mut elements = vec![id.clone()];
        let mut lookup = HashMap::new();
        lookup.insert(id, 0usize);
        let mut head = 0;
        while head < elements.len() {
            for g in gens {
                let y = g.compose(&elements[head]);
                if !lookup.contains_key(&y) {
                    if elements.len() >= cap {
                        return Err(Error::CapExceeded(cap));
                    }
                    lookup.insert(y.clone(), elements.len());
                    elements.push(y);
                }
            }
            head += 1;
        }
        let n = elements.len();
        let mut mul = vec![0u16; n * n];
        for a in 0..n {
            for b in 0..n {
                mul[a * n + b] = lookup[&elements[a].compose(&elements[b])] as u16;
            }
        }
        let inv = elements.iter().map(|e| lookup[&e.inverse()] as u16).collect();
        let generators = gens.iter().map(|g| lookup[g]).collect();
        Ok(Group {
            name: String::new(),
            degree,
            elements,
            lookup,
            generators,
            mul,
            inv,
            lattice: OnceLock::new(),
            classes: OnceLock::new(),
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[SignedPerm] {
        &self.elements
    }

    pub fn element(&self, i: usize) -> &SignedPerm {
        &self.elements[i]
    }

    pub fn generators(&self) -> &[usize] {
        &self.generators
    }

    pub fn index_of(&self, g: &SignedPerm) -> Option<usize> {
        self.lookup.get(g).copied()
    }

    #[inline]
    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.mul[a * self.order() + b] as usize
    }

    #[inline]
    pub fn inv(&self, a: usize) -> usize {
        self.inv[a] as usize
    }

    pub fn full(&self) -> Subgroup {
        ElemSet::full(self.order())
    }

    pub fn trivial(&self) -> Subgroup {
        ElemSet::from_indices([0])
    }

    pub fn is_subgroup(&self, s: &ElemSet) -> bool {
        if !s.contains(0) {
            return false;
        }
        let v = s.to_vec();
        v.iter().all(|&a| v.iter().all(|&b| s.contains(self.mul(a, b))))
    }

    /// Subgroup generated by the given element indices.
    pub fn generate(&self, gens: &[usize]) -> Subgroup {
        let mut set = ElemSet::from_indices([0]);
        let mut queue = VecDeque::from([0usize]);
        while let Some(a) = queue.pop_front() {
            for &g in gens {
                let c = self.mul(g, a);
                if !set.contains(c) {
                    set.insert(c);
                    queue.push_back(c);
                }
            }
        }
        set
    }

    pub fn conjugate(&self, g: usize, s: &ElemSet) -> ElemSet {
        let gi = self.inv(g);
        ElemSet::from_indices(s.iter().map(|x| self.mul(self.mul(g, x), gi)))
    }

    pub fn conjugate_pair(&self, g: usize, p: &SubgroupPair) -> SubgroupPair {
        SubgroupPair { h: self.conjugate(g, &p.h), k: self.conjugate(g, &p.k) }
    }

    /// Some `g` with `g a g⁻¹ = b` simultaneously on both components, by exhaustive search.
    pub fn pair_conjugator(&self, a: &SubgroupPair, b: &SubgroupPair) -> Option<usize> {
        if a.h.len() != b.h.len() || a.k.len() != b.k.len() {
            return None;
        }
        (0..self.order()).find(|&g| self.conjugate_pair(g, a) == *b)
    }

    fn orbit<T: Copy + Eq + std::hash::Hash + Ord>(&self, start: T, act: impl Fn(usize, &T) -> T) -> Vec<T> {
        let mut seen = HashSet::from([start]);
        let mut out = vec![start];
        let mut head = 0;
        while head < out.len() {
            for &g in &self.generators {
                let y = act(g, &out[head]);
                if seen.insert(y) {
                    out.push(y);
                }
            }
            head += 1;
        }
        out
    }

    pub fn conjugacy_class_of_subgroup(&self, s: &Subgroup) -> Vec<Subgroup> {
        let mut v = self.orbit(*s, |g, x| self.conjugate(g, x));
        v.sort();
        v
    }

    pub fn conjugacy_class_of_pair(&self, p: &SubgroupPair) -> Vec<SubgroupPair> {
        let mut v = self.orbit(*p, |g, x| self.conjugate_pair(g, x));
        v.sort();
        v
    }

    /// Every subgroup once, sorted by order then by members. Built from cyclic subgroups by joins.
    pub fn subgroups(&self) -> &[Subgroup] {
        self.lattice.get_or_init(|| self.build_lattice())
    }

    fn build_lattice(&self) -> Vec<Subgroup> {
        let mut gens_of: HashMap<Subgroup, Vec<usize>> = HashMap::new();
        let mut cyclic: Vec<(Subgroup, usize)> = Vec::new();
        for g in 0..self.order() {
            let c = self.generate(&[g]);
            if let std::collections::hash_map::Entry::Vacant(e) = gens_of.entry(c) {
                e.insert(vec![g]);
                cyclic.push((c, g));
            }
        }
        let mut frontier: Vec<Subgroup> = cyclic.iter().map(|c| c.0).collect();
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for a in &frontier {
                for (c, g) in &cyclic {
                    if c.is_subset(a) {
                        continue;
                    }
                    let mut gens = gens_of[a].clone();
                    gens.push(*g);
                    let j = self.generate(&gens);
                    if let std::collections::hash_map::Entry::Vacant(e) = gens_of.entry(j) {
                        e.insert(gens);
                        next.push(j);
                    }
                }
            }
            frontier = next;
        }
        let mut subs: Vec<Subgroup> = gens_of.into_keys().collect();
        subs.sort();
        subs
    }

    /// All pairs `(H, K)` with `K ≤ H`, `|H:K| ≤ 2`, ordered by `H` then `K`.
    pub fn subgroup_pairs(&self) -> Vec<SubgroupPair> {
        let subs = self.subgroups();
        let mut out = Vec::new();
        for h in subs {
            for k in subs {
                if k.is_subset(h) && (h.len() == k.len() || h.len() == 2 * k.len()) {
                    out.push(SubgroupPair { h: *h, k: *k });
                }
            }
        }
        out
    }

    /// Pair classes with canonical (smallest) representatives, sorted by representative.
    pub fn pair_classes(&self) -> &[PairClass] {
        &self.classes.get_or_init(|| self.build_classes()).0
    }

    /// Index into `pair_classes` of the class containing `p`.
    pub fn class_of_pair(&self, p: &SubgroupPair) -> Option<usize> {
        self.classes.get_or_init(|| self.build_classes()).1.get(p).copied()
    }

    fn build_classes(&self) -> (Vec<PairClass>, HashMap<SubgroupPair, usize>) {
        let mut seen: HashSet<SubgroupPair> = HashSet::new();
        let mut classes: Vec<(PairClass, Vec<SubgroupPair>)> = Vec::new();
        for p in self.subgroup_pairs() {
            if seen.contains(&p) {
                continue;
            }
            let orbit = self.conjugacy_class_of_pair(&p);
            seen.extend(orbit.iter().copied());
            let h_class_size = self.conjugacy_class_of_subgroup(&p.h).len();
            classes.push((PairClass { rep: orbit[0], size: orbit.len(), h_class_size }, orbit));
        }
        classes.sort_by_key(|c| c.0.rep);
        let mut lookup = HashMap::new();
        for (i, (_, members)) in classes.iter().enumerate() {
            for m in members {
                lookup.insert(*m, i);
            }
        }
        (classes.into_iter().map(|c| c.0).collect(), lookup)
    }

    pub fn left_cosets(&self, j: &Subgroup) -> Cosets {
        let n = self.order();
        let mut of = vec![u32::MAX; n];
        let mut reps = Vec::new();
        for x in 0..n {
            if of[x] != u32::MAX {
                continue;
            }
            let c = reps.len() as u32;
            for y in j.iter() {
                of[self.mul(x, y)] = c;
            }
            reps.push(x);
        }
        Cosets { reps, of }
    }

    /// Image of coset `c` under left multiplication by `g`.
    #[inline]
    pub fn act_on_coset(&self, cosets: &Cosets, g: usize, c: usize) -> usize {
        cosets.of[self.mul(g, cosets.reps[c])] as usize
    }

    /// The permutation representation on `G/J`, one unsigned permutation per element.
    pub fn coset_action(&self, j: &Subgroup) -> Vec<SignedPerm> {
        let cos = self.left_cosets(j);
        (0..self.order())
            .map(|g| {
                let perm = (0..cos.len()).map(|c| self.act_on_coset(&cos, g, c) as u32).collect();
                SignedPerm::from_perm(perm).expect("coset action is a permutation")
            })
            .collect()
    }

    /// `K\G/J` as a partition of the left cosets of `J`.
    pub fn double_cosets(&self, k: &Subgroup, j: &Subgroup) -> (Cosets, Vec<DoubleCoset>) {
        let cos = self.left_cosets(j);
        let blocks = self.double_cosets_in(k, &cos);
        (cos, blocks)
    }

    pub fn double_cosets_in(&self, k: &Subgroup, cos: &Cosets) -> Vec<DoubleCoset> {
        let mut assigned = vec![false; cos.len()];
        let mut out = Vec::new();
        for c in 0..cos.len() {
            if assigned[c] {
                continue;
            }
            let mut block: Vec<usize> = k.iter().map(|kk| self.act_on_coset(cos, kk, c)).collect();
            block.sort_unstable();
            block.dedup();
            for &b in &block {
                assigned[b] = true;
            }
            out.push(DoubleCoset { rep: cos.reps[c], cosets: block });
        }
        out
    }

    /// Elements fixing every block of a partition of `G/J` setwise.
    pub fn partition_stabilizer(&self, cos: &Cosets, blocks: &[Vec<usize>]) -> Result<Subgroup> {
        let mut block_of = vec![usize::MAX; cos.len()];
        for (b, block) in blocks.iter().enumerate() {
            for &c in block {
                if c >= cos.len() || block_of[c] != usize::MAX {
                    return Err(Error::PartitionInvalid);
                }
                block_of[c] = b;
            }
        }
        if block_of.contains(&usize::MAX) {
            return Err(Error::PartitionInvalid);
        }
        let mut out = ElemSet::empty();
        for g in 0..self.order() {
            if (0..cos.len()).all(|c| block_of[self.act_on_coset(cos, g, c)] == block_of[c]) {
                out.insert(g);
            }
        }
        Ok(out)
    }

    /// `Σ_{g∈Γ} g` as an integer matrix, row-major.
    pub fn class_sum(&self, gamma: &Subgroup) -> Vec<i64> {
        let m = self.degree;
        let mut out = vec![0i64; m * m];
        for g in gamma.iter() {
            let e = &self.elements[g];
            for c in 0..m {
                out[e.image(c) * m + c] += i64::from(e.sign(c));
            }
        }
        out
    }

    /// `P_Γ = (1/|Γ|) Σ_{g∈Γ} g`.
    pub fn projection(&self, gamma: &Subgroup) -> RationalMatrix {
        let m = self.degree;
        let sum = self.class_sum(gamma);
        let mut p = RationalMatrix::zeros(m, m);
        let n = BigInt::from(gamma.len());
        for r in 0..m {
            for c in 0..m {
                let v = sum[r * m + c];
                if v != 0 {
                    p.set(r, c, BigRational::new(BigInt::from(v), n.clone()));
                }
            }
        }
        p
    }

    /// `{g : gM = M}` with exact comparison.
    pub fn stabilizer_of_matrix(&self, mat: &RationalMatrix) -> Subgroup {
        assert_eq!(mat.rows(), self.degree);
        let cols = mat.cols();
        let mut out = ElemSet::empty();
        for (gi, g) in self.elements.iter().enumerate() {
            let fixed = (0..self.degree).all(|i| {
                let r = g.image(i);
                (0..cols).all(|c| {
                    let v = mat.get(i, c);
                    if g.sign(i) > 0 {
                        mat.get(r, c) == v
                    } else {
                        *mat.get(r, c) == -v.clone()
                    }
                })
            });
            if fixed {
                out.insert(gi);
            }
        }
        out
    }

    /// Same as `stabilizer_of_matrix` for an integer matrix with `degree` rows.
    pub fn stabilizer_of_int_matrix(&self, mat: &[i64], cols: usize) -> Subgroup {
        assert_eq!(mat.len(), self.degree * cols);
        let mut out = ElemSet::empty();
        for (gi, g) in self.elements.iter().enumerate() {
            let fixed = (0..self.degree).all(|i| {
                let r = g.image(i);
                let s = i64::from(g.sign(i));
                (0..cols).all(|c| mat[r * cols + c] == s * mat[i * cols + c])
            });
            if fixed {
                out.insert(gi);
            }
        }
        out
    }

    /// Whether `P_Γ ≠ 0`.
    pub fn projection_nonzero(&self, gamma: &Subgroup) -> bool {
        self.class_sum(gamma).iter().any(|&v| v != 0)
    }

    pub fn is_rational_zero(m: &RationalMatrix) -> bool {
        (0..m.rows()).all(|r| m.row(r).iter().all(|x| x.is_zero()))
    }

    pub fn to_json(&self) -> GroupJson {
        GroupJson {
            degree: self.degree,
            generators: self
                .generators
                .iter()
                .map(|&g| {
                    let e = &self.elements[g];
                    (e.perm().iter().map(|&p| p + 1).collect(), e.signs().to_vec())
                })
                .collect(),
            name: if self.name.is_empty() { None } else { Some(self.name.clone()) },
        }
    }

    pub fn from_json(j: &GroupJson) -> Result<Group> {
        let gens = j
            .generators
            .iter()
            .map(|(p, s)| {
                let perm = p
                    .iter()
                    .map(|&x| x.checked_sub(1).ok_or_else(|| Error::InvalidElement("perms are 1-based".into())))
                    .collect::<Result<Vec<u32>>>()?;
                SignedPerm::new(perm, s.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        let g = Group::from_generators(j.degree, &gens)?;
        Ok(match &j.name {
            Some(n) => g.with_name(n.clone()),
            None => g,
        })
    }
}

/// Wire form of a group: generators as `[perm, signs]` with 1-based images.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupJson {
    pub degree: usize,
    pub generators: Vec<(Vec<u32>, Vec<i8>)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementJson {
    pub perm: Vec<u32>,
    pub signs: Vec<i8>,
}

impl From<&SignedPerm> for ElementJson {
    fn from(e: &SignedPerm) -> Self {
        ElementJson { perm: e.perm().iter().map(|&p| p + 1).collect(), signs: e.signs().to_vec() }
    }
}

impl TryFrom<&ElementJson> for SignedPerm {
    type Error = Error;

    fn try_from(e: &ElementJson) -> Result<SignedPerm> {
        let perm = e
            .perm
            .iter()
            .map(|&x| x.checked_sub(1).ok_or_else(|| Error::InvalidElement("perms are 1-based".into())))
            .collect::<Result<Vec<u32>>>()?;
        SignedPerm::new(perm, e.signs.clone())
    }
}
