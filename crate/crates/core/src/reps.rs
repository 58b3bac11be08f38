use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{Group, SubgroupPair};
use crate::perm::SignedPerm;
use crate::rational::RationalMatrix;

/// The signed perm-irrep `ρ_HK`: induced from the degree-1 representation of `H` with kernel `K`.
#[derive(Clone, Debug)]
pub struct Irrep {
    pair: SubgroupPair,
    transversal: Vec<usize>,
    h_rep: Option<usize>,
    images: Vec<SignedPerm>,
}

impl Irrep {
    pub fn new(group: &Group, pair: SubgroupPair) -> Result<Irrep> {
        let pair = SubgroupPair::new(pair.h, pair.k)?;
        if !group.is_subgroup(&pair.h) || !group.is_subgroup(&pair.k) {
            return Err(Error::InvalidPair("H or K is not a subgroup".into()));
        }
        let cosets = group.left_cosets(&pair.h);
        let transversal = cosets.reps.clone();
        let h_rep = pair.h.minus(&pair.k).first();
        let n = transversal.len();
        let images = (0..group.order())
            .map(|g| {
                let mut perm = Vec::with_capacity(n);
                let mut signs = Vec::with_capacity(n);
                for &gi in &transversal {
                    let y = group.mul(g, gi);
                    let j = cosets.of[y] as usize;
                    let h = group.mul(group.inv(transversal[j]), y);
                    perm.push(j as u32);
                    signs.push(if pair.k.contains(h) { 1 } else { -1 });
                }
                SignedPerm::new(perm, signs).expect("induced action is a signed permutation")
            })
            .collect();
        Ok(Irrep { pair, transversal, h_rep, images })
    }

    pub fn trivial(group: &Group) -> Irrep {
        Irrep::new(group, SubgroupPair { h: group.full(), k: group.full() }).expect("(G, G) is a pair")
    }

    pub fn pair(&self) -> &SubgroupPair {
        &self.pair
    }

    pub fn degree(&self) -> usize {
        self.transversal.len()
    }

    /// `|H:K|`.
    pub fn irrep_type(&self) -> usize {
        self.pair.index()
    }

    pub fn is_type2(&self) -> bool {
        self.pair.is_type2()
    }

    pub fn is_trivial_rep(&self) -> bool {
        self.degree() == 1 && !self.is_type2()
    }

    pub fn transversal(&self) -> &[usize] {
        &self.transversal
    }

    pub fn h_rep(&self) -> Option<usize> {
        self.h_rep
    }

    pub fn evaluate(&self, g: usize) -> &SignedPerm {
        &self.images[g]
    }

    pub fn images(&self) -> &[SignedPerm] {
        &self.images
    }

    /// Dimension of `{b : ρ(g)b = b ∀g}`: the constants for type 1, nothing for type 2.
    pub fn fixed_space_dim(&self) -> usize {
        if self.is_type2() {
            0
        } else {
            1
        }
    }

    /// Every basis vector reaches every other up to sign.
    pub fn is_transitive(&self) -> bool {
        let n = self.degree();
        let mut reach = vec![false; n];
        reach[0] = true;
        for img in &self.images {
            reach[img.image(0)] = true;
        }
        reach.iter().all(|&r| r)
    }

    /// `heavi([[1,-1],[-1,1]] ⊗ ρ(g))`, an ordinary permutation of degree `2n`.
    pub fn unravel_raw(&self, g: usize) -> SignedPerm {
        self.images[g].unravel()
    }

    pub fn to_json(&self) -> IrrepJson {
        IrrepJson {
            h: self.pair.h.to_vec(),
            k: self.pair.k.to_vec(),
            degree: self.degree(),
            irrep_type: self.irrep_type(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IrrepJson {
    #[serde(rename = "H")]
    pub h: Vec<usize>,
    #[serde(rename = "K")]
    pub k: Vec<usize>,
    pub degree: usize,
    #[serde(rename = "type")]
    pub irrep_type: usize,
}

pub fn equivalent(group: &Group, a: &Irrep, b: &Irrep) -> bool {
    a.pair == b.pair || group.pair_conjugator(&a.pair, &b.pair).is_some()
}

/// Result of unraveling: one irrep for type 2, two copies of `ρ_HH` for type 1.
#[derive(Clone, Debug)]
pub enum Unraveled {
    Irreducible(Irrep),
    TwoCopies(Irrep),
}

impl Unraveled {
    pub fn degree(&self) -> usize {
        match self {
            Unraveled::Irreducible(r) => r.degree(),
            Unraveled::TwoCopies(r) => 2 * r.degree(),
        }
    }
}

pub fn unravel(group: &Group, rep: &Irrep) -> Unraveled {
    let p = rep.pair();
    if rep.is_type2() {
        Unraveled::Irreducible(Irrep::new(group, SubgroupPair { h: p.k, k: p.k }).expect("(K, K) is a pair"))
    } else {
        Unraveled::TwoCopies(rep.clone())
    }
}

/// `ρ_HK → ρ_HH`.
pub fn tunnel(group: &Group, rep: &Irrep) -> Irrep {
    if !rep.is_type2() {
        return rep.clone();
    }
    let p = rep.pair();
    Irrep::new(group, SubgroupPair { h: p.h, k: p.h }).expect("(H, H) is a pair")
}

/// Direct sum of irreps with channel multiplicities; each summand is laid out point-major.
#[derive(Clone, Debug)]
pub struct LayerRep {
    pub summands: Vec<(Irrep, usize)>,
}

impl LayerRep {
    pub fn new(summands: Vec<(Irrep, usize)>) -> Result<LayerRep> {
        if summands.iter().any(|(_, k)| *k == 0) {
            return Err(Error::InvalidArchitecture("multiplicities must be positive".into()));
        }
        Ok(LayerRep { summands })
    }

    pub fn degree(&self) -> usize {
        self.summands.iter().map(|(r, k)| r.degree() * k).sum()
    }

    pub fn evaluate(&self, g: usize) -> SignedPerm {
        let parts: Vec<SignedPerm> = self.summands.iter().map(|(r, k)| r.evaluate(g).with_channels(*k)).collect();
        SignedPerm::direct_sum(&parts.iter().collect::<Vec<_>>())
    }
}

/// `M = P_K − (|H:K|−1) P_H` in the ambient representation of the group.
pub fn fixed_space_projector(group: &Group, pair: &SubgroupPair) -> RationalMatrix {
    let pk = group.projection(&pair.k);
    if pair.is_type2() {
        pk.sub(&group.projection(&pair.h))
    } else {
        pk
    }
}

fn apply_signed(g: &SignedPerm, w: &[BigRational]) -> Vec<BigRational> {
    let mut y = vec![BigRational::zero(); w.len()];
    for i in 0..g.degree() {
        y[g.image(i)] = if g.sign(i) > 0 { w[i].clone() } else { -w[i].clone() };
    }
    y
}

/// Rows `g_i w` over the transversal; an equivariant map from the ambient representation to `ρ_HK`.
pub fn orbit_weight_matrix(group: &Group, rep: &Irrep, w: &[BigRational]) -> Result<RationalMatrix> {
    let m = group.degree();
    if w.len() != m {
        return Err(Error::ShapeMismatch(format!("w has length {}, expected {m}", w.len())));
    }
    if w.iter().all(|x| x.is_zero()) {
        return Err(Error::NotInFixedSpace);
    }
    let proj = fixed_space_projector(group, rep.pair());
    let mut wm = vec![BigRational::zero(); m];
    for (i, wi) in w.iter().enumerate() {
        if wi.is_zero() {
            continue;
        }
        for (j, out) in wm.iter_mut().enumerate() {
            let p = proj.get(i, j);
            if !p.is_zero() {
                *out += wi * p;
            }
        }
    }
    if wm != w {
        return Err(Error::NotInFixedSpace);
    }
    let n = rep.degree();
    let mut out = RationalMatrix::zeros(n, m);
    for (i, &gi) in rep.transversal().iter().enumerate() {
        for (c, v) in apply_signed(group.element(gi), w).into_iter().enumerate() {
            out.set(i, c, v);
        }
    }
    for g in 0..group.order() {
        if !intertwines(rep.evaluate(g), &out, group.element(g)) {
            return Err(Error::NotEquivariant(f64::NAN));
        }
    }
    Ok(out)
}

/// Exact check of `ρ W = W g` for signed permutations `ρ`, `g`.
pub fn intertwines(rho: &SignedPerm, w: &RationalMatrix, g: &SignedPerm) -> bool {
    // (ρW)[ρ(i), c] = s_i W[i, c] and (Wg)[r, j] = t_j W[r, g(j)]
    for i in 0..w.rows() {
        let r = rho.image(i);
        for j in 0..w.cols() {
            let lhs = w.get(i, j);
            let rhs = w.get(r, g.image(j));
            let sign = rho.sign(i) * g.sign(j);
            let ok = if sign > 0 { lhs == rhs } else { *lhs == -rhs.clone() };
            if !ok {
                return false;
            }
        }
    }
    true
}

/// Diagonal of `W₁W₂ᵀ` is zero for inequivalent `ρ_{H K₁}`, `ρ_{H K₂}` sharing a transversal.
pub fn check_orthogonality(
    group: &Group,
    a: &Irrep,
    b: &Irrep,
    w1: &[BigRational],
    w2: &[BigRational],
) -> Result<bool> {
    if a.pair().h != b.pair().h {
        return Err(Error::InvalidPair("the two irreps must share H".into()));
    }
    if equivalent(group, a, b) {
        return Err(Error::InvalidPair("the two irreps are equivalent".into()));
    }
    let m1 = orbit_weight_matrix(group, a, w1)?;
    let m2 = orbit_weight_matrix(group, b, w2)?;
    for i in 0..a.degree() {
        let mut d = BigRational::zero();
        for c in 0..group.degree() {
            d += m1.get(i, c) * m2.get(i, c);
        }
        if !d.is_zero() {
            return Ok(false);
        }
    }
    Ok(true)
}
