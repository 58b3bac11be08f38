use crate::error::{Error, Result};

/// A signed permutation matrix. Column `i` has the entry `signs[i]` in row `perm[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SignedPerm {
    perm: Vec<u32>,
    signs: Vec<i8>,
}

impl SignedPerm {
    pub fn new(perm: Vec<u32>, signs: Vec<i8>) -> Result<Self> {
        if perm.len() != signs.len() {
            return Err(Error::InvalidElement("perm and signs differ in length".into()));
        }
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            let p = p as usize;
            if p >= perm.len() || seen[p] {
                return Err(Error::InvalidElement(format!("{perm:?} is not a bijection")));
            }
            seen[p] = true;
        }
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidElement("signs must be +1 or -1".into()));
        }
        Ok(SignedPerm { perm, signs })
    }

    pub fn from_perm(perm: Vec<u32>) -> Result<Self> {
        let n = perm.len();
        Self::new(perm, vec![1; n])
    }

    /// Builds a permutation from disjoint cycles on `0..n`.
    pub fn from_cycles(n: usize, cycles: &[&[u32]]) -> Result<Self> {
        let mut perm: Vec<u32> = (0..n as u32).collect();
        for cyc in cycles {
            for (i, &a) in cyc.iter().enumerate() {
                if a as usize >= n {
                    return Err(Error::InvalidElement(format!("point {a} out of range")));
                }
                perm[a as usize] = cyc[(i + 1) % cyc.len()];
            }
        }
        Self::from_perm(perm)
    }

    pub fn identity(n: usize) -> Self {
        SignedPerm { perm: (0..n as u32).collect(), signs: vec![1; n] }
    }

    pub fn degree(&self) -> usize {
        self.perm.len()
    }

    pub fn perm(&self) -> &[u32] {
        &self.perm
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn image(&self, i: usize) -> usize {
        self.perm[i] as usize
    }

    pub fn sign(&self, i: usize) -> i8 {
        self.signs[i]
    }

    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(i, &p)| p as usize == i) && self.signs.iter().all(|&s| s == 1)
    }

    pub fn is_unsigned(&self) -> bool {
        self.signs.iter().all(|&s| s == 1)
    }

    /// Matrix product `self * other`.
    pub fn compose(&self, other: &SignedPerm) -> SignedPerm {
        debug_assert_eq!(self.degree(), other.degree());
        let perm = other.perm.iter().map(|&q| self.perm[q as usize]).collect();
        let signs = other
            .perm
            .iter()
            .zip(&other.signs)
            .map(|(&q, &s)| s * self.signs[q as usize])
            .collect();
        SignedPerm { perm, signs }
    }

    pub fn inverse(&self) -> SignedPerm {
        let n = self.degree();
        let mut perm = vec![0u32; n];
        let mut signs = vec![1i8; n];
        for i in 0..n {
            let p = self.perm[i] as usize;
            perm[p] = i as u32;
            signs[p] = self.signs[i];
        }
        SignedPerm { perm, signs }
    }

    /// The unsigned part `π` of `ρ = π ζ`.
    pub fn unsigned(&self) -> SignedPerm {
        SignedPerm { perm: self.perm.clone(), signs: vec![1; self.degree()] }
    }

    /// Entry `(row, col)` of the matrix.
    pub fn entry(&self, row: usize, col: usize) -> i8 {
        if self.perm[col] as usize == row {
            self.signs[col]
        } else {
            0
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<i8>> {
        let n = self.degree();
        let mut m = vec![vec![0i8; n]; n];
        for c in 0..n {
            m[self.perm[c] as usize][c] = self.signs[c];
        }
        m
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for i in 0..self.degree() {
            y[self.perm[i] as usize] = f64::from(self.signs[i]) * x[i];
        }
        y
    }

    /// Applies the matrix to a vector laid out as `degree` points with `k` channels each.
    pub fn apply_channels(&self, x: &[f64], k: usize) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for i in 0..self.degree() {
            let p = self.perm[i] as usize;
            let s = f64::from(self.signs[i]);
            for c in 0..k {
                y[p * k + c] = s * x[i * k + c];
            }
        }
        y
    }

    /// Block-diagonal direct sum.
    pub fn direct_sum(parts: &[&SignedPerm]) -> SignedPerm {
        let mut perm = Vec::new();
        let mut signs = Vec::new();
        let mut off = 0u32;
        for p in parts {
            perm.extend(p.perm.iter().map(|&q| q + off));
            signs.extend_from_slice(&p.signs);
            off += p.degree() as u32;
        }
        SignedPerm { perm, signs }
    }

    /// Kronecker product with `I_k`, laid out point-major.
    pub fn with_channels(&self, k: usize) -> SignedPerm {
        let mut perm = Vec::with_capacity(self.degree() * k);
        let mut signs = Vec::with_capacity(self.degree() * k);
        for i in 0..self.degree() {
            for c in 0..k {
                perm.push(self.perm[i] * k as u32 + c as u32);
                signs.push(self.signs[i]);
            }
        }
        SignedPerm { perm, signs }
    }

    /// `heavi([[1,-1],[-1,1]] ⊗ ρ(g))`, the unraveled ordinary permutation of degree `2n`.
    pub fn unravel(&self) -> SignedPerm {
        let n = self.degree() as u32;
        let mut perm = vec![0u32; 2 * n as usize];
        for i in 0..n as usize {
            let p = self.perm[i];
            if self.signs[i] > 0 {
                perm[i] = p;
                perm[i + n as usize] = p + n;
            } else {
                perm[i] = p + n;
                perm[i + n as usize] = p;
            }
        }
        SignedPerm { perm, signs: vec![1; 2 * n as usize] }
    }
}
