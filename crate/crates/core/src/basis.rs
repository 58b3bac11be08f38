//! Weight-sharing bases for `{X : ρ(g)X = Xπ(g)}` by signed 2-coloring of the arc graph.

use std::collections::VecDeque;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perm::SignedPerm;
use crate::rational::SparseEliminator;

pub const ORACLE_CAP: usize = 400;

/// A component whose sign constraints contradict each other.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    /// Smallest node of the component, as `(row, col)`.
    pub root: (usize, usize),
    /// Node reached with both signs.
    pub node: (usize, usize),
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasisSet {
    rows: usize,
    cols: usize,
    /// Per node `row * cols + col`: basis index (`u32::MAX` when unused) and sign.
    slot: Vec<(u32, i8)>,
    count: usize,
    conflicts: Vec<Conflict>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisJson {
    pub shape: (usize, usize),
    /// Sparse `(row, col, sign)` triplets per basis matrix.
    pub matrices: Vec<Vec<(usize, usize, i8)>>,
}

impl BasisSet {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn conflicts(&self) -> &[Conflict] {
        &self.conflicts
    }

    /// Basis index and sign at `(row, col)`.
    #[inline]
    pub fn at(&self, row: usize, col: usize) -> Option<(usize, i8)> {
        let (b, s) = self.slot[row * self.cols + col];
        (b != u32::MAX).then_some((b as usize, s))
    }

    /// Nonzero entries `(row, col, basis, sign)` in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, usize, i8)> + '_ {
        self.slot.iter().enumerate().filter(|(_, (b, _))| *b != u32::MAX).map(move |(node, &(b, s))| {
            (node / self.cols, node % self.cols, b as usize, s)
        })
    }

    pub fn matrix(&self, b: usize) -> Vec<Vec<i8>> {
        let mut m = vec![vec![0i8; self.cols]; self.rows];
        for (r, c, bi, s) in self.entries() {
            if bi == b {
                m[r][c] = s;
            }
        }
        m
    }

    pub fn matrices(&self) -> Vec<Vec<Vec<i8>>> {
        (0..self.count).map(|b| self.matrix(b)).collect()
    }

    /// Flips one entry; only useful for negative controls.
    pub fn corrupt(&mut self, row: usize, col: usize) {
        let e = &mut self.slot[row * self.cols + col];
        e.1 = -e.1;
    }

    pub fn to_json(&self) -> BasisJson {
        let mut matrices = vec![Vec::new(); self.count];
        for (r, c, b, s) in self.entries() {
            matrices[b].push((r, c, s));
        }
        BasisJson { shape: (self.rows, self.cols), matrices }
    }

    pub fn from_json(j: &BasisJson) -> Result<BasisSet> {
        let (rows, cols) = j.shape;
        let mut slot = vec![(u32::MAX, 0i8); rows * cols];
        for (b, m) in j.matrices.iter().enumerate() {
            for &(r, c, s) in m {
                if r >= rows || c >= cols || !(s == 1 || s == -1) {
                    return Err(Error::ShapeMismatch(format!("bad triplet ({r}, {c}, {s})")));
                }
                let e = &mut slot[r * cols + c];
                if e.0 != u32::MAX {
                    return Err(Error::ShapeMismatch(format!("overlapping supports at ({r}, {c})")));
                }
                *e = (b as u32, s);
            }
        }
        Ok(BasisSet { rows, cols, slot, count: j.matrices.len(), conflicts: Vec::new() })
    }
}

fn check_inputs(rho: &[SignedPerm], pi: &[SignedPerm]) -> Result<(usize, usize)> {
    if rho.len() != pi.len() {
        return Err(Error::ShapeMismatch("rho and pi must list the same elements".into()));
    }
    if pi.iter().any(|p| !p.is_unsigned()) {
        return Err(Error::NotOrdinaryPerm);
    }
    let n = rho.first().map(|r| r.degree()).unwrap_or(0);
    let p = pi.first().map(|r| r.degree()).unwrap_or(0);
    if rho.iter().any(|r| r.degree() != n) || pi.iter().any(|q| q.degree() != p) {
        return Err(Error::ShapeMismatch("inconsistent degrees".into()));
    }
    Ok((n, p))
}

/// Basis of the intertwiners from `π` to `ρ`, given their images on a generating set.
/// `rows` and `cols` are needed when the generating set is empty.
pub fn build_basis(rho: &[SignedPerm], pi: &[SignedPerm], rows: usize, cols: usize) -> Result<BasisSet> {
    let (n, p) = if rho.is_empty() { (rows, cols) } else { check_inputs(rho, pi)? };
    if (n, p) != (rows, cols) {
        return Err(Error::ShapeMismatch(format!("expected {rows}x{cols}, got {n}x{p}")));
    }
    let nodes = n * p;
    let rho_inv: Vec<SignedPerm> = rho.iter().map(|r| r.inverse()).collect();
    let pi_inv: Vec<SignedPerm> = pi.iter().map(|q| q.inverse()).collect();
    let mut value = vec![0i8; nodes];
    let mut comp = vec![u32::MAX; nodes];
    let mut components: Vec<(Vec<usize>, bool)> = Vec::new();
    let mut conflicts = Vec::new();
    for root in 0..nodes {
        if comp[root] != u32::MAX {
            continue;
        }
        let cid = components.len() as u32;
        comp[root] = cid;
        value[root] = 1;
        let mut members = vec![root];
        let mut bad: Option<usize> = None;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            let (i, j) = (u / p, u % p);
            for k in 0..rho.len() {
                // X[ρ(i), π(j)] = s_i X[i, j] and its inverse reading
                let fwd = (rho[k].image(i) * p + pi[k].image(j), rho[k].sign(i));
                let ii = rho_inv[k].image(i);
                let bwd = (ii * p + pi_inv[k].image(j), rho[k].sign(ii));
                for (v, z) in [fwd, bwd] {
                    let want = z * value[u];
                    if comp[v] == u32::MAX {
                        comp[v] = cid;
                        value[v] = want;
                        members.push(v);
                        queue.push_back(v);
                    } else if value[v] != want && bad.is_none() {
                        bad = Some(v);
                    }
                }
            }
        }
        if let Some(v) = bad {
            conflicts.push(Conflict { root: (root / p, root % p), node: (v / p, v % p), size: members.len() });
        }
        components.push((members, bad.is_none()));
    }
    let mut slot = vec![(u32::MAX, 0i8); nodes];
    let mut count = 0u32;
    for (members, ok) in &components {
        if !ok {
            continue;
        }
        for &v in members {
            slot[v] = (count, value[v]);
        }
        count += 1;
    }
    Ok(BasisSet { rows: n, cols: p, slot, count: count as usize, conflicts })
}

/// Checks `ρ(g)B = Bπ(g)` for every listed element and every basis matrix.
/// Disjoint supports hold by construction of the storage.
pub fn verify_basis(b: &BasisSet, rho: &[SignedPerm], pi: &[SignedPerm]) -> bool {
    let (n, p) = b.shape();
    if rho.len() != pi.len() || rho.iter().any(|r| r.degree() != n) || pi.iter().any(|q| q.degree() != p) {
        return false;
    }
    for (r, q) in rho.iter().zip(pi) {
        for i in 0..n {
            let ri = r.image(i);
            for c in 0..p {
                // s_i B[i, c] = t_c B[ρ(i), π(c)]
                let lhs = b.at(i, c).map(|(bi, s)| (bi, s * r.sign(i)));
                let rhs = b.at(ri, q.image(c)).map(|(bi, s)| (bi, s * q.sign(c)));
                if lhs != rhs {
                    return false;
                }
            }
        }
    }
    true
}

/// Dimension of the intertwiner space by exact elimination of the linear constraints.
pub fn oracle_basis_dim(rho: &[SignedPerm], pi: &[SignedPerm], rows: usize, cols: usize, cap: usize) -> Result<usize> {
    let (n, p) = if rho.is_empty() { (rows, cols) } else { check_inputs(rho, pi)? };
    let nodes = n * p;
    if nodes > cap {
        return Err(Error::SizeCap { entries: nodes, cap });
    }
    let mut elim = SparseEliminator::new();
    for (r, q) in rho.iter().zip(pi) {
        for i in 0..n {
            for j in 0..p {
                let u = i * p + j;
                let v = r.image(i) * p + q.image(j);
                let z = i64::from(r.sign(i));
                let row = if u == v {
                    vec![(u, BigInt::from(1 - z))]
                } else {
                    vec![(v, BigInt::from(1)), (u, BigInt::from(-z))]
                };
                elim.push(row);
            }
        }
    }
    Ok(nodes - elim.rank())
}
