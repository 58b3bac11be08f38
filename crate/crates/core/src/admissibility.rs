use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use parking_lot::RwLock;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::ElemSet;
use crate::error::{Error, Result};
use crate::group::{Group, Subgroup, SubgroupPair};

/// Combinatorial θ: partition `G/J` into `K`-orbits, merge the orbits that `h ∈ H∖K`
/// maps to themselves when `|H:K| = 2`, and return the stabilizer of every block.
pub fn theta(group: &Group, pair: &SubgroupPair, j: &Subgroup) -> Result<Subgroup> {
    let pair = SubgroupPair::new(pair.h, pair.k)?;
    let cos = group.left_cosets(j);
    let dc = group.double_cosets_in(&pair.k, &cos);
    let mut blocks: Vec<Vec<usize>> = dc.into_iter().map(|b| b.cosets).collect();
    if pair.is_type2() {
        let h = pair.h.minus(&pair.k).first().expect("H∖K is nonempty");
        let mut block_of = vec![0usize; cos.len()];
        for (b, block) in blocks.iter().enumerate() {
            for &c in block {
                block_of[c] = b;
            }
        }
        let (merged, kept): (Vec<_>, Vec<_>) = blocks
            .into_iter()
            .enumerate()
            .partition(|(b, block)| block_of[group.act_on_coset(&cos, h, block[0])] == *b);
        blocks = kept.into_iter().map(|x| x.1).collect();
        if !merged.is_empty() {
            let mut all: Vec<usize> = merged.into_iter().flat_map(|x| x.1).collect();
            all.sort_unstable();
            blocks.push(all);
        }
    }
    group.partition_stabilizer(&cos, &blocks)
}

/// `st_G(P_K − (|H:K|−1) P_H)` in the ambient representation, scaled to integers.
pub fn phi1(group: &Group, pair: &SubgroupPair) -> Subgroup {
    let idx = pair.index() as i64;
    let ck = group.class_sum(&pair.k);
    let m = if idx == 2 {
        let ch = group.class_sum(&pair.h);
        ck.iter().zip(&ch).map(|(a, b)| 2 * a - b).collect::<Vec<_>>()
    } else {
        ck
    };
    group.stabilizer_of_int_matrix(&m, group.degree())
}

/// Both identities of the conjugation behaviour of θ for one conjugator.
pub fn theta_conjugation_audit(group: &Group, pair: &SubgroupPair, j: &Subgroup, g: usize) -> Result<bool> {
    let base = theta(group, pair, j)?;
    let invariant = theta(group, pair, &group.conjugate(g, j))? == base;
    let equivariant = theta(group, &group.conjugate_pair(g, pair), j)? == group.conjugate(g, &base);
    Ok(invariant && equivariant)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Gdnn,
    Crelu,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Gdnn => "gdnn",
            Mode::Crelu => "crelu",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "gdnn" => Ok(Mode::Gdnn),
            "crelu" => Ok(Mode::Crelu),
            o => Err(format!("unknown mode {o}")),
        }
    }
}

/// How sequences of irreps are enumerated when counting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Enumeration {
    /// One representative per pair class, weighted by `m²` where `m` is the number of
    /// classes of `K` inside a fixed `H`.
    Weighted,
    /// One representative per pair class.
    Classes,
    /// Every subgroup pair.
    Pairs,
}

/// Which subgroup of the previous layer a CReLU layer is tested against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CreluChain {
    /// `θ(H', K', K)`: the previous layer is seen through its unraveled representation `ρ_KK`.
    PrevK,
    /// `θ(H', K', H)`.
    PrevH,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountOptions {
    pub mode: Mode,
    pub max_depth: usize,
    pub enumeration: Enumeration,
    pub crelu_chain: CreluChain,
}

impl CountOptions {
    pub fn new(mode: Mode, max_depth: usize) -> Self {
        CountOptions { mode, max_depth, enumeration: Enumeration::Weighted, crelu_chain: CreluChain::PrevK }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRow {
    pub depth: usize,
    pub admissible: u64,
    pub total: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTable {
    pub mode: Mode,
    pub rows: Vec<CountRow>,
}

impl CountTable {
    pub fn totals(&self) -> Vec<u64> {
        self.rows.iter().map(|r| r.total).collect()
    }

    pub fn admissible(&self) -> Vec<u64> {
        self.rows.iter().map(|r| r.admissible).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("depth,admissible,total,mode\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{}\n", r.depth, r.admissible, r.total, self.mode));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IrrepCheck {
    pub layer: usize,
    pub irrep: usize,
    pub phi: Vec<usize>,
    pub expected_k: Vec<usize>,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    pub checks: Vec<IrrepCheck>,
    /// 1-based layer and 0-based irrep of the first failure.
    pub failing_layer: Option<usize>,
    pub failing_irrep: Option<usize>,
    pub nonzero_projection_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextCandidate {
    pub class_index: usize,
    pub pair: (Vec<usize>, Vec<usize>),
    pub degree: usize,
    #[serde(rename = "type")]
    pub irrep_type: usize,
    pub phi: Vec<usize>,
    pub admissible: bool,
    /// Enumeration weight of the class (`m²`).
    pub weight: u64,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry(Vec<usize>, Vec<usize>, Vec<usize>, Vec<usize>);

type Triple = (ElemSet, ElemSet, ElemSet);

/// θ/φ machinery over one group with a shared θ memo.
pub struct Calculus {
    group: Arc<Group>,
    theta_memo: RwLock<HashMap<Triple, Subgroup>>,
    jcanon: RwLock<HashMap<Subgroup, Subgroup>>,
    phi1_memo: RwLock<HashMap<SubgroupPair, Subgroup>>,
    cache_file: Option<PathBuf>,
}

impl Calculus {
    /// Loads a persisted θ table from `GDNN_CACHE_DIR` when set.
    pub fn new(group: Arc<Group>) -> Self {
        let dir = std::env::var_os("GDNN_CACHE_DIR").map(PathBuf::from);
        Self::with_cache_dir(group, dir)
    }

    pub fn with_cache_dir(group: Arc<Group>, dir: Option<PathBuf>) -> Self {
        let cache_file = dir.map(|d| {
            let name: String = group.name().chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
            d.join(format!("theta-{}-{}-{}.json", name, group.order(), group.degree()))
        });
        let calc = Calculus {
            group,
            theta_memo: RwLock::new(HashMap::new()),
            jcanon: RwLock::new(HashMap::new()),
            phi1_memo: RwLock::new(HashMap::new()),
            cache_file,
        };
        calc.load();
        calc
    }

    pub fn group(&self) -> &Arc<Group> {
        &self.group
    }

    fn load(&self) {
        let Some(path) = &self.cache_file else { return };
        let Ok(text) = std::fs::read_to_string(path) else { return };
        let Ok(entries) = serde_json::from_str::<Vec<CacheEntry>>(&text) else { return };
        let n = self.group.order();
        let mut memo = self.theta_memo.write();
        for CacheEntry(h, k, j, t) in entries {
            if [&h, &k, &j, &t].iter().any(|v| v.iter().any(|&x| x >= n)) {
                continue;
            }
            memo.insert(
                (ElemSet::from_indices(h), ElemSet::from_indices(k), ElemSet::from_indices(j)),
                ElemSet::from_indices(t),
            );
        }
    }

    /// Writes the θ table as JSON when a cache directory is configured.
    pub fn persist(&self) -> Result<()> {
        let Some(path) = &self.cache_file else { return Ok(()) };
        let mut entries: Vec<(Triple, Subgroup)> = self.theta_memo.read().iter().map(|(k, v)| (*k, *v)).collect();
        entries.sort();
        let out: Vec<CacheEntry> =
            entries.into_iter().map(|((h, k, j), t)| CacheEntry(h.to_vec(), k.to_vec(), j.to_vec(), t.to_vec())).collect();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::Io(e.to_string()))?;
        }
        let text = serde_json::to_string(&out).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn theta_table_len(&self) -> usize {
        self.theta_memo.read().len()
    }

    fn canonical_j(&self, j: &Subgroup) -> Subgroup {
        if let Some(c) = self.jcanon.read().get(j) {
            return *c;
        }
        let c = self.group.conjugacy_class_of_subgroup(j)[0];
        self.jcanon.write().insert(*j, c);
        c
    }

    /// Memoized θ; `J` is replaced by the smallest member of its conjugacy class.
    pub fn theta(&self, pair: &SubgroupPair, j: &Subgroup) -> Result<Subgroup> {
        let key = (pair.h, pair.k, self.canonical_j(j));
        if let Some(t) = self.theta_memo.read().get(&key) {
            return Ok(*t);
        }
        let t = theta(&self.group, pair, &key.2)?;
        self.theta_memo.write().insert(key, t);
        Ok(t)
    }

    pub fn phi1(&self, pair: &SubgroupPair) -> Subgroup {
        if let Some(p) = self.phi1_memo.read().get(pair) {
            return *p;
        }
        let p = phi1(&self.group, pair);
        self.phi1_memo.write().insert(*pair, p);
        p
    }

    /// `φ` for an irrep placed after the given layers.
    pub fn phi(&self, prefix: &[Vec<SubgroupPair>], pair: &SubgroupPair) -> Result<Subgroup> {
        let mut f = self.phi1(pair);
        for layer in prefix {
            for q in layer {
                f = f.and(&self.theta(pair, &q.h)?);
            }
        }
        Ok(f)
    }

    fn nonzero_projection_ok(&self, first: &[SubgroupPair]) -> bool {
        let full = self.group.full();
        !first.iter().any(|p| p.h == full) || self.group.projection_nonzero(&full)
    }

    pub fn is_admissible(&self, layers: &[Vec<SubgroupPair>]) -> Result<AdmissibilityReport> {
        let mut checks = Vec::new();
        let mut failing = None;
        for (i, layer) in layers.iter().enumerate() {
            for (j, p) in layer.iter().enumerate() {
                let f = self.phi(&layers[..i], p)?;
                let ok = f == p.k;
                if !ok && failing.is_none() {
                    failing = Some((i + 1, j));
                }
                checks.push(IrrepCheck { layer: i + 1, irrep: j, phi: f.to_vec(), expected_k: p.k.to_vec(), ok });
            }
        }
        let nz = layers.first().map(|l| self.nonzero_projection_ok(l)).unwrap_or(true);
        Ok(AdmissibilityReport {
            admissible: failing.is_none() && nz,
            checks,
            failing_layer: failing.map(|f| f.0),
            failing_irrep: failing.map(|f| f.1),
            nonzero_projection_ok: nz,
        })
    }

    /// Every pair class evaluated after `prefix`, in order of decreasing degree.
    pub fn evaluate_next(&self, prefix: &[Vec<SubgroupPair>], strict_decrease: bool) -> Result<Vec<NextCandidate>> {
        let g = &self.group;
        let bound = prefix.last().and_then(|l| l.iter().map(|p| g.order() / p.h.len()).min());
        let mut out = Vec::new();
        for (ci, class) in g.pair_classes().iter().enumerate() {
            let p = class.rep;
            let degree = g.order() / p.h.len();
            if strict_decrease && bound.is_some_and(|b| degree >= b) {
                continue;
            }
            let f = self.phi(prefix, &p)?;
            let mut ok = f == p.k;
            if prefix.is_empty() {
                ok &= self.nonzero_projection_ok(&[p]);
            }
            let m = class.k_multiplicity() as u64;
            out.push(NextCandidate {
                class_index: ci,
                pair: (p.h.to_vec(), p.k.to_vec()),
                degree,
                irrep_type: p.index(),
                phi: f.to_vec(),
                admissible: ok,
                weight: m * m,
            });
        }
        out.sort_by(|a, b| b.degree.cmp(&a.degree).then(a.class_index.cmp(&b.class_index)));
        Ok(out)
    }

    /// Pair classes admissible after an admissible prefix.
    pub fn admissible_next(&self, prefix: &[Vec<SubgroupPair>], strict_decrease: bool) -> Result<Vec<NextCandidate>> {
        let report = self.is_admissible(prefix)?;
        if !report.admissible {
            return Err(Error::PrefixNotAdmissible(report.failing_layer.unwrap_or(1)));
        }
        Ok(self.evaluate_next(prefix, strict_decrease)?.into_iter().filter(|c| c.admissible).collect())
    }

    fn candidates(&self, enumeration: Enumeration) -> Vec<(SubgroupPair, u64)> {
        let g = &self.group;
        let mut cands: Vec<(SubgroupPair, u64)> = match enumeration {
            Enumeration::Pairs => g.subgroup_pairs().into_iter().map(|p| (p, 1)).collect(),
            Enumeration::Classes => g.pair_classes().iter().map(|c| (c.rep, 1)).collect(),
            Enumeration::Weighted => g
                .pair_classes()
                .iter()
                .map(|c| {
                    let m = c.k_multiplicity() as u64;
                    (c.rep, m * m)
                })
                .collect(),
        };
        cands.retain(|(p, _)| g.order() / p.h.len() > 1);
        cands
    }

    /// Counts sequences of irreps of strictly decreasing degree greater than one, each
    /// followed by the trivial layer, for depths `2..=max_depth`.
    pub fn count(&self, opts: CountOptions) -> Result<CountTable> {
        let g = self.group.clone();
        let cands = self.candidates(opts.enumeration);
        let deg: Vec<usize> = cands.iter().map(|(p, _)| g.order() / p.h.len()).collect();
        let first_ok: Vec<bool> =
            cands.par_iter().map(|(p, _)| self.phi1(p) == p.k && self.nonzero_projection_ok(&[*p])).collect();
        // θ table for every candidate against every subgroup it may be tested with
        let mut js: Vec<Subgroup> = cands.iter().flat_map(|(p, _)| [p.h, p.k]).collect();
        js.sort();
        js.dedup();
        let cells: Vec<(usize, Subgroup)> =
            (0..cands.len()).flat_map(|a| js.iter().map(move |j| (a, *j))).collect();
        cells.par_iter().try_for_each(|(a, j)| self.theta(&cands[*a].0, j).map(|_| ()))?;

        let max_depth = opts.max_depth.max(1);
        let mut admissible = vec![0u64; max_depth + 1];
        let mut total = vec![0u64; max_depth + 1];
        let mut seq: Vec<usize> = Vec::new();
        struct Frame {
            next: usize,
            weight: u64,
            ok: bool,
        }
        let mut stack: Vec<Frame> = Vec::new();
        for a in 0..cands.len() {
            if max_depth < 2 {
                break;
            }
            seq.push(a);
            stack.push(Frame { next: 0, weight: cands[a].1, ok: first_ok[a] });
            total[2] += cands[a].1;
            if first_ok[a] {
                admissible[2] += cands[a].1;
            }
            while let Some(top) = stack.last_mut() {
                let depth = seq.len() + 1;
                if depth >= max_depth || top.next >= cands.len() {
                    stack.pop();
                    seq.pop();
                    continue;
                }
                let b = top.next;
                top.next += 1;
                let last = *seq.last().unwrap();
                if deg[b] >= deg[last] {
                    continue;
                }
                let (weight, prev_ok) = (top.weight * cands[b].1, top.ok);
                let p = &cands[b].0;
                let ok = prev_ok
                    && match opts.mode {
                        Mode::Gdnn => {
                            let mut f = self.phi1(p);
                            for &q in &seq {
                                f = f.and(&self.theta(p, &cands[q].0.h)?);
                            }
                            f == p.k
                        }
                        Mode::Crelu => {
                            let prev = &cands[last].0;
                            let j = match opts.crelu_chain {
                                CreluChain::PrevK => prev.k,
                                CreluChain::PrevH => prev.h,
                            };
                            self.theta(p, &j)? == p.k
                        }
                    };
                total[depth + 1] += weight;
                if ok {
                    admissible[depth + 1] += weight;
                }
                seq.push(b);
                stack.push(Frame { next: 0, weight, ok });
            }
        }
        let rows = (2..=max_depth)
            .map(|d| CountRow { depth: d, admissible: admissible[d], total: total[d] })
            .collect();
        Ok(CountTable { mode: opts.mode, rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::named::named_group;

    #[test]
    fn theta_extremes() {
        let g = named_group("Z6").unwrap();
        let full = g.full();
        for j in g.subgroups() {
            let p = SubgroupPair { h: full, k: full };
            assert_eq!(theta(&g, &p, j).unwrap(), full);
        }
        for p in g.subgroup_pairs() {
            assert_eq!(theta(&g, &p, &full).unwrap(), full);
        }
    }

    #[test]
    fn c8_depth_two() {
        let calc = Calculus::with_cache_dir(Arc::new(named_group("C8").unwrap()), None);
        let t = calc.count(CountOptions::new(Mode::Gdnn, 2)).unwrap();
        assert_eq!(t.rows, vec![CountRow { depth: 2, admissible: 5, total: 5 }]);
    }
}
