//! Named groups used by the tables, tests and tools.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use parking_lot::Mutex;

use crate::error::{Error, Result};
use crate::group::Group;
use crate::perm::SignedPerm;

/// Canonical names accepted by [`named_group`], in listing order.
pub const NAMES: &[&str] = &[
    "C8",
    "C2xC4",
    "C2^3",
    "D4",
    "Q8",
    "C2xC4_deg6",
    "C2^3_deg6",
    "D4_deg4",
    "Z6",
    "Icosahedral",
    "IcosahedralMesh",
    "BinProd8",
    "BinProd16",
];

/// The five groups of order 8 in both families used for the order-8 tables.
pub const ORDER8_REGULAR: &[&str] = &["C8", "C2xC4", "C2^3", "D4", "Q8"];
pub const ORDER8_SMALL: &[&str] = &["C8", "C2xC4_deg6", "C2^3_deg6", "D4_deg4", "Q8"];

fn cyc(n: usize, cycles: &[&[u32]]) -> SignedPerm {
    SignedPerm::from_cycles(n, cycles).expect("static cycle data")
}

fn build(name: &str, degree: usize, gens: Vec<SignedPerm>) -> Result<Group> {
    Ok(Group::from_generators(degree, &gens)?.with_name(name))
}

fn canonical(name: &str) -> Option<String> {
    let lower = name.trim().to_ascii_lowercase();
    let flat: String = lower.chars().filter(|c| !matches!(c, '(' | ')' | ' ' | '_' | '-')).collect();
    if let Some(m) = flat.strip_prefix("binprod") {
        return m.parse::<usize>().ok().map(|m| format!("BinProd{m}"));
    }
    let alias = match flat.as_str() {
        "z6cyclicperms" | "z6" | "c6" => "Z6",
        "icosahedralmesh" | "icosahedral162" => "IcosahedralMesh",
        "a5" | "icosahedral" => "Icosahedral",
        _ => "",
    };
    if !alias.is_empty() {
        return Some(alias.to_string());
    }
    NAMES.iter().find(|n| n.to_ascii_lowercase() == lower).map(|n| n.to_string())
}

/// Builds a group by name. Lookup ignores case; `BinProd(m)` accepts any valid `m`.
pub fn named_group(name: &str) -> Result<Group> {
    let Some(name) = canonical(name) else {
        return Err(Error::UnknownName(name.to_string()));
    };
    match name.as_str() {
        "C8" => build("C8", 8, vec![cyc(8, &[&[0, 1, 2, 3, 4, 5, 6, 7]])]),
        "C2xC4" => build(
            "C2xC4",
            8,
            vec![cyc(8, &[&[0, 4], &[1, 5], &[2, 6], &[3, 7]]), cyc(8, &[&[0, 1, 2, 3], &[4, 5, 6, 7]])],
        ),
        "C2^3" => build(
            "C2^3",
            8,
            vec![
                cyc(8, &[&[0, 1], &[2, 3], &[4, 5], &[6, 7]]),
                cyc(8, &[&[0, 2], &[1, 3], &[4, 6], &[5, 7]]),
                cyc(8, &[&[0, 4], &[1, 5], &[2, 6], &[3, 7]]),
            ],
        ),
        "D4" => build(
            "D4",
            8,
            vec![cyc(8, &[&[0, 1, 2, 3], &[4, 5, 6, 7]]), cyc(8, &[&[0, 4], &[1, 7], &[2, 6], &[3, 5]])],
        ),
        "Q8" => build(
            "Q8",
            8,
            vec![cyc(8, &[&[0, 1, 2, 3], &[4, 5, 6, 7]]), cyc(8, &[&[0, 4, 2, 6], &[1, 7, 3, 5]])],
        ),
        "C2xC4_deg6" => build("C2xC4_deg6", 6, vec![cyc(6, &[&[0, 1]]), cyc(6, &[&[2, 3, 4, 5]])]),
        "C2^3_deg6" => build("C2^3_deg6", 6, vec![cyc(6, &[&[0, 1]]), cyc(6, &[&[2, 3]]), cyc(6, &[&[4, 5]])]),
        "D4_deg4" => build("D4_deg4", 4, vec![cyc(4, &[&[0, 1, 2, 3]]), cyc(4, &[&[1, 3]])]),
        "Z6" => build("Z6", 6, vec![cyc(6, &[&[0, 1, 2, 3, 4, 5]])]),
        "Icosahedral" => icosahedral(false),
        "IcosahedralMesh" => icosahedral(true),
        n => {
            let m: usize = n.trim_start_matches("BinProd").parse().map_err(|_| Error::UnknownName(n.into()))?;
            binprod_group(m)
        }
    }
}

/// Process-wide cache of named groups, so lattices and pair classes are computed once.
pub fn shared(name: &str) -> Result<Arc<Group>> {
    static CACHE: OnceLock<Mutex<HashMap<String, Arc<Group>>>> = OnceLock::new();
    let key = canonical(name).ok_or_else(|| Error::UnknownName(name.to_string()))?;
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(g) = cache.lock().get(&key) {
        return Ok(g.clone());
    }
    let g = Arc::new(named_group(&key)?);
    Ok(cache.lock().entry(key).or_insert(g).clone())
}

/// A5 realized on the 12 cosets of a 5-cycle subgroup, or on 162 points:
/// those 12, the 30 cosets of an involution, and two regular orbits.
/// The 162-point action is that of the twice-subdivided icosahedral mesh
/// (vertices, edge midpoints, and the two free orbits of second-level midpoints).
fn icosahedral(mesh: bool) -> Result<Group> {
    let a = SignedPerm::from_perm(vec![1, 2, 0, 3, 4])?;
    let b = SignedPerm::from_perm(vec![1, 2, 3, 4, 0])?;
    let a5 = Group::from_generators(5, &[a, b])?;
    let (ia, ib) = (a5.generators()[0], a5.generators()[1]);
    let mut orbits = vec![a5.left_cosets(&a5.generate(&[ib]))];
    if mesh {
        let t = (0..a5.order()).find(|&g| g != 0 && a5.mul(g, g) == 0).expect("A5 has involutions");
        orbits.push(a5.left_cosets(&a5.generate(&[t])));
        orbits.push(a5.left_cosets(&a5.trivial()));
        orbits.push(a5.left_cosets(&a5.trivial()));
    }
    let degree: usize = orbits.iter().map(|o| o.len()).sum();
    let induced = |g: usize| {
        let mut perm = Vec::with_capacity(degree);
        let mut off = 0u32;
        for o in &orbits {
            perm.extend((0..o.len()).map(|c| a5.act_on_coset(o, g, c) as u32 + off));
            off += o.len() as u32;
        }
        SignedPerm::from_perm(perm)
    };
    let name = if mesh { "IcosahedralMesh" } else { "Icosahedral" };
    build(name, degree, vec![induced(ia)?, induced(ib)?])
}

/// Even products of the transpositions `(2i, 2i+1)`, generated by `t_1 t_j`.
pub fn binprod_group(m: usize) -> Result<Group> {
    if m < 8 || !m.is_power_of_two() {
        return Err(Error::BadDimension(format!("m = {m} must be a power of two, at least 8")));
    }
    let t = |j: usize| cyc(m, &[&[2 * j as u32, 2 * j as u32 + 1]]);
    let gens: Vec<SignedPerm> = (1..m / 2).map(|j| t(0).compose(&t(j))).collect();
    build(&format!("BinProd{m}"), m, gens)
}
