use std::io::{BufRead, IsTerminal};
use std::path::PathBuf;

use clap::Args;

use gdnn_core::admissibility::Calculus;
use gdnn_core::{Architecture, ArchitectureSpec, GroupRef, SubgroupPair};

use crate::{calc, done, load_spec, CmdResult, Failure};

#[derive(Args)]
pub struct BuildArgs {
    /// Validate this spec instead of building one.
    #[arg(long, conflicts_with = "group")]
    spec: Option<PathBuf>,
    /// Also require one irrep per layer with strictly decreasing degree.
    #[arg(long)]
    counting: bool,
    /// Group to build over; layers are read from stdin, one per line, as `id` or `idxmult` tokens.
    #[arg(long)]
    group: Option<String>,
    #[arg(long, default_value_t = 1)]
    channels: usize,
    #[arg(long)]
    batchnorm: bool,
    /// Only offer irreps of smaller degree than every irrep of the previous layer.
    #[arg(long)]
    strict_decrease: bool,
    /// Print the admissible candidates before each layer (default when stdin is a terminal).
    #[arg(long)]
    list: bool,
}

pub fn run(a: &BuildArgs) -> CmdResult {
    match (&a.spec, &a.group) {
        (Some(path), _) => validate(path, a.counting),
        (None, Some(group)) => interactive(a, group),
        (None, None) => Err(Failure::new(2, "either --spec or --group is required")),
    }
}

fn validate(path: &PathBuf, counting: bool) -> CmdResult {
    let (_, arch) = load_spec(path)?;
    if counting {
        arch.validate_counting_mode()?;
    }
    let c = Calculus::new(arch.group.clone());
    let report = arch.check(&c)?;
    if !report.admissible {
        let layer = report.failing_layer.unwrap_or(1);
        return Err(Failure::new(
            1,
            format!("NotAdmissible: layer {layer}, irrep {}", report.failing_irrep.unwrap_or(0)),
        ));
    }
    done(arch.to_spec().to_json_pretty())
}

fn parse_layer(line: &str, classes: usize) -> Result<Vec<(usize, usize)>, String> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    for tok in line.split_whitespace() {
        let (id, mult) = match tok.split_once('x') {
            Some((i, m)) => (i, m),
            None => (tok, "1"),
        };
        let id: usize = id.parse().map_err(|_| format!("bad pair id in {tok:?}"))?;
        let mult: usize = mult.parse().map_err(|_| format!("bad multiplicity in {tok:?}"))?;
        if id >= classes {
            return Err(format!("unknown pair id {id}"));
        }
        if mult == 0 {
            return Err(format!("zero multiplicity in {tok:?}"));
        }
        if out.iter().any(|&(j, _)| j == id) {
            return Err(format!("pair id {id} repeated"));
        }
        out.push((id, mult));
    }
    if out.is_empty() {
        return Err("empty layer".into());
    }
    Ok(out)
}

fn interactive(a: &BuildArgs, group: &str) -> CmdResult {
    let c = calc(group)?;
    let g = c.group().clone();
    let terminal = std::io::stdin().is_terminal();
    let classes = g.pair_classes();
    let full = g.full();
    let mut layers: Vec<Vec<(SubgroupPair, usize)>> = Vec::new();
    let pairs_of = |layers: &[Vec<(SubgroupPair, usize)>]| -> Vec<Vec<SubgroupPair>> {
        layers.iter().map(|l| l.iter().map(|x| x.0).collect()).collect()
    };
    let stdin = std::io::stdin();
    let mut lines = stdin.lock().lines();
    loop {
        let prefix = pairs_of(&layers);
        eprintln!("layer {}: pair ids as `id` or `idxmult`; the trivial pair ends the architecture", layers.len() + 1);
        if a.list || terminal {
            for cand in c.admissible_next(&prefix, a.strict_decrease)? {
                let p = &classes[cand.class_index].rep;
                eprintln!(
                    "  {:>6}  degree {:>4}  type {}  |H| {:>4}  |K| {:>4}",
                    cand.class_index,
                    cand.degree,
                    cand.irrep_type,
                    p.h.len(),
                    p.k.len()
                );
            }
        }
        let Some(line) = lines.next() else {
            return Err(Failure::new(1, "input ended before the trivial layer"));
        };
        let line = line.map_err(|e| Failure::new(1, e.to_string()))?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let chosen = match parse_layer(line, classes.len()) {
            Ok(c) => c,
            Err(e) if terminal => {
                eprintln!("  {e}");
                continue;
            }
            Err(e) => return Err(Failure::new(1, e)),
        };
        let layer: Vec<(SubgroupPair, usize)> = chosen.iter().map(|&(i, m)| (classes[i].rep, m)).collect();
        let bound = layers.last().and_then(|l| l.iter().map(|(p, _)| g.order() / p.h.len()).min());
        if a.strict_decrease && bound.is_some_and(|b| layer.iter().any(|(p, _)| g.order() / p.h.len() >= b)) {
            let msg = "degree does not decrease";
            if terminal {
                eprintln!("  {msg}");
                continue;
            }
            return Err(Failure::new(1, msg));
        }
        let mut trial = prefix.clone();
        trial.push(layer.iter().map(|x| x.0).collect());
        let report = c.is_admissible(&trial)?;
        if !report.admissible {
            let bad = report.checks.iter().find(|ch| !ch.ok);
            let msg = match bad {
                Some(ch) => format!(
                    "NotAdmissible: layer {}, irrep {}: phi has {} elements, K has {}",
                    ch.layer,
                    ch.irrep,
                    ch.phi.len(),
                    ch.expected_k.len()
                ),
                None => "NotAdmissible: the input has no invariant component".to_string(),
            };
            if terminal {
                eprintln!("  {msg}");
                continue;
            }
            return Err(Failure::new(1, msg));
        }
        let ends = layer.len() == 1 && layer[0].0.h == full && layer[0].0.k == full;
        layers.push(layer);
        if ends {
            break;
        }
    }
    let spec = ArchitectureSpec::from_pairs(GroupRef::Name(g.name().to_string()), &layers, a.channels, a.batchnorm);
    let arch = Architecture::resolve_in(&spec, g.clone())?;
    if a.counting {
        arch.validate_counting_mode()?;
    }
    c.persist()?;
    done(arch.to_spec().to_json_pretty())
}
