//! Architecture specifications and their resolution against a group.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::admissibility::{AdmissibilityReport, Calculus};
use crate::bits::ElemSet;
use crate::error::{Error, Result};
use crate::group::{Group, GroupJson, SubgroupPair};
use crate::named;
use crate::reps::{equivalent, Irrep};

/// A group given by name or inline generators.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroupRef {
    Name(String),
    Inline(GroupJson),
}

impl GroupRef {
    pub fn resolve(&self) -> Result<Arc<Group>> {
        match self {
            GroupRef::Name(n) => named::shared(n),
            GroupRef::Inline(j) => Ok(Arc::new(Group::from_json(j)?)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IrrepSpec {
    #[serde(rename = "H")]
    pub h: Vec<usize>,
    #[serde(rename = "K")]
    pub k: Vec<usize>,
    #[serde(default = "one")]
    pub mult: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub irreps: Vec<IrrepSpec>,
}

/// Wire form of an architecture. `channels` is the number of input channels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub group: GroupRef,
    pub layers: Vec<LayerSpec>,
    #[serde(default = "one")]
    pub channels: usize,
    #[serde(default)]
    pub batchnorm: bool,
}

impl ArchitectureSpec {
    pub fn from_pairs(group: GroupRef, layers: &[Vec<(SubgroupPair, usize)>], channels: usize, batchnorm: bool) -> Self {
        ArchitectureSpec {
            group,
            layers: layers
                .iter()
                .map(|l| LayerSpec {
                    irreps: l.iter().map(|(p, k)| IrrepSpec { h: p.h.to_vec(), k: p.k.to_vec(), mult: *k }).collect(),
                })
                .collect(),
            channels,
            batchnorm,
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }
}

/// An architecture with its irreps constructed.
#[derive(Clone, Debug)]
pub struct Architecture {
    pub group: Arc<Group>,
    pub group_ref: GroupRef,
    pub layers: Vec<Vec<(Irrep, usize)>>,
    pub input_channels: usize,
    pub batchnorm: bool,
}

fn to_set(group: &Group, v: &[usize]) -> Result<ElemSet> {
    if let Some(&bad) = v.iter().find(|&&x| x >= group.order()) {
        return Err(Error::InvalidArchitecture(format!("element index {bad} out of range")));
    }
    Ok(ElemSet::from_indices(v.iter().copied()))
}

impl Architecture {
    /// Builds irreps and checks structure: nonempty layers, inequivalent irreps per layer,
    /// positive multiplicities and a trivial final layer.
    pub fn resolve(spec: &ArchitectureSpec) -> Result<Architecture> {
        let group = spec.group.resolve()?;
        Self::resolve_in(spec, group)
    }

    pub fn resolve_in(spec: &ArchitectureSpec, group: Arc<Group>) -> Result<Architecture> {
        if spec.layers.is_empty() {
            return Err(Error::InvalidArchitecture("at least the trivial output layer is required".into()));
        }
        if spec.channels == 0 {
            return Err(Error::InvalidArchitecture("input channels must be positive".into()));
        }
        let mut layers = Vec::new();
        for (li, l) in spec.layers.iter().enumerate() {
            if l.irreps.is_empty() {
                return Err(Error::InvalidArchitecture(format!("layer {} is empty", li + 1)));
            }
            let mut irreps: Vec<(Irrep, usize)> = Vec::new();
            for s in &l.irreps {
                if s.mult == 0 {
                    return Err(Error::InvalidArchitecture(format!("layer {} has a zero multiplicity", li + 1)));
                }
                let pair = SubgroupPair::new(to_set(&group, &s.h)?, to_set(&group, &s.k)?)?;
                let rep = Irrep::new(&group, pair)?;
                if irreps.iter().any(|(r, _)| equivalent(&group, r, &rep)) {
                    return Err(Error::InvalidArchitecture(format!("layer {} repeats an irrep class", li + 1)));
                }
                irreps.push((rep, s.mult));
            }
            layers.push(irreps);
        }
        let last = layers.last().unwrap();
        if last.len() != 1 || !last[0].0.is_trivial_rep() {
            return Err(Error::InvalidArchitecture("the final layer must be the trivial representation".into()));
        }
        Ok(Architecture {
            group,
            group_ref: spec.group.clone(),
            layers,
            input_channels: spec.channels,
            batchnorm: spec.batchnorm,
        })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn pairs(&self) -> Vec<Vec<SubgroupPair>> {
        self.layers.iter().map(|l| l.iter().map(|(r, _)| *r.pair()).collect()).collect()
    }

    pub fn layer_degree(&self, i: usize) -> usize {
        self.layers[i].iter().map(|(r, k)| r.degree() * k).sum()
    }

    pub fn to_spec(&self) -> ArchitectureSpec {
        let layers: Vec<Vec<(SubgroupPair, usize)>> =
            self.layers.iter().map(|l| l.iter().map(|(r, k)| (*r.pair(), *k)).collect()).collect();
        ArchitectureSpec::from_pairs(self.group_ref.clone(), &layers, self.input_channels, self.batchnorm)
    }

    pub fn check(&self, calc: &Calculus) -> Result<AdmissibilityReport> {
        calc.is_admissible(&self.pairs())
    }

    /// Single irrep of multiplicity one per layer with strictly decreasing degrees.
    pub fn validate_counting_mode(&self) -> Result<()> {
        let mut prev = usize::MAX;
        for (i, l) in self.layers.iter().enumerate() {
            if l.len() != 1 || l[0].1 != 1 {
                return Err(Error::InvalidArchitecture(format!(
                    "layer {} must hold a single irrep of multiplicity one",
                    i + 1
                )));
            }
            let d = l[0].0.degree();
            if d >= prev {
                return Err(Error::InvalidArchitecture(format!("layer {} does not decrease the degree", i + 1)));
            }
            prev = d;
        }
        Ok(())
    }
}
