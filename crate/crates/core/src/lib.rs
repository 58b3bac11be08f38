//! Exact signed-permutation groups, their irreducible signed permutation
//! representations, and densely connected invariant ReLU networks built on them.

pub mod admissibility;
pub mod arch;
pub mod audit;
pub mod basis;
pub mod binprod;
pub mod bits;
pub mod dense;
pub mod error;
pub mod grad;
pub mod group;
pub mod model;
pub mod named;
pub mod optim;
pub mod perm;
pub mod rational;
pub mod reps;

pub use arch::{Architecture, ArchitectureSpec, GroupRef};
pub use bits::ElemSet;
pub use dense::Mat;
pub use error::{Error, Result};
pub use group::{Group, PairClass, Subgroup, SubgroupPair};
pub use model::{Admission, LatentWeights, Mode, Model};
pub use perm::SignedPerm;
pub use rational::RationalMatrix;
