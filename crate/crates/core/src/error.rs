use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("group closure exceeded the cap of {0} elements")]
    CapExceeded(usize),
    #[error("generator has degree {got}, expected {expected}")]
    DegreeMismatch { expected: usize, got: usize },
    #[error("not a signed permutation: {0}")]
    InvalidElement(String),
    #[error("unknown group name: {0}")]
    UnknownName(String),
    #[error("bad dimension: {0}")]
    BadDimension(String),
    #[error("invalid subgroup pair: {0}")]
    InvalidPair(String),
    #[error("partition does not cover the coset space exactly once")]
    PartitionInvalid,
    #[error("vector is not in the fixed space of the pair")]
    NotInFixedSpace,
    #[error("representation has sign flips where an ordinary permutation is required")]
    NotOrdinaryPerm,
    #[error("oracle size cap exceeded: {entries} entries > {cap}")]
    SizeCap { entries: usize, cap: usize },
    #[error("prefix is not admissible (layer {0})")]
    PrefixNotAdmissible(usize),
    #[error("architecture is not admissible: layer {layer}, irrep {irrep}")]
    NotAdmissible { layer: usize, irrep: usize },
    #[error("every block of layer {0} has an empty basis")]
    BasisEmpty(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("matrix is not equivariant (deviation {0:e})")]
    NotEquivariant(f64),
    #[error("latent block falls outside the basis span (residual {0:e})")]
    NotInSpan(f64),
    #[error("unknown initialization scheme: {0}")]
    UnknownScheme(String),
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
