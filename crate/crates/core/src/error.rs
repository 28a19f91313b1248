use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("unsupported domain: {0}")]
    UnsupportedDomain(String),
    #[error("lattice at level {level} has no connected component with at least two sites")]
    EmptyLattice { level: u32 },
    #[error("no lattice site within alpha*2^-k of boundary patch {patch} (alpha = {alpha})")]
    AlphaTooSmall { patch: usize, alpha: f64 },
    #[error("graph-boundary site {site} is not within alpha*2^-k of any boundary patch")]
    ModeUnsatisfiable { site: usize },
    #[error("nonpositive conductance on edge ({from}, {to}); refine the lattice for this drift")]
    NonpositiveWeight { from: usize, to: usize },
    #[error("lattice has {sites} sites, above the dense-kernel cap of {cap}")]
    TooManySites { sites: usize, cap: usize },
    #[error("level mismatch: {0}")]
    MismatchedLevel(String),
    #[error("moment order {0} is not supported (1..=3)")]
    UnsupportedOrder(usize),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("finite-difference refinement did not converge: {0}")]
    NoConvergence(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
