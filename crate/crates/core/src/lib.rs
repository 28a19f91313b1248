//! Lattice random-walk approximation of reflected Brownian motion and its
//! boundary local time.
//!
//! The crate builds dyadic lattice domains inside intervals, boxes and convex
//! polygons, decomposes the boundary into small patches, simulates simple and
//! conductance-biased walks, and accumulates the discrete boundary local time
//! `L^(k)` along their paths. Exact discrete quantities (transition kernels,
//! moments of local-time functionals, Feynman–Kac expectations) are computed
//! by uniformization, and continuum references come from the Neumann heat
//! kernel and a Crank–Nicolson solver.
//!
//! Every numerical routine is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the precision to `f64`.

pub mod error;
pub mod fd;
pub mod fk_solver;
pub mod geometry;
pub mod kernel;
pub mod localtime;
pub mod moments;
pub mod partition;
pub mod quadrature;
pub mod scalar;
pub mod uniformization;
pub mod walker;

pub use error::{Error, Result};
pub use fd::{fd_oracle, solve_on_grid, FdOptions, FdSolution};
pub use fk_solver::{
    convergence_study, convergence_study_with, estimate_u, exact_u, path_functional, Coefficient, ConvergenceRow, ConvergenceTable,
    FkDiscretization, McEstimate, RobinProblem, WalkerSpec,
};
pub use geometry::{build_lattice, BoundaryPiece, Domain, DomainKind, LatticeDomain};
pub use kernel::{
    boundary_sum, graph_boundary_sum, llt_error, parity_averaged_density, transition_density, verify_bounds,
    BoundsOptions, BoundsReport, DiscreteKernel, ReferenceKernel,
};
pub use localtime::{accumulate, BoundaryWeights, LocalTimeTrajectory};
pub use moments::{
    example54_ratios, exact_moment_continuum, exact_moment_discrete, increment_scaling, mc_moment, BoundaryData,
    Example54, MomentSpec, ScalingReport, StartLaw,
};
pub use partition::{assign_patches, build_partition, default_alpha, Assignment, AssignmentMode, Partition};
pub use scalar::Scalar;
pub use uniformization::Uniformized;
pub use walker::{simulate_path, Path, Start, TimeMode, WalkConfig};

/// Double-precision scalar used by the concrete aliases.
pub type Real = f64;
pub type Domain64 = Domain<Real>;
pub type Lattice64 = LatticeDomain<Real>;
pub type Partition64 = Partition<Real>;
pub type Assignment64 = Assignment<Real>;
pub type Weights64 = BoundaryWeights<Real>;
pub type Walk64 = WalkConfig<Real>;
pub type Path64 = Path<Real>;
pub type Kernel64 = DiscreteKernel<Real>;
pub type Robin64 = RobinProblem<Real>;
