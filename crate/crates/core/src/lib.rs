//! Solvers for two nonlinear mean field equations on connected finite
//! weighted graphs:
//!
//! * the Dirac-source equation `Δu + e^u = ρδ₀`, solvable for every `ρ > 0`
//!   by constrained minimization of `J(u) = E(u) + ρ·u(x₀)` over
//!   `{u : ∫e^u dμ = ρ}` with a Newton tail ([`dirac`]);
//! * the vortex equation `Δu = λe^u(e^u−1) + 4πΣ_j δ_{p_j}`, solved by a
//!   monotone screened iteration that converges to the maximal solution for
//!   λ above a critical value `λ_c ≥ 16πM/Vol` and detects non-existence
//!   below it; bisection brackets `λ_c` ([`vortex`]).
//!
//! [`graph`] holds the weighted graph, μ-weighted Laplacian, integration and
//! Dirac masses; [`linsolve`] the Poisson/screened/Green linear solves;
//! [`torus`] builds square-lattice quotient tori and locates the critical
//! points of their discrete Green's function; [`solution`] is the
//! machine-readable solution-file format used by the command-line tool.
//!
//! Data-parallel kernels are behind the `parallel` feature (on by default)
//! with a bit-identical sequential fallback; see [`par`].

pub mod dirac;
pub mod error;
pub mod field;
pub mod graph;
pub mod linsolve;
pub mod par;
pub mod solution;
pub mod testgen;
pub mod torus;
pub mod vortex;

pub use dirac::{DiracOptions, DiracProblem, VariationalReport};
pub use error::{Error, Result};
pub use field::VertexField;
pub use graph::{DiracSource, WeightedGraph};
pub use linsolve::{
    green_function, maximum_principle_holds, solve_poisson, solve_screened, LinearSolveReport,
    SolveMethod,
};
pub use solution::SolutionFile;
pub use torus::{
    build_torus_graph, critical_slope, find_critical_points, torus_green, CriticalClass,
    CriticalKind, CriticalPoint, CriticalPointSet, TorusGraph, TorusSpec,
};
pub use vortex::{
    estimate_lambda_c, necessary_lambda_bound, IterationTrace, LambdaCOptions, LambdaCritical,
    VortexOptions, VortexProblem, VortexReport, VortexStatus,
};
