//! Completability of inner-product-constrained vector configurations.
//!
//! Given `N` unknown vectors in `R^D` and a set Omega of pairs whose inner
//! products are fixed, this crate decides whether the constraints pin the
//! configuration up to a simultaneous rotation (local and global
//! completability), reconstructs the unique Gram matrix when it exists, and
//! sweeps completability phase diagrams over scenario grids. The motivating
//! application is self-consistent quantum tomography: deciding when measured
//! outcome probabilities plus structural side knowledge (pure states,
//! projective measurements) determine the full state-measurement geometry.

pub mod error;
pub mod global;
pub mod local;
pub mod model;
pub mod oracle;
pub mod rank;
pub mod seeding;
pub mod sweep;

pub mod io;

pub use error::{Error, Result};
pub use global::{
    build_criterion, factor_data, global_test, reconstruct_gram, recover_symmetric_unknown,
    CriterionMatrix, Factorization, GlobalVerdict, Side,
};
pub use local::{jacobian, local_test, LocalVerdict, TestBackend};
pub use model::{
    born_data, extract_knowledge, gaussian_configuration, integer_configuration,
    make_hermitian_basis, random_quantum_model, scenario_mask, vectorize, Configuration,
    DataMatrix, GramKnowledge, OmegaMask, ProblemShape, QuantumModel, Scenario,
};
pub use oracle::{
    criterion_from_factors, fd_jacobian, linear_uniqueness_oracle, orbit_distance,
    perturbation_search, PerturbationResult,
};
pub use rank::{
    finite_field_rank, rank_with_consensus, svd_rank, RankBackend, RankReport, DEFAULT_REL_TOL,
};
pub use sweep::{emit, run_sweep, CellVerdict, PhaseDiagram, SweepFormat, SweepRequest, TestKind};
