//! Ground states of a quasilinear Schrödinger system with a potential,
//! found by minimizing the energy over a Nehari–Pohožaev type manifold
//! within a dihedral-symmetric class.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod fibering;
pub mod field;
pub mod functional;
pub mod io;
pub mod potential;
pub mod precond;
pub mod solver;
pub mod symmetry;
#[doc(hidden)]
pub mod testing;

pub use analysis::{diagnose, gradient_audit, nodal_domains, weak_residual, Diagnosis, NodalReport};
pub use fibering::{find_tbar, project_to_M, FiberCoefficients, FiberError, Projection};
pub use field::{distance_h, distance_x, resample, scale_field, Field, FieldError, Grid, Pair};
pub use functional::{
    breakdown, constraint_g, coupling, energy_i, grad_g, grad_i, pohozaev_p, reduced_j, ConstraintVariant,
    EnergyBreakdown, Evaluator, ParamError, Params, Weights,
};
pub use potential::{check_conditions, ConditionReport, ConditionResult, PotentialError, PotentialModel, SampleSet};
pub use solver::{
    estimate_m, initial_seed, minimize, minimize_from, multistart, MEstimate, SeedProfile, SolveError, SolveReport,
    SolverConfig, Termination,
};
pub use symmetry::{
    act, build_group, equivariance_defect, symmetrize, symmetrize_pair, DihedralGroup, GroupElement, SymmetryError,
};
