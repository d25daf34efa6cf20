//! Deciding locality of bipartite no-signalling behaviors and quantifying
//! nonlocality as the minimal negativity of a hidden-variable
//! quasi-probability. Two solvers are provided: a smoothed first-order
//! sparse-recovery method working in a rotated product basis, and an
//! exact-arithmetic-free LP baseline built on a dense revised simplex.

pub mod behavior;
pub mod corrbasis;
pub mod detcomp;
pub mod lp_baseline;
pub mod mat;
pub mod quantify;
pub mod sparse_solver;

pub use behavior::{make_family, mix, Behavior, BehaviorError, Family, Party, Scenario};
pub use corrbasis::{
    chsh_correlation, from_correlation_basis, min_l2_quasiprob, to_correlation_basis,
    z0_from_behavior, CorrVector, FixedCoords,
};
pub use detcomp::{
    apply_deterministic, decompose_signed, decompose_stochastic, rotation_matrix, svd_factors,
    Assignment, QuasiProb, SvdFactors,
};
pub use lp_baseline::{is_local, min_l1_quasiprob_lp, ns_distance, LpError};
pub use quantify::{
    benchmark_scaling, compare_neg_ns, critical_visibility, fit_exp, neg_of_behavior, ExpFit,
    Method, QuantifyError,
};
pub use sparse_solver::{negativity, nesta_solve, SolverConfig, SolverResult};
