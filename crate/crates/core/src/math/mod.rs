//! Numerical kernels shared by the unlearning algorithms.

mod ops;
mod param;
mod solve;

pub use ops::{
    clip_by_norm, clip_in_place, derive_seed, finite_check, gaussian_perturb, name_hash, rng_from,
    FiniteStatus, NoiseSeed,
};
pub use param::{axpy, dot, norm, ParamVector, Segment};
pub use solve::{
    cg_solve, neumann_inverse_hvp, Damped, DenseOracle, FnOracle, HvpOracle, SolveReport,
    SolveStatus, NEUMANN_TOL,
};

/// Default relative residual tolerance for CG solves.
pub const DEFAULT_CG_TOL: f64 = 1e-5;
/// Default CG iteration cap.
pub const DEFAULT_CG_MAX_ITERS: usize = 100;
