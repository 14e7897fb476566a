//! Fixed-point solvers for `dU + A(t)U dt = (F(t,U) + f) dt + (B(t,U) + b) dW`.
//!
//! Each window is solved by Picard iteration of the exponential-integrator
//! map or by its forward recursion; both reach the same discrete fixed
//! point. Pieces are glued by restarting from the previous endpoint.

mod engine;
mod freeze;
mod local;
mod picard;
mod problem;
mod residual;

pub use freeze::{exact_linear_timedep, freeze_timedep_solve, FreezePartition};
pub use local::{local_solve, stopped_convolution_check, StoppedCheck};
pub use picard::{
    forward_solve, glue_solve, picard_solve, picard_solve_from, split_horizon, uniform_partition, PicardOptions, SolveMethod,
};
pub use problem::{
    contraction_margin, validate_constants, Diffusion, Drift, FnDiffusion, FnDrift, LipschitzConstants, Margin, OperatorFamily,
    ProblemSpec, RateProfile, ValidationReport,
};
pub use residual::strong_residual;
