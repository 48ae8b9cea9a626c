//! Accumulated sensitivity integrals and the Cauchy-type adjoint formula.
//!
//! Along a reference pair `(x⁰, u⁰)` started from `x0 + ξ`,
//! `I_ξ(T) = ∫_0^T g_x(t, x_ξ, u⁰) A_ξ(t) dt` with `A_ξ' = f_x A_ξ`, `A_ξ(0) = I`.
//! When `I_0(T) → I_*`, the multipliers
//! `λ⁰ = 1/(1 + ‖I_*‖)` and `ψ⁰(T) = λ⁰ (I_* - I_0(T)) A⁻¹(T)`
//! form a normal extremal with `‖ψ⁰(0)‖ + λ⁰ = 1`.

mod accumulate;
mod classify;
mod formula;
mod probe;

use thiserror::Error;

use crate::expr::EvalError;
use crate::ode::{InverseError, OdeError};

pub use accumulate::{accumulate, AccumulatedArcs, AccumulatedIntegral};
pub use classify::{classify_convergence, select_limit, ConvergenceVerdict, VerdictKind, GROWTH_THRESHOLD};
pub use formula::{adjoint_ode_residual, cauchy_adjoint, verify_product_identity, CauchyAdjoint, PSI_ROUNDING_BUDGET};
pub use probe::{
    abnormality_indicator, axis_directions, continuity_probe, AbnormalityProbe, AbnormalityReport, ContinuityProbe,
    ProbeRow,
};

#[derive(Debug, Error)]
pub enum CauchyError {
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Inverse(#[from] InverseError),
    #[error("need at least {need} doubling checkpoints, have {have}")]
    InsufficientSamples { have: usize, need: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no usable limit: {0}")]
    MissingVerdict(String),
    #[error("span mismatch: {0}")]
    SpanMismatch(String),
}
