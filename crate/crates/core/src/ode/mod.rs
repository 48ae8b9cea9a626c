//! Adaptive integration of state, adjoint and fundamental-matrix equations.

mod arc;
mod dopri;
mod systems;

use thiserror::Error;

use crate::expr::EvalError;

pub use arc::{vector_columns, vector_norm, AdjointArc, DenseArc, MatrixArc, Trajectory};
pub use dopri::{solve, OdeSystem};
pub use systems::{
    fundamental_matrix, integrate_adjoint_backward, integrate_state, integrate_state_with_payoff,
    inverse_at, InverseError, COND_LIMIT,
};
pub(crate) use systems::{checked_inverse, matrix_scale, one_norm};

/// A closed integration interval `[start, end]` with `start < end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
}

impl Segment {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.start + self.end)
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeOptions {
    pub atol: f64,
    pub rtol: f64,
    /// Abort once the monitored norm exceeds this value.
    pub blowup: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            atol: 1e-10,
            rtol: 1e-8,
            blowup: 1e12,
            max_step: f64::INFINITY,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("solution norm exceeded the blow-up threshold at t = {t}")]
    BlowUp { t: f64 },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("step budget exhausted at t = {t}")]
    TooManySteps { t: f64 },
    #[error("non-finite value at t = {t}")]
    NonFinite { t: f64 },
    #[error("right-hand side failed at t = {t}: {source}")]
    Rhs {
        t: f64,
        #[source]
        source: EvalError,
    },
    #[error("invalid integration span [{start}, {end}]")]
    InvalidSpan { start: f64, end: f64 },
    #[error("initial value has length {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
}
