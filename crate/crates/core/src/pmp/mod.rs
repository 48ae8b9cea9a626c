//! Hamilton–Pontryagin function, the maximum condition, and the
//! finite-horizon truncation scheme producing candidate extremals.
//!
//! With `H(x, t, u, λ, ψ) = ψ·f(t, x, u) + λ·g(t, x, u)` an extremal
//! `(x, u, λ, ψ)` solves the state equation, the adjoint equation
//! `ψ' = -∂H/∂x`, the maximum condition `H(u(t)) = max_{v ∈ U(t)} H(v)`, and
//! is normalized by `‖ψ(0)‖ + λ = 1`.

mod maximize;
mod omega;
mod sweep;
mod truncation;

use thiserror::Error;

use crate::expr::EvalError;
use crate::ode::{AdjointArc, OdeError, Trajectory};
use crate::problem::{ControlProblem, ReferenceControl};

pub use maximize::{maximize_hamiltonian, maximize_over};
pub use omega::{bang_pool, estimate_omega, OmegaEstimate, Perturbation};
pub use sweep::{max_residual, solve_finite_horizon, SweepOptions};
pub use truncation::{run_truncation, TruncationEntry, TruncationOptions, TruncationRun};

#[derive(Debug, Error)]
pub enum PmpError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error("degenerate multipliers: λ = 0 and ψ(0) = 0")]
    DegenerateMultipliers,
    #[error("control set U({t}) is empty")]
    EmptyControlSet { t: f64 },
    #[error("invalid horizon {0}")]
    InvalidHorizon(f64),
    #[error("invalid horizon sequence: {0}")]
    InvalidSequence(String),
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error("problem has no reference control")]
    MissingReference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Finite(f64),
    Infinite,
}

/// Quadratic deviation penalty `γ‖u - u⁰(t)‖²` added to the sweep objective.
#[derive(Debug, Clone)]
pub struct Penalty {
    pub gamma: f64,
    pub reference: ReferenceControl,
}

impl Penalty {
    pub(crate) fn weight(&self, t: f64, x: &[f64], u: &[f64]) -> Result<f64, EvalError> {
        let r = self.reference.value(t, x, None)?;
        Ok(u.iter().zip(&r).map(|(a, b)| (a - b).powi(2)).sum())
    }
}

/// Candidate extremal `(x, u, λ, ψ)`.
#[derive(Debug, Clone)]
pub struct Extremal {
    pub x: Trajectory,
    pub u: ReferenceControl,
    pub lambda: f64,
    pub psi: AdjointArc,
    pub horizon: Horizon,
    /// Sup over the construction grid of `max H - H(u)`.
    pub max_residual: f64,
    /// Nodes at which the maximum condition was imposed.
    pub grid: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Penalized objective after each accepted sweep iteration.
    pub objective: Vec<f64>,
    pub penalty: Option<Penalty>,
}

pub fn hamiltonian(
    p: &ControlProblem,
    x: &[f64],
    t: f64,
    u: &[f64],
    lambda: f64,
    psi: &[f64],
) -> Result<f64, EvalError> {
    let mut h = 0.0;
    if psi.iter().any(|v| *v != 0.0) {
        let f = p.f(t, x, u)?;
        h += psi.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>();
    }
    if lambda != 0.0 {
        h += lambda * p.g(t, x, u)?;
    }
    Ok(h)
}

/// Rescale `(λ_raw, ψ)` by `1/(λ_raw + ‖ψ(0)‖)`.
pub fn normalize(lambda_raw: f64, psi: &AdjointArc) -> Result<(f64, AdjointArc), PmpError> {
    let n0 = crate::ode::vector_norm(psi.node(0));
    let s = lambda_raw + n0;
    if !(s > 0.0) || !s.is_finite() {
        return Err(PmpError::DegenerateMultipliers);
    }
    Ok((lambda_raw / s, psi.scaled(1.0 / s)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::DenseArc;
    use crate::problem::builtin;

    fn constant_arc(v: &[f64]) -> AdjointArc {
        let d = v.len();
        let mut values = v.to_vec();
        values.extend_from_slice(v);
        AdjointArc::new(DenseArc::from_nodes(d, vec![0.0, 1.0], values, &vec![0.0; 2 * d]))
    }

    #[test]
    fn hamiltonian_examples() {
        let p = builtin("halkin").unwrap();
        assert_eq!(hamiltonian(&p, &[0.3], 1.0, &[0.7], 0.0, &[0.0]).unwrap(), 0.0);
        assert_eq!(hamiltonian(&p, &[0.0], 0.0, &[1.0], 0.5, &[-0.5]).unwrap(), 0.0);
        let s = builtin("scalar-exp").unwrap();
        assert_eq!(hamiltonian(&s, &[0.0], 0.0, &[1.0], 1.0, &[1.0]).unwrap(), 2.0);
    }

    #[test]
    fn normalize_examples() {
        let (l, psi) = normalize(1.0, &constant_arc(&[1.0])).unwrap();
        assert_eq!(l, 0.5);
        assert_eq!(psi.node(0), &[0.5]);
        let (l, psi) = normalize(0.0, &constant_arc(&[3.0, 4.0])).unwrap();
        assert_eq!(l, 0.0);
        assert!((crate::ode::vector_norm(psi.node(0)) - 1.0).abs() < 1e-15);
        assert!(matches!(
            normalize(0.0, &constant_arc(&[0.0])),
            Err(PmpError::DegenerateMultipliers)
        ));
    }
}
