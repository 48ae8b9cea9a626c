//! Infinite-horizon control problems `ẋ = f(t,x,u)`, `x(0) = x0`, payoff `∫ g(t,x,u) dt`.

mod builtin;
mod config;
mod control;
mod validate;

use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::expr::{EvalError, Expr, ExprError};

pub use builtin::{builtin, builtin_catalog, BuiltinInfo, BUILTIN_NAMES};
pub use config::{load_problem, save_problem, BoundSpec, ControlSpec, ProblemSpec};
pub use control::{ControlSet, ReferenceControl};
pub use validate::{validate, CheckResult, ValidationReport};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("in `{field}`: {source}")]
    Parse {
        field: String,
        #[source]
        source: ExprError,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid value for `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("malformed problem document: {0}")]
    Document(String),
    #[error("unknown builtin `{name}`; available: {}", available.join(", "))]
    UnknownBuiltin {
        name: String,
        available: Vec<String>,
    },
}

/// Symbol table `t, x1..xm, u1..uk` shared by dynamics and payoff.
pub fn problem_symbols(state_dim: usize, control_dim: usize) -> Arc<[String]> {
    let mut s = vec!["t".to_string()];
    s.extend((1..=state_dim).map(|i| format!("x{i}")));
    s.extend((1..=control_dim).map(|i| format!("u{i}")));
    s.into()
}

/// Symbol table `t, x1..xm` for control laws.
pub fn law_symbols(state_dim: usize) -> Arc<[String]> {
    let mut s = vec!["t".to_string()];
    s.extend((1..=state_dim).map(|i| format!("x{i}")));
    s.into()
}

pub fn time_symbols() -> Arc<[String]> {
    vec!["t".to_string()].into()
}

/// A validated control problem. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    label: String,
    state_dim: usize,
    control_dim: usize,
    dynamics: Vec<Expr>,
    payoff: Expr,
    control_set: ControlSet,
    x0: Vec<f64>,
    reference: Option<ReferenceControl>,
    // deps[i][j]: dynamics[i] mentions x_j
    dynamics_deps: Vec<Vec<bool>>,
    payoff_deps: Vec<bool>,
}

impl ControlProblem {
    pub fn from_spec(spec: &ProblemSpec) -> Result<Self, ProblemError> {
        config::build(spec)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        label: String,
        state_dim: usize,
        control_dim: usize,
        dynamics: Vec<Expr>,
        payoff: Expr,
        control_set: ControlSet,
        x0: Vec<f64>,
        reference: Option<ReferenceControl>,
    ) -> Self {
        let dynamics_deps = dynamics
            .iter()
            .map(|e| (0..state_dim).map(|j| e.depends_on(1 + j)).collect())
            .collect();
        let payoff_deps = (0..state_dim).map(|j| payoff.depends_on(1 + j)).collect();
        Self {
            label,
            state_dim,
            control_dim,
            dynamics,
            payoff,
            control_set,
            x0,
            reference,
            dynamics_deps,
            payoff_deps,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }
    pub fn control_dim(&self) -> usize {
        self.control_dim
    }
    pub fn dynamics(&self) -> &[Expr] {
        &self.dynamics
    }
    pub fn payoff(&self) -> &Expr {
        &self.payoff
    }
    pub fn control_set(&self) -> &ControlSet {
        &self.control_set
    }
    pub fn x0(&self) -> &[f64] {
        &self.x0
    }
    pub fn reference(&self) -> Option<&ReferenceControl> {
        self.reference.as_ref()
    }

    /// Same problem started from `x0`.
    pub fn with_x0(&self, x0: Vec<f64>) -> Result<Self, ProblemError> {
        if x0.len() != self.state_dim {
            return Err(ProblemError::Dimension(format!(
                "x0 has length {} but state_dim is {}",
                x0.len(),
                self.state_dim
            )));
        }
        Ok(Self {
            x0,
            ..self.clone()
        })
    }

    pub fn with_reference(&self, reference: Option<ReferenceControl>) -> Self {
        Self {
            reference,
            ..self.clone()
        }
    }

    fn env(&self, t: f64, x: &[f64], u: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.state_dim);
        debug_assert_eq!(u.len(), self.control_dim);
        let mut env = Vec::with_capacity(1 + x.len() + u.len());
        env.push(t);
        env.extend_from_slice(x);
        env.extend_from_slice(u);
        env
    }

    pub fn f_into(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let env = self.env(t, x, u);
        for (o, e) in out.iter_mut().zip(&self.dynamics) {
            *o = e.eval(&env)?;
        }
        Ok(())
    }

    pub fn f(&self, t: f64, x: &[f64], u: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.state_dim];
        self.f_into(t, x, u, &mut out)?;
        Ok(out)
    }

    pub fn g(&self, t: f64, x: &[f64], u: &[f64]) -> Result<f64, EvalError> {
        self.payoff.eval(&self.env(t, x, u))
    }

    /// `∂f/∂x` with entry `(i, j) = ∂f_i/∂x_j`, built column by column.
    pub fn f_x(&self, t: f64, x: &[f64], u: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let env = self.env(t, x, u);
        let m = self.state_dim;
        let mut jac = DMatrix::zeros(m, m);
        for j in 0..m {
            for (i, e) in self.dynamics.iter().enumerate() {
                if self.dynamics_deps[i][j] {
                    jac[(i, j)] = e.eval_dual(&env, 1 + j)?.derivative;
                }
            }
        }
        Ok(jac)
    }

    /// `∂g/∂x` as a row (length `m`).
    pub fn g_x(&self, t: f64, x: &[f64], u: &[f64]) -> Result<Vec<f64>, EvalError> {
        let env = self.env(t, x, u);
        (0..self.state_dim)
            .map(|j| {
                if self.payoff_deps[j] {
                    Ok(self.payoff.eval_dual(&env, 1 + j)?.derivative)
                } else {
                    Ok(0.0)
                }
            })
            .collect()
    }
}
