//! Window-based transversality and stability diagnostics.
//!
//! Every asymptotic check returns `holds`, `fails` or `inconclusive` together
//! with the numeric evidence it was decided on.

mod battery;
mod dominance;
mod limits;
mod lyapunov;
mod monotone;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cauchy::CauchyError;
use crate::expr::EvalError;
use crate::ode::{InverseError, OdeError};
use crate::pmp::PmpError;

pub use battery::{run_battery, BatteryInput, TransversalityReport};
pub use dominance::{dominance_controls, fit_dominance, fit_exponential_dominance, DominanceFit, DominanceReport, DOMINANCE_MIN_RATE};
pub use limits::{
    check_plain_limit, check_subsequence_limit, check_weighted_limit, ConditionCheck, LimitMode, SAMPLES_PER_WINDOW,
};
pub use lyapunov::{
    lyapunov_exponents, LyapunovEstimate, DEFAULT_LYAPUNOV_HORIZON, DEFAULT_LYAPUNOV_STEP, LYAPUNOV_BURN_IN,
};
pub use monotone::{monotone_analysis, MonotoneReport, ProbeGrid, Sandwich};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Fails => "fails",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum TransversalityError {
    #[error("arc on [{start}, {end}] is shorter than the required length {need}")]
    ShortArc { start: f64, end: f64, need: f64 },
    #[error("time {t} lies outside the arc span [{start}, {end}]")]
    OutsideSpan { t: f64, start: f64, end: f64 },
    #[error("span mismatch: {0}")]
    SpanMismatch(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("reorthonormalization broke down at t = {t}")]
    Reorthonormalization { t: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Inverse(#[from] InverseError),
    #[error(transparent)]
    Pmp(#[from] PmpError),
    #[error(transparent)]
    Cauchy(#[from] CauchyError),
    #[error("report parse error: {0}")]
    Parse(String),
}
