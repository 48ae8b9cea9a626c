use serde::{Deserialize, Serialize};

use super::limits::{check_plain_limit, check_subsequence_limit, check_weighted_limit, ConditionCheck, LimitMode};
use super::{
    dominance_controls, fit_exponential_dominance, lyapunov_exponents, DominanceReport, LyapunovEstimate,
    MonotoneReport, TransversalityError, Verdict, DEFAULT_LYAPUNOV_HORIZON, DEFAULT_LYAPUNOV_STEP,
};
use crate::ode::{AdjointArc, MatrixArc, OdeOptions};
use crate::problem::{ControlProblem, ReferenceControl};

const DOMINANCE_SAMPLE: usize = 8;

pub struct BatteryInput<'a> {
    /// Normalized adjoint of the candidate extremal.
    pub psi: &'a AdjointArc,
    pub lambda: f64,
    /// Matrix weight, by default the fundamental matrix along the reference.
    pub a: &'a MatrixArc,
    pub taus: Vec<f64>,
    pub tol: f64,
    /// Precomputed dominance fit; otherwise one is run along `u0` and
    /// seeded window perturbations of it when a reference is given.
    pub dominance: Option<DominanceReport>,
    pub monotone: Option<MonotoneReport>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransversalityReport {
    pub problem: String,
    pub tol: f64,
    pub lambda: f64,
    pub psi0: Vec<f64>,
    pub span: (f64, f64),
    pub conditions: Vec<ConditionCheck>,
    pub exp: Option<DominanceReport>,
    pub lyapunov: Option<LyapunovEstimate>,
    pub monotone: Option<MonotoneReport>,
    pub notes: Vec<String>,
}

impl TransversalityReport {
    pub fn verdict(&self, condition: &str) -> Option<Verdict> {
        match condition {
            "exp" => self.exp.as_ref().map(|d| {
                if d.aggregate.holds {
                    Verdict::Holds
                } else {
                    Verdict::Fails
                }
            }),
            "monotone" => self.monotone.as_ref().map(|m| match (m.psi_nonnegative, &m.sandwich) {
                (None, _) => Verdict::Inconclusive,
                (Some(false), _) => Verdict::Fails,
                (Some(true), Some(s)) if !s.holds => Verdict::Fails,
                (Some(true), _) => Verdict::Holds,
            }),
            c => self.conditions.iter().find(|e| e.condition == c).map(|e| e.verdict),
        }
    }

    /// `condition=verdict;...` over every evaluated condition.
    pub fn summary_line(&self) -> String {
        let mut names: Vec<&str> = self.conditions.iter().map(|c| c.condition.as_str()).collect();
        names.extend(["exp", "monotone"]);
        names
            .into_iter()
            .filter_map(|n| self.verdict(n).map(|v| format!("{n}={v}")))
            .collect::<Vec<_>>()
            .join(";")
    }

    /// Summary line as a comment, then the report as TOML.
    pub fn to_text(&self) -> String {
        let body = toml::to_string(self).expect("report serializes");
        format!("# {}\n{body}", self.summary_line())
    }

    pub fn from_text(text: &str) -> Result<Self, TransversalityError> {
        toml::from_str(text).map_err(|e| TransversalityError::Parse(e.to_string()))
    }
}

fn or_inconclusive(condition: &str, tol: f64, r: Result<ConditionCheck, TransversalityError>) -> ConditionCheck {
    r.unwrap_or_else(|e| ConditionCheck {
        condition: condition.into(),
        verdict: Verdict::Inconclusive,
        tol,
        windows: Vec::new(),
        evidence: Vec::new(),
        subsequence: Vec::new(),
        note: format!("error: {e}"),
    })
}

/// Runs (trans), (partlim), (partlim_1), (lim), (exp) and the Lyapunov and
/// monotone diagnostics, then cross-checks the verdicts.
pub fn run_battery(
    p: &ControlProblem,
    u0: Option<&ReferenceControl>,
    input: BatteryInput<'_>,
    opts: &OdeOptions,
) -> Result<TransversalityReport, TransversalityError> {
    let tol = input.tol;
    if !(tol > 0.0) {
        return Err(TransversalityError::Precondition(format!("tolerance must be positive, got {tol}")));
    }
    let psi = &**input.psi;
    let conditions = vec![
        or_inconclusive("trans", tol, check_plain_limit(psi, tol)),
        or_inconclusive("partlim", tol, check_subsequence_limit(psi, &input.taus, tol)),
        or_inconclusive(
            "partlim_1",
            tol,
            check_weighted_limit(psi, input.a, &LimitMode::LimInf(input.taus.clone()), tol),
        ),
        or_inconclusive("lim", tol, check_weighted_limit(psi, input.a, &LimitMode::FullLimit, tol)),
    ];
    let mut notes = Vec::new();
    let exp = match (input.dominance, u0) {
        (Some(d), _) => Some(d),
        (None, Some(u)) => {
            let t_max = input.a.end();
            let controls = dominance_controls(p, u, DOMINANCE_SAMPLE, t_max, input.seed)?;
            match fit_exponential_dominance(p, &controls, t_max, opts) {
                Ok(d) => Some(d),
                Err(e) => {
                    notes.push(format!("exp: not evaluated ({e})"));
                    None
                }
            }
        }
        (None, None) => None,
    };
    let lyapunov = match lyapunov_exponents(input.a, DEFAULT_LYAPUNOV_STEP, DEFAULT_LYAPUNOV_HORIZON) {
        Ok(l) => Some(l),
        Err(e) => {
            notes.push(format!("lyapunov: not evaluated ({e})"));
            None
        }
    };
    let mut report = TransversalityReport {
        problem: p.label().to_string(),
        tol,
        lambda: input.lambda,
        psi0: input.psi.node(0).to_vec(),
        span: (input.psi.start(), input.psi.end()),
        conditions,
        exp,
        lyapunov,
        monotone: input.monotone,
        notes,
    };
    let (trans, lim, exp_v) = (report.verdict("trans"), report.verdict("lim"), report.verdict("exp"));
    if exp_v == Some(Verdict::Holds) && lim != Some(Verdict::Holds) {
        report
            .notes
            .push("internal inconsistency: exponential dominance holds but psi*A does not tend to zero".into());
    }
    if trans == Some(Verdict::Fails) && lim == Some(Verdict::Holds) {
        report.notes.push(
            "psi does not vanish at infinity while psi*A does: plain transversality is not necessary here, \
             the matrix-weighted condition is"
                .into(),
        );
    }
    if let Some(l) = &report.lyapunov {
        if l.adjoint.iter().all(|e| *e < 0.0) {
            report.notes.push("all adjoint-flow Lyapunov exponents are negative".into());
        }
    }
    Ok(report)
}
