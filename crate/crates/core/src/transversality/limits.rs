use serde::{Deserialize, Serialize};

use super::{TransversalityError, Verdict};
use crate::csvfmt::num;
use crate::ode::{vector_norm, DenseArc, MatrixArc};
use crate::tail::{tail_windows, WINDOW_COUNT};

/// Uniform samples per tail window, endpoints included.
pub const SAMPLES_PER_WINDOW: usize = 32;

/// Shortest arc accepted by the window checks: four doubling checkpoints.
const MIN_SPAN: f64 = 8.0;

/// Relative decay over the last three windows below which a sup is "stable".
const STALL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub condition: String,
    pub verdict: Verdict,
    pub tol: f64,
    /// Tail windows `(start, end)`; empty for subsequence checks.
    pub windows: Vec<(f64, f64)>,
    /// Window sup norms, or `‖·(τₙ)‖` for subsequence checks.
    pub evidence: Vec<f64>,
    /// The `τ` sequence used, if any.
    pub subsequence: Vec<f64>,
    pub note: String,
}

impl ConditionCheck {
    /// Evidence as a two-column CSV block: `start,end,sup` or `tau,norm`.
    pub fn evidence_csv(&self) -> String {
        let mut out = String::new();
        if self.subsequence.is_empty() {
            out.push_str("start,end,sup\n");
            for ((a, b), s) in self.windows.iter().zip(&self.evidence) {
                out.push_str(&format!("{},{},{}\n", num(*a), num(*b), num(*s)));
            }
        } else {
            out.push_str("tau,norm\n");
            for (t, s) in self.subsequence.iter().zip(&self.evidence) {
                out.push_str(&format!("{},{}\n", num(*t), num(*s)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitMode {
    /// `ψ(t)A(t) → 0` as `t → ∞`.
    FullLimit,
    /// `liminf ‖ψ(τₙ)A(τₙ)‖ = 0` along the given sequence.
    LimInf(Vec<f64>),
}

fn require_span(start: f64, end: f64) -> Result<(), TransversalityError> {
    if end - start < MIN_SPAN {
        return Err(TransversalityError::ShortArc {
            start,
            end,
            need: MIN_SPAN,
        });
    }
    Ok(())
}

pub(crate) fn window_sups(
    span: (f64, f64),
    norm_at: &dyn Fn(f64) -> f64,
) -> (Vec<(f64, f64)>, Vec<f64>) {
    let windows = tail_windows(span.0, span.1);
    let sups = windows
        .iter()
        .map(|&(a, b)| {
            (0..SAMPLES_PER_WINDOW)
                .map(|k| norm_at(a + (b - a) * k as f64 / (SAMPLES_PER_WINDOW - 1) as f64))
                .fold(0.0, f64::max)
        })
        .collect();
    (windows, sups)
}

/// Holds when the last three window sups are at most `tol` and do not grow;
/// fails when they stay above `10·tol` without decaying; inconclusive otherwise.
pub(crate) fn window_verdict(sups: &[f64], tol: f64) -> (Verdict, String) {
    let tail = &sups[sups.len() - 3..];
    if tail.iter().all(|s| *s <= tol) && tail.windows(2).all(|w| w[1] <= w[0] + 0.1 * tol) {
        return (Verdict::Holds, format!("last three window sups below {tol:e}"));
    }
    if tail.iter().all(|s| *s > 10.0 * tol) && tail[2] >= tail[0] * (1.0 - STALL) {
        return (
            Verdict::Fails,
            format!("window sups stay near {:.6e}, above 10·tol", tail[2]),
        );
    }
    (
        Verdict::Inconclusive,
        format!("window sups decay but last is {:.6e} against tol {tol:e}", tail[2]),
    )
}

pub(crate) fn subsequence_verdict(values: &[f64], tol: f64) -> (Verdict, String) {
    let n = values.len();
    let third = n.div_ceil(3);
    let last = &values[n - third..];
    let middle = &values[n.saturating_sub(2 * third)..n - third];
    let min_last = last.iter().copied().fold(f64::INFINITY, f64::min);
    let min_mid = middle.iter().copied().fold(f64::INFINITY, f64::min);
    if min_last <= tol {
        return (Verdict::Holds, format!("min over the final third is {min_last:.6e}"));
    }
    if min_last > 10.0 * tol && (middle.is_empty() || min_last >= min_mid * (1.0 - STALL)) {
        return (
            Verdict::Fails,
            format!("min over the final third stays at {min_last:.6e}"),
        );
    }
    (Verdict::Inconclusive, format!("min over the final third is {min_last:.6e}"))
}

fn plain_on(
    condition: &str,
    span: (f64, f64),
    norm_at: &dyn Fn(f64) -> f64,
    tol: f64,
) -> Result<ConditionCheck, TransversalityError> {
    require_span(span.0, span.1)?;
    let (windows, sups) = window_sups(span, norm_at);
    debug_assert_eq!(sups.len(), WINDOW_COUNT);
    let (verdict, note) = window_verdict(&sups, tol);
    Ok(ConditionCheck {
        condition: condition.into(),
        verdict,
        tol,
        windows,
        evidence: sups,
        subsequence: Vec::new(),
        note,
    })
}

fn subsequence_on(
    condition: &str,
    span: (f64, f64),
    norm_at: &dyn Fn(f64) -> f64,
    taus: &[f64],
    tol: f64,
) -> Result<ConditionCheck, TransversalityError> {
    if taus.is_empty() {
        return Err(TransversalityError::Precondition("empty τ sequence".into()));
    }
    if taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(TransversalityError::Precondition("τ sequence must increase".into()));
    }
    let slack = 1e-9 * span.1.abs().max(1.0);
    if let Some(&t) = taus.iter().find(|&&t| t < span.0 - slack || t > span.1 + slack) {
        return Err(TransversalityError::OutsideSpan {
            t,
            start: span.0,
            end: span.1,
        });
    }
    let values: Vec<f64> = taus.iter().map(|&t| norm_at(t.clamp(span.0, span.1))).collect();
    let (verdict, note) = subsequence_verdict(&values, tol);
    Ok(ConditionCheck {
        condition: condition.into(),
        verdict,
        tol,
        windows: Vec::new(),
        evidence: values,
        subsequence: taus.to_vec(),
        note,
    })
}

/// `lim_{t→∞} ψ(t) = 0`, judged on the end-anchored tail windows of the arc.
pub fn check_plain_limit(psi: &DenseArc, tol: f64) -> Result<ConditionCheck, TransversalityError> {
    plain_on("trans", (psi.start(), psi.end()), &|t| vector_norm(&psi.eval(t)), tol)
}

/// `liminf ‖ψ(τₙ)‖ = 0` along `taus`.
pub fn check_subsequence_limit(psi: &DenseArc, taus: &[f64], tol: f64) -> Result<ConditionCheck, TransversalityError> {
    subsequence_on("partlim", (psi.start(), psi.end()), &|t| vector_norm(&psi.eval(t)), taus, tol)
}

/// The plain or subsequence check applied to `t ↦ ψ(t)A(t)`.
pub fn check_weighted_limit(
    psi: &DenseArc,
    a: &MatrixArc,
    mode: &LimitMode,
    tol: f64,
) -> Result<ConditionCheck, TransversalityError> {
    let m = a.order();
    if psi.dim() != m {
        return Err(TransversalityError::SpanMismatch(format!(
            "adjoint has dimension {} but the weight is {m}×{m}",
            psi.dim()
        )));
    }
    let slack = 1e-9 * psi.end().abs().max(1.0);
    if psi.start() < a.start() - slack || psi.end() > a.end() + slack {
        return Err(TransversalityError::SpanMismatch(format!(
            "adjoint spans [{}, {}] but the weight spans [{}, {}]",
            psi.start(),
            psi.end(),
            a.start(),
            a.end()
        )));
    }
    let norm_at = |t: f64| {
        let p = psi.eval(t);
        let w = a.at(t);
        let prod: Vec<f64> = (0..m).map(|j| (0..m).map(|i| p[i] * w[(i, j)]).sum()).collect();
        vector_norm(&prod)
    };
    let span = (psi.start(), psi.end());
    match mode {
        LimitMode::FullLimit => plain_on("lim", span, &norm_at, tol),
        LimitMode::LimInf(taus) => subsequence_on("partlim_1", span, &norm_at, taus, tol),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arc(f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64, end: f64) -> DenseArc {
        let n = (end * 20.0) as usize;
        let times: Vec<f64> = (0..=n).map(|k| end * k as f64 / n as f64).collect();
        let values = times.iter().map(|&t| f(t)).collect();
        let d: Vec<f64> = times.iter().map(|&t| df(t)).collect();
        DenseArc::from_nodes(1, times, values, &d)
    }

    #[test]
    fn plain_trichotomy() {
        let decay = arc(|t| f64::exp(-t), |t| -f64::exp(-t), 40.0);
        assert_eq!(check_plain_limit(&decay, 1e-6).unwrap().verdict, Verdict::Holds);
        let half = arc(|_| -0.5, |_| 0.0, 40.0);
        let c = check_plain_limit(&half, 1e-6).unwrap();
        assert_eq!(c.verdict, Verdict::Fails);
        assert!(c.evidence.iter().all(|s| (s - 0.5).abs() < 1e-12));
        let slow = arc(|t| 1.0 / (2.0 + t).ln(), |t| -1.0 / ((2.0 + t) * (2.0 + t).ln().powi(2)), 40.0);
        assert_eq!(check_plain_limit(&slow, 1e-6).unwrap().verdict, Verdict::Inconclusive);
        assert!(matches!(
            check_plain_limit(&arc(|t| t, |_| 1.0, 4.0), 1e-6),
            Err(TransversalityError::ShortArc { .. })
        ));
    }

    #[test]
    fn subsequences() {
        let pi = std::f64::consts::PI;
        let s = arc(f64::sin, f64::cos, 40.0);
        let taus: Vec<f64> = (1..=12).map(|n| n as f64 * pi).collect();
        assert_eq!(check_subsequence_limit(&s, &taus, 1e-6).unwrap().verdict, Verdict::Holds);
        let half = arc(|_| -0.5, |_| 0.0, 40.0);
        assert_eq!(check_subsequence_limit(&half, &taus, 1e-6).unwrap().verdict, Verdict::Fails);
        let decay = arc(|t| f64::exp(-t), |t| -f64::exp(-t), 40.0);
        let dyadic: Vec<f64> = (0..6).map(|n| f64::powi(2.0, n)).collect();
        assert_eq!(check_subsequence_limit(&decay, &dyadic, 1e-6).unwrap().verdict, Verdict::Holds);
        assert!(matches!(
            check_subsequence_limit(&decay, &[10.0, 50.0], 1e-6),
            Err(TransversalityError::OutsideSpan { .. })
        ));
    }

    #[test]
    fn weighted_separates_halkin() {
        let half = arc(|_| -0.5, |_| 0.0, 40.0);
        let a = MatrixArc::from_arc(arc(|t| f64::exp(-t), |t| -f64::exp(-t), 40.0), 1);
        assert_eq!(check_plain_limit(&half, 1e-6).unwrap().verdict, Verdict::Fails);
        let w = check_weighted_limit(&half, &a, &LimitMode::FullLimit, 1e-6).unwrap();
        assert_eq!(w.verdict, Verdict::Holds);
        assert_eq!(w.condition, "lim");
        assert!(w.evidence_csv().starts_with("start,end,sup\n"));
    }

    #[test]
    fn identity_weight_matches_plain() {
        let slow = arc(|t| 1.0 / (2.0 + t).ln(), |t| -1.0 / ((2.0 + t) * (2.0 + t).ln().powi(2)), 40.0);
        let id = MatrixArc::identity(1, 0.0, 40.0);
        let p = check_plain_limit(&slow, 1e-6).unwrap();
        let w = check_weighted_limit(&slow, &id, &LimitMode::FullLimit, 1e-6).unwrap();
        assert_eq!(p.verdict, w.verdict);
        assert_eq!(p.evidence, w.evidence);
    }
}
