use serde::{Deserialize, Serialize};

use super::{AccumulatedIntegral, CauchyError};
use crate::tail::{growth_exponent, window_stats, WINDOW_COUNT};

/// Log-log growth slope above which window sups count as growing.
pub const GROWTH_THRESHOLD: f64 = 0.05;

const MIN_CHECKPOINTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VerdictKind {
    Converged { limit: Vec<f64> },
    Diverged,
    Oscillating { clusters: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceVerdict {
    #[serde(flatten)]
    pub kind: VerdictKind,
    pub tol: f64,
    /// End-anchored tail windows `(start, end)` and their sup-oscillation.
    pub windows: Vec<(f64, f64)>,
    pub tail_oscillation: Vec<f64>,
    /// Doubling checkpoints and the sup norm of `I` on `[previous, checkpoint]`.
    pub checkpoints: Vec<f64>,
    pub checkpoint_sups: Vec<f64>,
    /// `None` when every sample is zero.
    pub growth_exponent: Option<f64>,
}

impl ConvergenceVerdict {
    pub fn label(&self) -> &'static str {
        match self.kind {
            VerdictKind::Converged { .. } => "converged",
            VerdictKind::Diverged => "diverged",
            VerdictKind::Oscillating { .. } => "oscillating",
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdict serializes")
    }
}

fn dedup_points(mut pts: Vec<Vec<f64>>, tol: f64) -> Vec<Vec<f64>> {
    pts.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out: Vec<Vec<f64>> = Vec::new();
    for p in pts {
        let dup = out.iter().any(|q| {
            let d: f64 = p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            d <= tol
        });
        if !dup {
            out.push(p);
        }
    }
    out
}

/// Sup norm of `I` over each doubling window `[previous checkpoint, checkpoint]`.
pub(crate) fn checkpoint_sups(acc: &AccumulatedIntegral) -> Vec<f64> {
    let mut out = Vec::with_capacity(acc.checkpoints.len());
    let mut prev = acc.times[0];
    for &c in &acc.checkpoints {
        out.push(window_stats(&acc.times, &acc.values, prev, c).map_or(0.0, |w| w.sup));
        prev = c;
    }
    out
}

/// Classify `T ↦ I(T)` as converged, diverged or oscillating.
///
/// Converged: the last three tail windows each oscillate by at most `tol`,
/// without increasing. Diverged: window sups grow with log-log slope above
/// [`GROWTH_THRESHOLD`] and do not decrease over the last three doubling
/// windows. Otherwise oscillating, with cluster points taken from the
/// extremes and means of the last three tail windows.
pub fn classify_convergence(acc: &AccumulatedIntegral, tol: f64) -> Result<ConvergenceVerdict, CauchyError> {
    if !(tol > 0.0) {
        return Err(CauchyError::Precondition(format!("tolerance must be positive, got {tol}")));
    }
    let checkpoints = acc.checkpoints.clone();
    if checkpoints.len() < MIN_CHECKPOINTS || acc.windows.len() < WINDOW_COUNT {
        return Err(CauchyError::InsufficientSamples {
            have: checkpoints.len(),
            need: MIN_CHECKPOINTS,
        });
    }
    let checkpoint_sups = checkpoint_sups(acc);
    let growth = growth_exponent(&checkpoints, &checkpoint_sups);
    let windows: Vec<(f64, f64)> = acc.windows.iter().map(|w| (w.start, w.end)).collect();
    let osc: Vec<f64> = acc.windows.iter().map(|w| w.oscillation).collect();
    let tail = &osc[osc.len() - 3..];
    let settled = tail.iter().all(|o| *o <= tol) && tail.windows(2).all(|w| w[1] <= w[0] + 0.1 * tol);

    let k = checkpoint_sups.len();
    let last3 = &checkpoint_sups[k - 3..];
    let growing = growth > GROWTH_THRESHOLD && last3.windows(2).all(|w| w[1] >= w[0]);

    let kind = if settled {
        VerdictKind::Converged {
            limit: acc.last().to_vec(),
        }
    } else if growing {
        VerdictKind::Diverged
    } else {
        let mut pts = Vec::new();
        for w in &acc.windows[acc.windows.len() - 3..] {
            pts.extend(w.extremes.iter().cloned());
            pts.push(w.mean.clone());
        }
        let scale = pts
            .iter()
            .map(|p| p.iter().fold(0.0_f64, |a, v| a.max(v.abs())))
            .fold(1.0, f64::max);
        VerdictKind::Oscillating {
            clusters: dedup_points(pts, tol.max(1e-9 * scale)),
        }
    };
    Ok(ConvergenceVerdict {
        kind,
        tol,
        windows,
        tail_oscillation: osc,
        checkpoints,
        checkpoint_sups,
        growth_exponent: growth.is_finite().then_some(growth),
    })
}

/// The limit to feed the Cauchy formula: `I_*` for a converged verdict, or
/// the explicitly chosen cluster point of an oscillating one.
pub fn select_limit(verdict: &ConvergenceVerdict, cluster: Option<usize>) -> Result<Vec<f64>, CauchyError> {
    match (&verdict.kind, cluster) {
        (VerdictKind::Converged { limit }, None) => Ok(limit.clone()),
        (VerdictKind::Converged { .. }, Some(_)) => Err(CauchyError::MissingVerdict(
            "a cluster index was given but the integral converged".into(),
        )),
        (VerdictKind::Oscillating { clusters }, Some(i)) => clusters.get(i).cloned().ok_or_else(|| {
            CauchyError::MissingVerdict(format!("cluster index {i} out of range ({} points)", clusters.len()))
        }),
        (VerdictKind::Oscillating { clusters }, None) => Err(CauchyError::MissingVerdict(format!(
            "integral oscillates with {} cluster points; choose one explicitly",
            clusters.len()
        ))),
        (VerdictKind::Diverged, _) => Err(CauchyError::MissingVerdict("integral diverges".into())),
    }
}
