use serde::{Deserialize, Serialize};

use super::TransversalityError;
use crate::cauchy::{AccumulatedIntegral, CauchyAdjoint};
use crate::ode::Trajectory;
use crate::problem::{ControlProblem, ReferenceControl};

const MAX_LISTED: usize = 10;
const SIGN_TOL: f64 = 1e-8;

/// Points `(t, x)` at which the sign hypotheses are inspected: every time in
/// `times` paired with the reference state and with each extra state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeGrid {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl ProbeGrid {
    /// `count + 1` uniform times on `[0, t_end]` along the reference only.
    pub fn uniform(t_end: f64, count: usize) -> Self {
        let count = count.max(1);
        Self {
            times: (0..=count).map(|k| t_end * k as f64 / count as f64).collect(),
            states: Vec::new(),
        }
    }
}

/// Probe-scale version of `λ⁰ limsup I_ξ ⪰ ψ⁰(0) ⪰ λ⁰ lim I_0 ⪰ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    pub upper: Vec<f64>,
    pub middle: Vec<f64>,
    pub lower: Vec<f64>,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneReport {
    pub gx_nonnegative: bool,
    pub gx_positive: bool,
    /// Off-diagonal entries of `f_x` are nonnegative.
    pub metzler: bool,
    pub metzler_strict: bool,
    pub points_checked: usize,
    pub violations: Vec<String>,
    /// Smallest component of `ψ⁰` on its nodes; only computed when both hypotheses hold.
    pub psi_min: Option<f64>,
    pub psi_nonnegative: Option<bool>,
    pub sandwich: Option<Sandwich>,
    pub conclusion: String,
}

fn geq(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| *x >= y - SIGN_TOL * (1.0 + x.abs().max(y.abs())))
}

/// Sign hypotheses of the monotone case and, when they hold, the sign of
/// `ψ⁰` and the probe-scale sandwich. `probes` are accumulated integrals for
/// several starts; the one with `ξ = 0` supplies `lim I_0`.
pub fn monotone_analysis(
    p: &ControlProblem,
    u0: &ReferenceControl,
    x0: &Trajectory,
    grid: &ProbeGrid,
    cauchy: &CauchyAdjoint,
    probes: &[AccumulatedIntegral],
) -> Result<MonotoneReport, TransversalityError> {
    let m = p.state_dim();
    if grid.times.iter().any(|&t| !x0.covers(t, t)) {
        return Err(TransversalityError::SpanMismatch("probe grid leaves the reference trajectory".into()));
    }
    let mut report = MonotoneReport {
        gx_nonnegative: true,
        gx_positive: true,
        metzler: true,
        metzler_strict: true,
        points_checked: 0,
        violations: Vec::new(),
        psi_min: None,
        psi_nonnegative: None,
        sandwich: None,
        conclusion: String::new(),
    };
    let note = |r: &mut MonotoneReport, msg: String| {
        if r.violations.len() < MAX_LISTED {
            r.violations.push(msg);
        }
    };
    for &t in &grid.times {
        let xr = x0.eval(t);
        let mut controls = vec![u0.value(t, &xr, None)?];
        controls.extend(p.control_set().vertices(t)?);
        let states = std::iter::once(xr.clone()).chain(grid.states.iter().cloned());
        for x in states {
            for u in &controls {
                report.points_checked += 1;
                let gx = p.g_x(t, &x, u)?;
                for (i, v) in gx.iter().enumerate() {
                    if *v < 0.0 {
                        report.gx_nonnegative = false;
                        note(&mut report, format!("g_x[{}] = {v:e} at t = {t}, x = {x:?}, u = {u:?}", i + 1));
                    }
                    if *v <= 0.0 {
                        report.gx_positive = false;
                    }
                }
                let fx = p.f_x(t, &x, u)?;
                for i in 0..m {
                    for j in (0..m).filter(|&j| j != i) {
                        let v = fx[(i, j)];
                        if v < 0.0 {
                            report.metzler = false;
                            note(
                                &mut report,
                                format!("f_x[{},{}] = {v:e} at t = {t}, x = {x:?}, u = {u:?}", i + 1, j + 1),
                            );
                        }
                        if v <= 0.0 {
                            report.metzler_strict = false;
                        }
                    }
                }
            }
        }
    }
    if !(report.gx_nonnegative && report.metzler) {
        report.conclusion = "sign hypotheses fail; no conclusion on the sign of the adjoint".into();
        return Ok(report);
    }
    let psi = &cauchy.psi;
    let psi_min = (0..psi.len())
        .flat_map(|k| psi.node(k).to_vec())
        .fold(f64::INFINITY, f64::min);
    report.psi_min = Some(psi_min);
    report.psi_nonnegative = Some(psi_min >= -SIGN_TOL);

    let lambda = cauchy.lambda0;
    let mut upper = vec![f64::NEG_INFINITY; m];
    let mut lower = cauchy.i_star.clone();
    for acc in probes {
        let last = acc.windows.last().map_or(acc.times.len() - 1, |w| {
            acc.times.partition_point(|&t| t < w.start)
        });
        for row in &acc.values[last..] {
            for (u, v) in upper.iter_mut().zip(row) {
                *u = u.max(*v);
            }
        }
        if acc.xi.iter().all(|v| *v == 0.0) {
            lower = acc.last().to_vec();
        }
    }
    if !probes.is_empty() {
        let upper: Vec<f64> = upper.iter().map(|v| lambda * v).collect();
        let middle = psi.node(0).to_vec();
        let lower: Vec<f64> = lower.iter().map(|v| lambda * v).collect();
        let holds = geq(&upper, &middle) && geq(&middle, &lower) && geq(&lower, &vec![0.0; m]);
        report.sandwich = Some(Sandwich {
            upper,
            middle,
            lower,
            holds,
        });
    }
    let strict = report.gx_positive && report.metzler_strict;
    report.conclusion = match report.psi_nonnegative {
        Some(true) => format!(
            "hypotheses hold{}; adjoint is componentwise nonnegative (min {psi_min:.3e})",
            if strict { " strictly" } else { "" }
        ),
        _ => format!("hypotheses hold but the adjoint has a negative component (min {psi_min:.3e})"),
    };
    Ok(report)
}
