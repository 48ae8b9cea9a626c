//! Numerical probes of the standing hypotheses on a user-declared compact:
//! compact-valued `U(t)`, bounded `f` and `g`, finite `∂f/∂x` and `∂g/∂x`.

use serde::{Deserialize, Serialize};

use super::{ControlProblem, ControlSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Largest magnitude observed (for boundedness checks).
    pub max_abs: f64,
    pub failures: Vec<String>,
}

impl CheckResult {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            passed: true,
            max_abs: 0.0,
            failures: Vec::new(),
        }
    }

    fn fail(&mut self, msg: String) {
        self.passed = false;
        if self.failures.len() < 32 {
            self.failures.push(msg);
        }
    }

    fn observe(&mut self, values: &[f64], ctx: impl Fn() -> String) {
        for v in values {
            if v.is_finite() {
                self.max_abs = self.max_abs.max(v.abs());
            } else {
                self.fail(format!("non-finite value at {}", ctx()));
                return;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn corner_points(lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    let n = lo.len();
    let mut pts = vec![lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect::<Vec<_>>()];
    if n <= 6 {
        for mask in 0..1usize << n {
            pts.push((0..n).map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }).collect());
        }
    } else {
        for i in 0..n {
            for v in [lo[i], hi[i]] {
                let mut p = pts[0].clone();
                p[i] = v;
                pts.push(p);
            }
        }
    }
    pts
}

/// Probe `p` on `probe_grid × probe_box`. Never fails; failures are recorded in the report.
pub fn validate(p: &ControlProblem, probe_grid: &[f64], probe_box: &[(f64, f64)]) -> ValidationReport {
    let mut control = CheckResult::new("control-set");
    let mut dynamics = CheckResult::new("dynamics-bounded");
    let mut payoff = CheckResult::new("payoff-bounded");
    let mut jacobian = CheckResult::new("jacobian-finite");
    let mut reference = CheckResult::new("reference-admissible");

    if probe_box.len() != p.state_dim() {
        dynamics.fail(format!(
            "probe box has {} intervals but state_dim is {}",
            probe_box.len(),
            p.state_dim()
        ));
    }
    if let ControlSet::Finite { points } = p.control_set() {
        if points.is_empty() {
            control.fail("finite control set is empty".into());
        }
    }
    let lo: Vec<f64> = probe_box.iter().map(|b| b.0).collect();
    let hi: Vec<f64> = probe_box.iter().map(|b| b.1).collect();
    let states = if probe_box.len() == p.state_dim() {
        corner_points(&lo, &hi)
    } else {
        Vec::new()
    };

    for &t in probe_grid {
        let controls = match p.control_set() {
            ControlSet::Box { .. } => match p.control_set().bounds_at(t) {
                Ok((l, h)) => {
                    if l.iter().chain(&h).any(|v| !v.is_finite()) {
                        control.fail(format!("non-finite bound at t={t}"));
                        continue;
                    }
                    if l.iter().zip(&h).any(|(a, b)| a > b) {
                        control.fail(format!("lower bound exceeds upper bound at t={t}"));
                        continue;
                    }
                    corner_points(&l, &h)
                }
                Err(e) => {
                    control.fail(format!("non-finite bound at t={t}: {e}"));
                    continue;
                }
            },
            ControlSet::Finite { points } => {
                if points.iter().flatten().any(|v| !v.is_finite()) {
                    control.fail("non-finite control point".into());
                }
                points.clone()
            }
        };

        for x in &states {
            for u in &controls {
                let ctx = || format!("t={t}, x={x:?}, u={u:?}");
                match p.f(t, x, u) {
                    Ok(v) => dynamics.observe(&v, ctx),
                    Err(e) => dynamics.fail(format!("{e} at {}", ctx())),
                }
                match p.g(t, x, u) {
                    Ok(v) => payoff.observe(&[v], ctx),
                    Err(e) => payoff.fail(format!("{e} at {}", ctx())),
                }
                match p.f_x(t, x, u) {
                    Ok(j) => jacobian.observe(j.as_slice(), ctx),
                    Err(e) => jacobian.fail(format!("{e} at {}", ctx())),
                }
                match p.g_x(t, x, u) {
                    Ok(j) => jacobian.observe(&j, ctx),
                    Err(e) => jacobian.fail(format!("{e} at {}", ctx())),
                }
            }
        }

        if let Some(r) = p.reference() {
            let x = states.first().cloned().unwrap_or_else(|| p.x0().to_vec());
            match r.value(t, &x, None) {
                Ok(u) => match p.control_set().contains(t, &u, 1e-12) {
                    Ok(true) => {}
                    Ok(false) => reference.fail(format!("u0({t}) = {u:?} lies outside U(t)")),
                    Err(e) => reference.fail(format!("{e} at t={t}")),
                },
                Err(e) => reference.fail(format!("{e} at t={t}")),
            }
        }
    }

    let mut checks = vec![control, dynamics, payoff, jacobian];
    if p.reference().is_some() {
        checks.push(reference);
    }
    ValidationReport { checks }
}
