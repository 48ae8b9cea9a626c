use std::sync::Arc;

use super::{bang_pool, estimate_omega, solve_finite_horizon, Extremal, OmegaEstimate, Penalty, PmpError, SweepOptions};
use crate::csvfmt::num;
use crate::ode::{integrate_state, vector_norm};
use crate::problem::{ControlProblem, ReferenceControl};

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationOptions {
    pub sweep: SweepOptions,
    /// Number of random window perturbations in the ω⁰ pool.
    pub pool_size: usize,
    pub seed: u64,
}

impl Default for TruncationOptions {
    fn default() -> Self {
        Self {
            sweep: SweepOptions::default(),
            pool_size: 24,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationEntry {
    /// 1-based index into the horizon sequence.
    pub n: usize,
    pub tau: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub psi0: Vec<f64>,
    /// `ψⁿ(τₙ)`, zero by construction.
    pub psi_end: Vec<f64>,
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
    /// `‖ψⁿ(0) - ψⁿ⁻¹(0)‖ + |λⁿ - λⁿ⁻¹|` against the previous successful entry.
    pub cauchy_diff: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TruncationRun {
    pub entries: Vec<TruncationEntry>,
    pub omega: Option<OmegaEstimate>,
    /// Last successfully computed extremal.
    pub last: Option<Extremal>,
    pub state_dim: usize,
}

impl TruncationRun {
    /// True when the final horizon solved and its sweep converged.
    pub fn converged(&self) -> bool {
        self.entries
            .last()
            .is_some_and(|e| e.error.is_none() && e.converged)
    }

    /// `n,tau_n,gamma_n,lambda_n,psi0_1..psi0_m,residual,converged`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,tau_n,gamma_n,lambda_n");
        for i in 1..=self.state_dim {
            out.push_str(&format!(",psi0_{i}"));
        }
        out.push_str(",residual,converged\n");
        for e in &self.entries {
            let mut cells = vec![e.n.to_string(), num(e.tau), num(e.gamma), num(e.lambda)];
            if e.psi0.len() == self.state_dim {
                cells.extend(e.psi0.iter().map(|v| num(*v)));
            } else {
                cells.extend((0..self.state_dim).map(|_| num(f64::NAN)));
            }
            cells.push(num(e.residual));
            cells.push(u8::from(e.converged).to_string());
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn check_sequence(taus: &[f64]) -> Result<(), PmpError> {
    if taus.len() < 2 {
        return Err(PmpError::InvalidSequence("need at least two horizons".into()));
    }
    if let Some(&t) = taus.iter().find(|t| !(**t > 0.0) || !t.is_finite()) {
        return Err(PmpError::InvalidHorizon(t));
    }
    if taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PmpError::InvalidSequence("horizons must be strictly increasing".into()));
    }
    Ok(())
}

/// Continue `prev` (piecewise constant on `[0, τ_prev]`) by `base` sampled on a `dt` grid up to `tau`.
fn extend(prev: &Extremal, base: &ReferenceControl, tau: f64, dt: f64) -> Result<ReferenceControl, PmpError> {
    let ReferenceControl::PiecewiseConstant { grid, values } = &prev.u else {
        return Ok(base.clone());
    };
    let mut grid = grid.clone();
    let mut values = values.clone();
    let start = match prev.horizon {
        super::Horizon::Finite(t) => t,
        super::Horizon::Infinite => return Ok(prev.u.clone()),
    };
    let k = (((tau - start) / dt).ceil() as usize).max(1);
    let x_end = prev.x.last().to_vec();
    for i in 0..k {
        let t = start + (tau - start) * i as f64 / k as f64;
        grid.push(t);
        values.push(base.value(t, &x_end, None)?);
    }
    Ok(ReferenceControl::PiecewiseConstant { grid, values })
}

/// Truncation scheme along `taus`: each horizon is solved as a penalized
/// free-endpoint problem with `γₙ = √ω⁰(τₙ)` and `ψ(τₙ) = 0`, warm-started from
/// the previous horizon. Without a reference control the penalty vanishes and
/// the first sweep starts from the centre of `U(0)`.
///
/// Per-horizon failures are recorded in the entry and the run continues.
pub fn run_truncation(
    p: &ControlProblem,
    reference: Option<&ReferenceControl>,
    taus: &[f64],
    opts: &TruncationOptions,
) -> Result<TruncationRun, PmpError> {
    check_sequence(taus)?;
    let tmax = *taus.last().unwrap();
    let (base, omega) = match reference {
        Some(u0) => {
            let x0 = integrate_state(p, u0, p.x0(), (0.0, tmax), &opts.sweep.ode)?;
            let frozen = u0.freeze_along(&Arc::new(x0));
            let pool = bang_pool(p, opts.pool_size, opts.seed)?;
            let omega = estimate_omega(p, taus, &pool, &frozen, &opts.sweep.ode)?;
            (frozen, Some(omega))
        }
        None => (
            ReferenceControl::constant(p.control_set().center(0.0)?, tmax),
            None,
        ),
    };
    let gammas: Vec<f64> = match &omega {
        Some(o) => o.envelope.iter().map(|w| w.sqrt()).collect(),
        None => vec![0.0; taus.len()],
    };

    let mut entries: Vec<TruncationEntry> = Vec::with_capacity(taus.len());
    let mut last: Option<Extremal> = None;
    for (i, (&tau, &gamma)) in taus.iter().zip(&gammas).enumerate() {
        let penalty = (reference.is_some() && gamma > 0.0).then(|| Penalty {
            gamma,
            reference: base.clone(),
        });
        let solved = match &last {
            Some(prev) => extend(prev, &base, tau, opts.sweep.dt),
            None => Ok(base.clone()),
        }
        .and_then(|u_init| solve_finite_horizon(p, tau, penalty.as_ref(), &u_init, &opts.sweep));
        match solved {
            Ok(e) => {
                let psi0 = e.psi.node(0).to_vec();
                let cauchy_diff = entries
                    .iter()
                    .rev()
                    .find(|en| en.error.is_none())
                    .map(|prev| {
                        let d: Vec<f64> = psi0.iter().zip(&prev.psi0).map(|(a, b)| a - b).collect();
                        vector_norm(&d) + (e.lambda - prev.lambda).abs()
                    });
                entries.push(TruncationEntry {
                    n: i + 1,
                    tau,
                    gamma,
                    lambda: e.lambda,
                    psi0,
                    psi_end: e.psi.last().to_vec(),
                    residual: e.max_residual,
                    converged: e.converged,
                    iterations: e.iterations,
                    cauchy_diff,
                    error: None,
                });
                last = Some(e);
            }
            Err(err) => entries.push(TruncationEntry {
                n: i + 1,
                tau,
                gamma,
                lambda: f64::NAN,
                psi0: Vec::new(),
                psi_end: Vec::new(),
                residual: f64::NAN,
                converged: false,
                iterations: 0,
                cauchy_diff: None,
                error: Some(err.to_string()),
            }),
        }
    }
    Ok(TruncationRun {
        entries,
        omega,
        last,
        state_dim: p.state_dim(),
    })
}
