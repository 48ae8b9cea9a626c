use rayon::prelude::*;

use super::{hamiltonian, maximize_over, normalize, Extremal, Horizon, Penalty, PmpError};
use crate::expr::EvalError;
use crate::ode::{
    integrate_adjoint_backward, integrate_state, integrate_state_with_payoff, AdjointArc, OdeOptions,
    Trajectory,
};
use crate::problem::{ControlProblem, ControlSet, ReferenceControl};

const SWEEP_ATOL: f64 = 1e-13;
const SWEEP_RTOL: f64 = 1e-12;
const MIN_RELAXATION: f64 = 1.0 / 1024.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    /// Control grid spacing (rounded so the grid ends exactly at the horizon).
    pub dt: f64,
    /// Initial relaxation factor.
    pub theta: f64,
    /// Stop once the L¹ control update falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Allowed decrease of the penalized objective per accepted iteration.
    pub objective_tol: f64,
    pub ode: OdeOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            dt: 0.05,
            theta: 0.5,
            tol: 1e-7,
            max_iter: 500,
            objective_tol: 1e-10,
            ode: OdeOptions::default(),
        }
    }
}

fn penalized_h(
    p: &ControlProblem,
    penalty: Option<&Penalty>,
    x: &[f64],
    t: f64,
    u: &[f64],
    lambda: f64,
    psi: &[f64],
) -> Result<f64, EvalError> {
    let mut h = hamiltonian(p, x, t, u, lambda, psi)?;
    if let Some(pen) = penalty {
        if pen.gamma != 0.0 && lambda != 0.0 {
            h -= lambda * pen.gamma * pen.weight(t, x, u)?;
        }
    }
    Ok(h)
}

/// Per-node maximization: (target control, max value, value at current control).
fn node_targets(
    p: &ControlProblem,
    penalty: Option<&Penalty>,
    nodes: &[f64],
    values: &[Vec<f64>],
    x: &Trajectory,
    lambda: f64,
    psi: &AdjointArc,
) -> Result<Vec<(Vec<f64>, f64, f64)>, PmpError> {
    nodes
        .par_iter()
        .zip(values.par_iter())
        .map(|(&t, cur)| {
            let xt = x.eval(t);
            let pt = psi.eval(t);
            let h = |u: &[f64]| penalized_h(p, penalty, &xt, t, u, lambda, &pt);
            let here = h(cur)?;
            let (best, top) = maximize_over(p.control_set(), t, h)?;
            // keep the current control when it is already maximal
            if here >= top {
                Ok((cur.clone(), here.max(top), here))
            } else {
                Ok((best, top, here))
            }
        })
        .collect()
}

fn project(set: &ControlSet, t: f64, u: &mut Vec<f64>) -> Result<(), EvalError> {
    match set {
        ControlSet::Box { .. } => set.clip(t, u),
        ControlSet::Finite { points } => {
            let dist = |p: &Vec<f64>| p.iter().zip(u.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            if let Some(best) = points
                .iter()
                .min_by(|a, b| dist(a).total_cmp(&dist(b)))
            {
                *u = best.clone();
            }
            Ok(())
        }
    }
}

struct Evaluation {
    x: Trajectory,
    objective: f64,
}

fn evaluate(
    p: &ControlProblem,
    penalty: Option<&Penalty>,
    grid: &[f64],
    values: &[Vec<f64>],
    opts: &OdeOptions,
) -> Result<Evaluation, PmpError> {
    let n = values.len();
    let u = ReferenceControl::PiecewiseConstant {
        grid: grid[..n].to_vec(),
        values: values.to_vec(),
    };
    let tau = grid[n];
    let (x, j) = integrate_state_with_payoff(p, &u, p.x0(), (0.0, tau), opts)?;
    let mut objective = j.last()[0];
    if let Some(pen) = penalty.filter(|pen| pen.gamma != 0.0) {
        let mut integral = 0.0;
        for i in 0..n {
            let (a, b) = (grid[i], grid[i + 1]);
            let m = 0.5 * (a + b);
            let w = |t: f64| pen.weight(t, &x.eval(t), &values[i]);
            integral += (b - a) / 6.0 * (w(a)? + 4.0 * w(m)? + w(b)?);
        }
        objective -= pen.gamma * integral;
    }
    Ok(Evaluation { x, objective })
}

/// Objective differences near the optimum are second order in the control
/// update, so the sweep integrates well below the acceptance tolerance.
fn sweep_ode(base: &OdeOptions) -> OdeOptions {
    OdeOptions {
        atol: base.atol.min(SWEEP_ATOL),
        rtol: base.rtol.min(SWEEP_RTOL),
        ..base.clone()
    }
}

fn l1_distance(grid: &[f64], a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (u, v))| {
            (grid[i + 1] - grid[i]) * u.iter().zip(v).map(|(p, q)| (p - q).abs()).sum::<f64>()
        })
        .sum()
}

/// Solve the penalized free-endpoint problem on `[0, τ]`,
/// `J_τ(u) - γ ∫ ‖u - u⁰‖² dt → max`, by a relaxed forward–backward sweep
/// with `ψ(τ) = 0` and `λ = 1`, then normalize the multipliers.
///
/// Non-convergence within `max_iter` is not an error: the last iterate is
/// returned with `converged = false`.
pub fn solve_finite_horizon(
    p: &ControlProblem,
    tau: f64,
    penalty: Option<&Penalty>,
    u_init: &ReferenceControl,
    opts: &SweepOptions,
) -> Result<Extremal, PmpError> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(PmpError::InvalidHorizon(tau));
    }
    let n = ((tau / opts.dt).ceil() as usize).max(1);
    let mut grid: Vec<f64> = (0..=n).map(|i| tau * i as f64 / n as f64).collect();
    grid[n] = tau;
    // the maximum condition is imposed at interval midpoints
    let mids: Vec<f64> = grid.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let nodes = &mids[..];
    let m = p.state_dim();
    let finite = matches!(p.control_set(), ControlSet::Finite { .. });

    let ode = sweep_ode(&opts.ode);
    let x_init = integrate_state(p, u_init, p.x0(), (0.0, tau), &ode)?;
    let mut values = nodes
        .iter()
        .map(|&t| {
            let mut u = u_init.value(t, &x_init.eval(t), None)?;
            project(p.control_set(), t, &mut u)?;
            Ok(u)
        })
        .collect::<Result<Vec<_>, EvalError>>()?;

    let mut current = evaluate(p, penalty, &grid, &values, &ode)?;
    let mut history = vec![current.objective];
    let mut converged = false;
    let mut iterations = 0;
    let zero = vec![0.0; m];
    let control = |vals: &[Vec<f64>]| ReferenceControl::PiecewiseConstant {
        grid: grid[..n].to_vec(),
        values: vals.to_vec(),
    };

    // long horizons make the plain relaxed sweep oscillate; shrink θ whenever the update grows
    let mut relax = opts.theta;
    let mut prev_full = f64::INFINITY;
    while iterations < opts.max_iter {
        iterations += 1;
        let u = control(&values);
        let psi = integrate_adjoint_backward(p, &u, &current.x, 1.0, &zero, (0.0, tau), &ode)?;
        let targets = node_targets(p, penalty, nodes, &values, &current.x, 1.0, &psi)?;
        let target_values: Vec<Vec<f64>> = targets.iter().map(|t| t.0.clone()).collect();
        let full = l1_distance(&grid, &values, &target_values);
        if full <= opts.tol {
            converged = true;
            break;
        }
        if full > prev_full {
            relax = (0.5 * relax).max(MIN_RELAXATION);
        }
        prev_full = full;

        // for finite sets the relaxation replaces a fraction of the changed nodes, largest gain first
        let mut order: Vec<usize> = (0..n).filter(|&i| target_values[i] != values[i]).collect();
        order.sort_by(|&a, &b| {
            let ga = targets[a].1 - targets[a].2;
            let gb = targets[b].1 - targets[b].2;
            gb.total_cmp(&ga).then(a.cmp(&b))
        });
        let mut theta = if finite { 1.0 } else { relax };
        let accepted = loop {
            let mut trial = values.clone();
            if finite {
                let count = ((order.len() as f64 * theta).ceil() as usize).max(1);
                for &i in &order[..count.min(order.len())] {
                    trial[i] = target_values[i].clone();
                }
            } else {
                for (v, tgt) in trial.iter_mut().zip(&target_values) {
                    for (a, b) in v.iter_mut().zip(tgt) {
                        *a += theta * (b - *a);
                    }
                }
            }
            let eval = evaluate(p, penalty, &grid, &trial, &ode)?;
            if eval.objective >= current.objective - opts.objective_tol {
                break Some((trial, eval));
            }
            theta *= 0.5;
            if theta < 1e-9 {
                break None;
            }
        };
        let Some((trial, eval)) = accepted else {
            break;
        };
        let step = l1_distance(&grid, &values, &trial);
        values = trial;
        current = eval;
        history.push(current.objective);
        if step <= opts.tol {
            converged = true;
            break;
        }
    }

    // polish: full replacement by the pointwise maximizers, kept unless it lowers the objective
    let u = control(&values);
    let psi = integrate_adjoint_backward(p, &u, &current.x, 1.0, &zero, (0.0, tau), &ode)?;
    let targets = node_targets(p, penalty, nodes, &values, &current.x, 1.0, &psi)?;
    let polished: Vec<Vec<f64>> = targets.into_iter().map(|t| t.0).collect();
    if polished != values {
        let eval = evaluate(p, penalty, &grid, &polished, &ode)?;
        if eval.objective >= current.objective - opts.objective_tol {
            values = polished;
            current = eval;
        }
    }

    let u = control(&values);
    let psi = integrate_adjoint_backward(p, &u, &current.x, 1.0, &zero, (0.0, tau), &ode)?;
    let (lambda, psi) = normalize(1.0, &psi)?;
    let mut e = Extremal {
        x: current.x,
        u,
        lambda,
        psi,
        horizon: Horizon::Finite(tau),
        max_residual: 0.0,
        grid: nodes.to_vec(),
        converged,
        iterations,
        objective: history,
        penalty: penalty.cloned(),
    };
    e.max_residual = max_residual(p, &e, &e.grid)?;
    Ok(e)
}

/// `sup_grid [max_{v ∈ U(t)} H(v) - H(u(t))]₊` for the extremal's own
/// multipliers (and penalty, if it carries one).
pub fn max_residual(p: &ControlProblem, e: &Extremal, grid: &[f64]) -> Result<f64, PmpError> {
    let res: Vec<f64> = grid
        .par_iter()
        .map(|&t| {
            let x = e.x.eval(t);
            let psi = e.psi.eval(t);
            let u = e.u.value(t, &x, None)?;
            let pen = e.penalty.as_ref();
            let h = |v: &[f64]| penalized_h(p, pen, &x, t, v, e.lambda, &psi);
            let here = h(&u)?;
            let (_, top) = maximize_over(p.control_set(), t, h)?;
            Ok((top - here).max(0.0))
        })
        .collect::<Result<_, PmpError>>()?;
    Ok(res.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{builtin, load_problem};

    #[test]
    fn scalar_exp_matches_closed_form() {
        let p = builtin("scalar-exp").unwrap();
        let tau = 20.0;
        let e = solve_finite_horizon(&p, tau, None, p.reference().unwrap(), &SweepOptions::default()).unwrap();
        assert!(e.converged);
        // unit-multiplier costate ψ(t) = e^{-t} - e^{-τ}
        let raw0 = 1.0 - f64::exp(-tau);
        assert!((e.psi.node(0)[0] - raw0 / (1.0 + raw0)).abs() < 1e-8);
        assert_eq!(*e.psi.last(), [0.0]);
        assert!(e.max_residual <= 1e-6, "{}", e.max_residual);
        assert!((e.lambda + e.psi.node(0)[0].abs() - 1.0).abs() < 1e-12);
        // interior optimum u = 1 - e^{t - τ}/4 at the grid nodes
        let t = 19.525;
        assert!(e.grid.iter().any(|g| (g - t).abs() < 1e-12));
        let u = e.u.value(t, &[0.0], None).unwrap()[0];
        assert!((u - (1.0 - f64::exp(t - tau) / 4.0)).abs() < 1e-6, "{u}");
        assert!(e.objective.windows(2).all(|w| w[1] >= w[0] - 1e-10));
    }

    #[test]
    fn perturbed_control_has_large_residual() {
        let p = builtin("scalar-exp").unwrap();
        let mut e = solve_finite_horizon(&p, 20.0, None, p.reference().unwrap(), &SweepOptions::default()).unwrap();
        if let ReferenceControl::PiecewiseConstant { values, .. } = &mut e.u {
            for v in values.iter_mut() {
                v[0] = (v[0] + 0.1).min(2.0);
            }
        }
        assert!(max_residual(&p, &e, &e.grid).unwrap() > 1e-3);
    }

    #[test]
    fn control_irrelevant_converges_immediately() {
        let doc = r#"
            state_dim = 1
            control_dim = 1
            dynamics = ["-x1"]
            payoff = "exp(-t)*x1"
            x0 = [1.0]
            [control]
            kind = "box"
            lower = [0]
            upper = [1]
        "#;
        let p = load_problem(doc).unwrap();
        let u = ReferenceControl::constant(vec![0.5], 5.0);
        let e = solve_finite_horizon(&p, 5.0, None, &u, &SweepOptions::default()).unwrap();
        assert!(e.converged);
        assert_eq!(e.iterations, 1);
        assert_eq!(e.max_residual, 0.0);
    }

    #[test]
    fn dominant_penalty_pins_reference() {
        let p = builtin("scalar-exp").unwrap();
        let reference = p.reference().unwrap().clone();
        let pen = Penalty {
            gamma: 10.0,
            reference: reference.clone(),
        };
        let e = solve_finite_horizon(&p, 20.0, Some(&pen), &reference, &SweepOptions::default()).unwrap();
        let ReferenceControl::PiecewiseConstant { grid, values } = &e.u else {
            panic!()
        };
        let l1: f64 = values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let next = grid.get(i + 1).copied().unwrap_or(20.0);
                (next - grid[i]) * (v[0] - 1.0).abs()
            })
            .sum();
        assert!(l1 < 1e-6, "{l1}");
        assert!(e.max_residual <= 1e-6);
    }

    #[test]
    fn finite_set_bang_bang() {
        let doc = r#"
            state_dim = 1
            control_dim = 1
            dynamics = ["(1 - x1)*u1"]
            payoff = "(1 - x1)*u1"
            [control]
            kind = "finite"
            points = [[0.0], [1.0]]
        "#;
        let p = load_problem(doc).unwrap();
        let u = ReferenceControl::constant(vec![0.0], 5.0);
        let e = solve_finite_horizon(&p, 5.0, None, &u, &SweepOptions::default()).unwrap();
        assert!(e.converged);
        assert_eq!(e.u.value(2.0, &[0.0], None).unwrap(), vec![1.0]);
        assert!(e.max_residual <= 1e-6);
    }
}
