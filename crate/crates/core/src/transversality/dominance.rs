use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TransversalityError;
use crate::ode::{fundamental_matrix, integrate_state, vector_norm, OdeOptions};
use crate::pmp::{bang_pool, Perturbation};
use crate::problem::{ControlProblem, ReferenceControl};
use crate::tail::least_squares;

/// Smallest fitted decay rate `α` accepted as exponential dominance.
pub const DOMINANCE_MIN_RATE: f64 = 0.01;

/// Envelope allowance: every sample must satisfy `product ≤ 10·β·e^{-αt}`.
const ENVELOPE_FACTOR: f64 = 10.0;

const SAMPLE_STEP: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceFit {
    /// Fitted decay rate; `+inf` when every product vanishes.
    pub alpha: f64,
    pub beta: f64,
    /// Smallest `β'` with `product ≤ β' e^{-αt}` on all samples.
    pub envelope: f64,
    pub holds: bool,
    pub samples: usize,
}

/// Least-squares fit of `log(product) ≈ log β - α t` over the positive samples.
pub fn fit_dominance(times: &[f64], products: &[f64]) -> Result<DominanceFit, TransversalityError> {
    if times.len() != products.len() || times.is_empty() {
        return Err(TransversalityError::Precondition("need matching, non-empty samples".into()));
    }
    if products.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(TransversalityError::Precondition("products must be finite and nonnegative".into()));
    }
    let (ts, ys): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(products)
        .filter(|(_, p)| **p > 0.0)
        .map(|(t, p)| (*t, p.ln()))
        .unzip();
    if ts.is_empty() {
        return Ok(DominanceFit {
            alpha: f64::INFINITY,
            beta: 0.0,
            envelope: 0.0,
            holds: true,
            samples: times.len(),
        });
    }
    let (slope, icpt) = least_squares(&ts, &ys)
        .ok_or_else(|| TransversalityError::Precondition("degenerate fit: positive samples share one time".into()))?;
    let alpha = -slope;
    let beta = icpt.exp();
    let envelope = ts
        .iter()
        .zip(&ys)
        .map(|(t, y)| (y + alpha * t).exp())
        .fold(0.0, f64::max);
    Ok(DominanceFit {
        alpha,
        beta,
        envelope,
        holds: alpha > DOMINANCE_MIN_RATE && envelope <= ENVELOPE_FACTOR * beta,
        samples: times.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub per_trajectory: Vec<DominanceFit>,
    /// Fit over the pooled samples of all trajectories.
    pub aggregate: DominanceFit,
    pub sample_size: usize,
    pub t_max: f64,
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().singular_values().max()
}

/// `u0` followed by `count` seeded window perturbations of it.
pub fn dominance_controls(
    p: &ControlProblem,
    u0: &ReferenceControl,
    count: usize,
    t_max: f64,
    seed: u64,
) -> Result<Vec<ReferenceControl>, TransversalityError> {
    let mut out = vec![u0.clone()];
    out.extend(
        bang_pool(p, count, seed)?
            .into_iter()
            .filter(|q| matches!(q, Perturbation::Bang { .. }))
            .map(|q| q.instantiate(u0, t_max)),
    );
    Ok(out)
}

/// Samples `‖g_x‖·‖A‖` along each control on `[0, t_max]` and fits the
/// bound `β e^{-αt}` per trajectory and over the pooled samples.
pub fn fit_exponential_dominance(
    p: &ControlProblem,
    controls: &[ReferenceControl],
    t_max: f64,
    opts: &OdeOptions,
) -> Result<DominanceReport, TransversalityError> {
    if controls.is_empty() {
        return Err(TransversalityError::Precondition("no trajectories to sample".into()));
    }
    let n = ((t_max / SAMPLE_STEP).ceil() as usize).max(1);
    let grid: Vec<f64> = (0..=n).map(|k| t_max * k as f64 / n as f64).collect();
    let sampled: Vec<Vec<f64>> = controls
        .par_iter()
        .map(|u| -> Result<Vec<f64>, TransversalityError> {
            let x = integrate_state(p, u, p.x0(), (0.0, t_max), opts)?;
            let a = fundamental_matrix(p, u, &x, (0.0, t_max), opts)?;
            grid.iter()
                .map(|&t| {
                    let xt = x.eval(t);
                    let ut = u.value(t, &xt, None)?;
                    Ok(vector_norm(&p.g_x(t, &xt, &ut)?) * spectral_norm(&a.at(t)))
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let per_trajectory = sampled
        .iter()
        .map(|prods| fit_dominance(&grid, prods))
        .collect::<Result<Vec<_>, _>>()?;
    let all_t: Vec<f64> = sampled.iter().flat_map(|_| grid.iter().copied()).collect();
    let all_p: Vec<f64> = sampled.iter().flatten().copied().collect();
    Ok(DominanceReport {
        per_trajectory,
        aggregate: fit_dominance(&all_t, &all_p)?,
        sample_size: controls.len(),
        t_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{builtin, load_problem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn synthetic_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (alpha, beta) = (0.7, 2.5);
        let times: Vec<f64> = (0..200).map(|k| k as f64 * 0.2).collect();
        let prods: Vec<f64> = times
            .iter()
            .map(|t| beta * (-alpha * t).exp() * (1.0 + 0.01 * rng.gen_range(-1.0..1.0)))
            .collect();
        let fit = fit_dominance(&times, &prods).unwrap();
        assert!((fit.alpha - alpha).abs() / alpha < 0.05);
        assert!((fit.beta - beta).abs() / beta < 0.05);
        assert!(fit.holds);
        let flat = fit_dominance(&times, &vec![1.0; times.len()]).unwrap();
        assert!(!flat.holds && flat.alpha.abs() < 1e-12);
        let zero = fit_dominance(&times, &vec![0.0; times.len()]).unwrap();
        assert!(zero.holds && zero.alpha.is_infinite());
    }

    #[test]
    fn scalar_exp_along_reference() {
        let p = builtin("scalar-exp").unwrap();
        let r = fit_exponential_dominance(&p, &[p.reference().unwrap().clone()], 20.0, &OdeOptions::default()).unwrap();
        let f = &r.aggregate;
        assert!((f.alpha - 1.0).abs() < 1e-6 && (f.beta - 1.0).abs() < 1e-6 && f.holds, "{f:?}");
    }

    #[test]
    fn constant_gradient_fails() {
        let p = load_problem(
            r#"
            state_dim = 1
            control_dim = 1
            dynamics = ["0*u1"]
            payoff = "x1"
            reference = ["0"]
            [control]
            kind = "box"
            lower = [0]
            upper = [1]
            "#,
        )
        .unwrap();
        let u = dominance_controls(&p, p.reference().unwrap(), 8, 20.0, 1).unwrap();
        assert_eq!(u.len(), 9);
        let r = fit_exponential_dominance(&p, &u, 20.0, &OdeOptions::default()).unwrap();
        assert!(!r.aggregate.holds);
        assert_eq!(r.sample_size, 9);
    }
}
