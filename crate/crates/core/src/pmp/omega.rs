use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PmpError;
use crate::ode::{integrate_state_with_payoff, OdeOptions};
use crate::problem::{ControlProblem, ControlSet, ReferenceControl};

/// A competitor control defined relative to the horizon `τ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Perturbation {
    /// The reference control itself.
    Reference,
    /// A constant control on the whole horizon.
    Constant(Vec<f64>),
    /// `value` on `[start·τ, end·τ)`, the reference elsewhere.
    Bang { start: f64, end: f64, value: Vec<f64> },
}

impl Perturbation {
    pub fn instantiate(&self, reference: &ReferenceControl, horizon: f64) -> ReferenceControl {
        match self {
            Perturbation::Reference => reference.clone(),
            Perturbation::Constant(v) => ReferenceControl::constant(v.clone(), horizon),
            Perturbation::Bang { start, end, value } => ReferenceControl::Windowed {
                base: Box::new(reference.clone()),
                start: start * horizon,
                end: end * horizon,
                value: value.clone(),
            },
        }
    }
}

/// The reference, every vertex of `U(0)` as a constant control, and `count`
/// seeded window perturbations. Window values alternate between a random
/// vertex and a uniform random point of the hull of `U(0)`.
pub fn bang_pool(p: &ControlProblem, count: usize, seed: u64) -> Result<Vec<Perturbation>, PmpError> {
    let vertices = p.control_set().vertices(0.0)?;
    if vertices.is_empty() {
        return Err(PmpError::EmptyControlSet { t: 0.0 });
    }
    let mut pool = vec![Perturbation::Reference];
    pool.extend(vertices.iter().cloned().map(Perturbation::Constant));
    let (lo, hi) = p.control_set().bounds_at(0.0)?;
    let finite = matches!(p.control_set(), ControlSet::Finite { .. });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for n in 0..count {
        let start: f64 = rng.gen_range(0.0..0.9);
        let len: f64 = rng.gen_range(0.02..0.3);
        let value = if n % 2 == 0 || finite {
            vertices[rng.gen_range(0..vertices.len())].clone()
        } else {
            lo.iter().zip(&hi).map(|(a, b)| a + (b - a) * rng.gen::<f64>()).collect()
        };
        pool.push(Perturbation::Bang {
            start,
            end: (start + len).min(1.0),
            value,
        });
    }
    Ok(pool)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaEstimate {
    pub taus: Vec<f64>,
    /// `max_pool [J_τ(u) - J_τ(u⁰)]₊` per τ; gains within ten times the
    /// integration tolerance count as zero.
    pub raw: Vec<f64>,
    /// Non-increasing envelope `max_{j ≥ i} raw_j`.
    pub envelope: Vec<f64>,
    pub pool_size: usize,
    /// Pool members whose integration failed (excluded from the maximum).
    pub failures: usize,
}

/// Estimate the overtaking defect `ω⁰(τ)` of `reference` against `pool`.
pub fn estimate_omega(
    p: &ControlProblem,
    taus: &[f64],
    pool: &[Perturbation],
    reference: &ReferenceControl,
    opts: &OdeOptions,
) -> Result<OmegaEstimate, PmpError> {
    if pool.is_empty() {
        return Err(PmpError::EmptyPool);
    }
    if let Some(&bad) = taus.iter().find(|t| !(**t > 0.0) || !t.is_finite()) {
        return Err(PmpError::InvalidHorizon(bad));
    }
    let payoff = |u: &ReferenceControl, tau: f64| {
        integrate_state_with_payoff(p, u, p.x0(), (0.0, tau), opts).map(|(_, j)| j.last()[0])
    };
    let base: Vec<f64> = taus
        .par_iter()
        .map(|&tau| payoff(reference, tau))
        .collect::<Result<_, _>>()?;
    let jobs: Vec<(usize, &Perturbation)> = (0..taus.len())
        .flat_map(|i| pool.iter().map(move |m| (i, m)))
        .collect();
    // gains below the integration noise floor are indistinguishable from zero
    let floor = |a: f64, b: f64| 10.0 * (opts.atol + opts.rtol * a.abs().max(b.abs()).max(1.0));
    let results: Vec<Option<f64>> = jobs
        .par_iter()
        .map(|&(i, m)| match m {
            Perturbation::Reference => Some(0.0),
            _ => payoff(&m.instantiate(reference, taus[i]), taus[i]).ok().map(|j| {
                let d = j - base[i];
                if d <= floor(j, base[i]) {
                    0.0
                } else {
                    d
                }
            }),
        })
        .collect();
    let mut raw = vec![0.0_f64; taus.len()];
    let mut failures = 0;
    for (&(i, _), r) in jobs.iter().zip(&results) {
        match r {
            Some(d) => raw[i] = raw[i].max(*d),
            None => failures += 1,
        }
    }
    let mut envelope = raw.clone();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    Ok(OmegaEstimate {
        taus: taus.to_vec(),
        raw,
        envelope,
        pool_size: pool.len(),
        failures,
    })
}
