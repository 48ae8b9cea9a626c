use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::accumulate::{accumulate_open_loop, open_loop};
use super::classify::checkpoint_sups;
use super::{AccumulatedIntegral, CauchyError, GROWTH_THRESHOLD};
use crate::csvfmt::num;
use crate::ode::{vector_norm, OdeOptions};
use crate::problem::{ControlProblem, ReferenceControl};
use crate::tail::{growth_exponent, least_squares};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub radius: f64,
    pub direction: Vec<f64>,
    /// `sup_T ‖I_ξ(T) - I_0(T)‖`, absent when the perturbed integration failed.
    pub sup_diff: Option<f64>,
    /// `ok`, or the error that stopped this perturbation.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityProbe {
    pub t_max: f64,
    pub rows: Vec<ProbeRow>,
    /// Along every direction the sup difference shrinks with the radius.
    pub decreasing: bool,
    /// Least-squares fit `sup_diff ≈ c·r^p`, as `(p, c)`.
    pub modulus: Option<(f64, f64)>,
}

impl ContinuityProbe {
    /// `radius,d_1..d_m,sup_diff,status`.
    pub fn to_csv(&self) -> String {
        let m = self.rows.first().map_or(0, |r| r.direction.len());
        let mut out = String::from("radius");
        for i in 1..=m {
            out.push_str(&format!(",d_{i}"));
        }
        out.push_str(",sup_diff,status\n");
        for r in &self.rows {
            let mut cells = vec![num(r.radius)];
            cells.extend(r.direction.iter().map(|v| num(*v)));
            cells.push(num(r.sup_diff.unwrap_or(f64::NAN)));
            cells.push(r.status.replace(',', ";"));
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn check_radii(radii: &[f64]) -> Result<(), CauchyError> {
    if radii.is_empty() {
        return Err(CauchyError::Precondition("radii list is empty".into()));
    }
    if radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(CauchyError::Precondition("radii must be positive and finite".into()));
    }
    if radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CauchyError::Precondition("radii must be strictly decreasing".into()));
    }
    Ok(())
}

/// Unit coordinate directions `±e_i`.
pub fn axis_directions(m: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * m);
    for i in 0..m {
        for s in [1.0, -1.0] {
            let mut d = vec![0.0; m];
            d[i] = s;
            out.push(d);
        }
    }
    out
}

fn sup_difference(a: &AccumulatedIntegral, b: &AccumulatedIntegral) -> f64 {
    a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| {
            let d: Vec<f64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
            vector_norm(&d)
        })
        .fold(0.0, f64::max)
}

/// Empirical continuity of `ξ ↦ I_ξ` in the sup norm over `[0, t_max]`.
pub fn continuity_probe(
    p: &ControlProblem,
    u0: &ReferenceControl,
    radii: &[f64],
    directions: &[Vec<f64>],
    t_max: f64,
    opts: &OdeOptions,
) -> Result<ContinuityProbe, CauchyError> {
    check_radii(radii)?;
    let m = p.state_dim();
    if directions.is_empty() {
        return Err(CauchyError::Precondition("no probe directions".into()));
    }
    let mut units = Vec::with_capacity(directions.len());
    for d in directions {
        let n = vector_norm(d);
        if d.len() != m || !(n > 0.0) || !n.is_finite() {
            return Err(CauchyError::Precondition(format!(
                "direction {d:?} must be a nonzero vector of length {m}"
            )));
        }
        units.push(d.iter().map(|v| v / n).collect::<Vec<f64>>());
    }
    let control = open_loop(p, u0, t_max, opts)?;
    let base = accumulate_open_loop(p, &control, &vec![0.0; m], t_max, opts)?;

    let jobs: Vec<(f64, &Vec<f64>)> = units
        .iter()
        .flat_map(|d| radii.iter().map(move |&r| (r, d)))
        .collect();
    let rows: Vec<ProbeRow> = jobs
        .par_iter()
        .map(|&(r, d)| {
            let xi: Vec<f64> = d.iter().map(|v| r * v).collect();
            match accumulate_open_loop(p, &control, &xi, t_max, opts) {
                Ok(acc) => ProbeRow {
                    radius: r,
                    direction: d.clone(),
                    sup_diff: Some(sup_difference(&acc, &base)),
                    status: "ok".into(),
                },
                Err(e) => ProbeRow {
                    radius: r,
                    direction: d.clone(),
                    sup_diff: None,
                    status: e.to_string(),
                },
            }
        })
        .collect();

    let decreasing = rows.chunks(radii.len()).all(|per_dir| {
        per_dir.windows(2).all(|w| match (w[0].sup_diff, w[1].sup_diff) {
            (Some(a), Some(b)) => b <= a * (1.0 + 1e-9) + 1e-14,
            _ => false,
        })
    });
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.sup_diff.filter(|s| *s > 0.0).map(|s| (r.radius.ln(), s.ln())))
        .collect();
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let modulus = least_squares(&xs, &ys).map(|(slope, icpt)| (slope, icpt.exp()));
    Ok(ContinuityProbe {
        t_max,
        rows,
        decreasing,
        modulus,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbnormalityProbe {
    pub xi: Vec<f64>,
    pub sup_norm: Option<f64>,
    pub growth_exponent: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbnormalityReport {
    pub t_max: f64,
    pub probes: Vec<AbnormalityProbe>,
    /// Largest `‖I_ξ(τ)‖` over all probes and sample times.
    pub sup_norm: f64,
    /// Largest fitted log-log growth exponent over the probes.
    pub max_growth: f64,
    /// `‖I_ξ‖` stays bounded on every probe, so abnormality is excluded at probe scale.
    pub excluded: bool,
}

impl AbnormalityReport {
    pub fn message(&self) -> String {
        if self.excluded {
            format!(
                "abnormality excluded at probe scale (sup |I| = {:.6e}, growth exponent {:.4})",
                self.sup_norm, self.max_growth
            )
        } else {
            format!(
                "abnormality not excluded (sup |I| = {:.6e}, growth exponent {:.4})",
                self.sup_norm, self.max_growth
            )
        }
    }
}

/// Boundedness of `I_ξ(τ)` over `τ ≤ t_max` and `ξ ∈ {0} ∪ {±r e_i}`.
/// Bounded growth (exponent at most [`GROWTH_THRESHOLD`] on every probe)
/// rules out an abnormal reference pair at the probed scale.
pub fn abnormality_indicator(
    p: &ControlProblem,
    u0: &ReferenceControl,
    radii: &[f64],
    t_max: f64,
    opts: &OdeOptions,
) -> Result<AbnormalityReport, CauchyError> {
    check_radii(radii)?;
    let m = p.state_dim();
    let control = open_loop(p, u0, t_max, opts)?;
    let mut xis = vec![vec![0.0; m]];
    for d in axis_directions(m) {
        for &r in radii {
            xis.push(d.iter().map(|v| r * v).collect());
        }
    }
    let probes: Vec<AbnormalityProbe> = xis
        .par_iter()
        .map(|xi| match accumulate_open_loop(p, &control, xi, t_max, opts) {
            Ok(acc) => {
                let sups = checkpoint_sups(&acc);
                let g = growth_exponent(&acc.checkpoints, &sups);
                AbnormalityProbe {
                    xi: xi.clone(),
                    sup_norm: Some(sups.iter().copied().fold(0.0, f64::max)),
                    growth_exponent: g.is_finite().then_some(g),
                    status: "ok".into(),
                }
            }
            Err(e) => AbnormalityProbe {
                xi: xi.clone(),
                sup_norm: None,
                growth_exponent: None,
                status: e.to_string(),
            },
        })
        .collect();
    let all_ok = probes.iter().all(|p| p.sup_norm.is_some());
    let sup_norm = if all_ok {
        probes.iter().filter_map(|p| p.sup_norm).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    let max_growth = probes
        .iter()
        .filter_map(|p| p.growth_exponent)
        .fold(f64::NEG_INFINITY, f64::max);
    let max_growth = if all_ok { max_growth.max(0.0) } else { f64::INFINITY };
    Ok(AbnormalityReport {
        t_max,
        probes,
        sup_norm,
        max_growth,
        excluded: all_ok && max_growth <= GROWTH_THRESHOLD,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{builtin, load_problem};

    fn problem(dynamics: &str, payoff: &str) -> ControlProblem {
        load_problem(&format!(
            r#"
            state_dim = 1
            control_dim = 1
            dynamics = ["{dynamics}"]
            payoff = "{payoff}"
            reference = ["0"]
            [control]
            kind = "box"
            lower = [-1]
            upper = [1]
            "#
        ))
        .unwrap()
    }

    #[test]
    fn linear_gradient_is_independent_of_start() {
        let p = problem("u1", "exp(-t)*x1");
        let r = continuity_probe(&p, p.reference().unwrap(), &[0.5, 0.1], &axis_directions(1), 16.0, &OdeOptions::default())
            .unwrap();
        assert!(r.rows.iter().all(|row| row.sup_diff == Some(0.0)));
        assert!(r.modulus.is_none());
        assert!(r.to_csv().starts_with("radius,d_1,sup_diff,status\n"));
    }

    #[test]
    fn quadratic_payoff_gives_linear_modulus() {
        // g = -x^2 e^{-t}, x' = 0: I_ξ(T) - I_0(T) = -2ξ(1 - e^{-T})
        let p = problem("0*u1", "-x1^2*exp(-t)");
        let radii = [0.4, 0.2, 0.1, 0.05];
        let r = continuity_probe(&p, p.reference().unwrap(), &radii, &[vec![1.0]], 16.0, &OdeOptions::default()).unwrap();
        assert!(r.decreasing);
        for row in &r.rows {
            let exact = 2.0 * row.radius * (1.0 - f64::exp(-16.0));
            assert!((row.sup_diff.unwrap() - exact).abs() < 1e-8);
        }
        let (pw, c) = r.modulus.unwrap();
        assert!((pw - 1.0).abs() < 1e-6 && (c - 2.0).abs() < 1e-5);
    }

    #[test]
    fn radii_must_decrease() {
        let p = problem("u1", "x1");
        let u = p.reference().unwrap().clone();
        let o = OdeOptions::default();
        assert!(continuity_probe(&p, &u, &[0.1, 0.2], &[vec![1.0]], 8.0, &o).is_err());
        assert!(continuity_probe(&p, &u, &[0.1], &[vec![0.0]], 8.0, &o).is_err());
        assert!(abnormality_indicator(&p, &u, &[], 8.0, &o).is_err());
    }

    #[test]
    fn abnormality_verdicts() {
        let o = OdeOptions::default();
        let p = builtin("scalar-exp").unwrap();
        let r = abnormality_indicator(&p, p.reference().unwrap(), &[0.1, 0.01], 64.0, &o).unwrap();
        assert!(r.excluded, "{}", r.message());
        let q = problem("0*u1", "x1");
        let r = abnormality_indicator(&q, q.reference().unwrap(), &[0.1], 64.0, &o).unwrap();
        assert!(!r.excluded);
        assert!((r.max_growth - 1.0).abs() < 0.05, "{}", r.message());
    }
}
