use nalgebra::{DMatrix, RowDVector};
use rayon::prelude::*;

use super::accumulate::AccumulateSystem;
use super::{AccumulatedArcs, AccumulatedIntegral, CauchyError};
use crate::csvfmt::num;
use crate::ode::{checked_inverse, one_norm, solve, vector_norm, AdjointArc, DenseArc, OdeOptions};
use crate::problem::ControlProblem;

/// Largest tolerated rounding amplification `ε·‖I‖·‖A⁻¹(T)‖` when the
/// output span is chosen automatically.
pub const PSI_ROUNDING_BUDGET: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct CauchyAdjoint {
    pub lambda0: f64,
    pub i_star: Vec<f64>,
    /// Right end of the span on which `ψ⁰` was evaluated.
    pub t_out: f64,
    /// `(I_* - I_0(T)) A⁻¹(T)`: the adjoint with unit payoff multiplier.
    pub psi_unit: AdjointArc,
    /// `λ⁰ · psi_unit`, normalized so that `‖ψ⁰(0)‖ + λ⁰ = 1`.
    pub psi: AdjointArc,
}

impl CauchyAdjoint {
    /// `t,psi_1..psi_m,psi_unit_1..psi_unit_m` at the arc nodes.
    pub fn to_csv(&self) -> String {
        let m = self.psi.dim();
        let mut head = vec!["t".to_string()];
        head.extend((1..=m).map(|i| format!("psi_{i}")));
        head.extend((1..=m).map(|i| format!("psi_unit_{i}")));
        let mut out = head.join(",");
        out.push('\n');
        for (k, t) in self.psi.times().iter().enumerate() {
            let mut cells = vec![num(*t)];
            cells.extend(self.psi.node(k).iter().map(|v| num(*v)));
            cells.extend(self.psi_unit.node(k).iter().map(|v| num(*v)));
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn arcs_of(acc: &AccumulatedIntegral) -> Result<&AccumulatedArcs, CauchyError> {
    acc.arcs
        .as_ref()
        .ok_or_else(|| CauchyError::Precondition("accumulated integral carries no dense arcs".into()))
}

fn row_times_matrix(v: &[f64], m: &DMatrix<f64>) -> Vec<f64> {
    (RowDVector::from_row_slice(v) * m).iter().copied().collect()
}

/// Evaluate `λ⁰ = 1/(1 + ‖I_*‖)` and `ψ⁰(T) = λ⁰ (I_* - I_0(T)) A⁻¹(T)` on the
/// sample and solver nodes of `acc` inside `[0, t_out]`.
///
/// With `t_out = None` the span is `[0, T_max/2]`, cut short where the
/// rounding error of `I_* - I_0(T)` amplified by `‖A⁻¹(T)‖` would exceed
/// [`PSI_ROUNDING_BUDGET`]. An explicit `t_out` is honoured exactly and a
/// singular `A(T)` is an error.
pub fn cauchy_adjoint(
    p: &ControlProblem,
    acc: &AccumulatedIntegral,
    i_star: &[f64],
    t_out: Option<f64>,
) -> Result<CauchyAdjoint, CauchyError> {
    let arcs = arcs_of(acc)?;
    let m = p.state_dim();
    if i_star.len() != m || acc.dim() != m {
        return Err(CauchyError::Precondition(format!(
            "limit has length {} but state_dim is {m}",
            i_star.len()
        )));
    }
    let t_max = acc.t_max();
    let auto = t_out.is_none();
    let t_req = t_out.unwrap_or(t_max / 2.0);
    if !(t_req > 0.0) || t_req > t_max {
        return Err(CauchyError::SpanMismatch(format!(
            "output span [0, {t_req}] is not inside [0, {t_max}]"
        )));
    }

    let mut grid: Vec<f64> = acc
        .times
        .iter()
        .chain(arcs.x.times())
        .copied()
        .filter(|&t| t < t_req)
        .collect();
    grid.push(t_req);
    grid.sort_by(f64::total_cmp);
    let mut nodes: Vec<f64> = Vec::with_capacity(grid.len());
    for t in grid {
        match nodes.last_mut() {
            Some(prev) if t - *prev <= 1e-9 * t.abs().max(1.0) => *prev = t,
            _ => nodes.push(t),
        }
    }

    let i_norm = vector_norm(i_star);
    let lambda0 = 1.0 / (1.0 + i_norm);
    let mut times = Vec::with_capacity(nodes.len());
    let mut values = Vec::with_capacity(nodes.len() * m);
    let mut derivs = Vec::with_capacity(nodes.len() * m);
    for &t in &nodes {
        let a = arcs.a.at(t);
        let inv = match checked_inverse(&a, t) {
            Ok(inv) => inv,
            Err(_) if auto && times.len() >= 2 => break,
            Err(e) => return Err(e.into()),
        };
        let i_t = arcs.i.eval(t);
        let scale = i_norm.max(vector_norm(&i_t)).max(1.0);
        if auto && times.len() >= 2 && f64::EPSILON * scale * one_norm(&inv) > PSI_ROUNDING_BUDGET {
            break;
        }
        let diff: Vec<f64> = i_star.iter().zip(&i_t).map(|(s, v)| s - v).collect();
        let psi = row_times_matrix(&diff, &inv);
        let x = arcs.x.eval(t);
        let u = arcs.control.value(t, &x, None)?;
        let fx = p.f_x(t, &x, &u)?;
        let gx = p.g_x(t, &x, &u)?;
        let pf = row_times_matrix(&psi, &fx);
        derivs.extend(pf.iter().zip(&gx).map(|(a, b)| -a - b));
        values.extend(psi);
        times.push(t);
    }
    if times.len() < 2 {
        return Err(CauchyError::Precondition("fewer than two usable output nodes".into()));
    }
    let t_end = *times.last().unwrap();
    let psi_unit = AdjointArc::new(DenseArc::from_nodes(m, times, values, &derivs));
    Ok(CauchyAdjoint {
        lambda0,
        i_star: i_star.to_vec(),
        t_out: t_end,
        psi: psi_unit.scaled(lambda0),
        psi_unit,
    })
}

/// `sup_T ‖ψ(T)A(T) - λ(I_* - I_0(T))‖` over the nodes of `psi`.
pub fn verify_product_identity(
    lambda: f64,
    psi: &AdjointArc,
    acc: &AccumulatedIntegral,
    i_star: &[f64],
) -> Result<f64, CauchyError> {
    let arcs = arcs_of(acc)?;
    let slack = 1e-9 * psi.end().abs().max(1.0);
    if psi.start() < arcs.a.start() - slack || psi.end() > arcs.a.end() + slack {
        return Err(CauchyError::SpanMismatch(format!(
            "adjoint spans [{}, {}] but the fundamental matrix spans [{}, {}]",
            psi.start(),
            psi.end(),
            arcs.a.start(),
            arcs.a.end()
        )));
    }
    if psi.dim() != i_star.len() || acc.dim() != i_star.len() {
        return Err(CauchyError::SpanMismatch("dimension mismatch between adjoint and integral".into()));
    }
    let mut worst: f64 = 0.0;
    for (k, &t) in psi.times().iter().enumerate() {
        let lhs = row_times_matrix(psi.node(k), &arcs.a.at(t));
        let i_t = arcs.i.eval(t);
        let d: Vec<f64> = lhs
            .iter()
            .zip(i_star.iter().zip(&i_t))
            .map(|(l, (s, v))| l - lambda * (s - v))
            .collect();
        worst = worst.max(vector_norm(&d));
    }
    Ok(worst)
}

/// Largest residual of `ψ̇ = -ψ f_x - λ⁰ g_x` for the normalized Cauchy
/// adjoint, sampled at the midpoint of every solver interval inside
/// `[0, t_out]`.
///
/// `x`, `A` and `I` are re-integrated locally from the left node with tight
/// tolerances; `ψ̇` is a Richardson-extrapolated central difference of the
/// formula itself, so the check is independent of the interpolation of `ψ`.
pub fn adjoint_ode_residual(
    p: &ControlProblem,
    acc: &AccumulatedIntegral,
    cauchy: &CauchyAdjoint,
) -> Result<f64, CauchyError> {
    let arcs = arcs_of(acc)?;
    let m = p.state_dim();
    let node_times = arcs.x.times();
    let t_out = cauchy.t_out;
    let intervals: Vec<usize> = (0..node_times.len() - 1)
        .filter(|&k| node_times[k + 1] <= t_out * (1.0 + 1e-12))
        .collect();
    let sys = AccumulateSystem { p, u: &arcs.control };
    let tight = OdeOptions {
        atol: 1e-14,
        rtol: 1e-13,
        ..OdeOptions::default()
    };
    let lambda0 = cauchy.lambda0;
    let i_star = &cauchy.i_star;

    let residuals: Vec<f64> = intervals
        .par_iter()
        .map(|&k| -> Result<f64, CauchyError> {
            let (tl, tr) = (node_times[k], node_times[k + 1]);
            let tm = 0.5 * (tl + tr);
            let h = (0.25 * (tr - tl)).min(0.01);
            let mut y0 = arcs.x.node(k).to_vec();
            y0.extend_from_slice(arcs.a.arc().node(k));
            y0.extend_from_slice(arcs.i.node(k));
            let probes = [tm - h, tm - 0.5 * h, tm, tm + 0.5 * h, tm + h];
            let local = solve(&sys, tl, &y0, tm + h, &probes, &tight)?;
            let psi_at = |t: f64| -> Result<(Vec<f64>, Vec<f64>), CauchyError> {
                let y = local.eval(t);
                let a = DMatrix::from_row_slice(m, m, &y[m..m + m * m]);
                let inv = checked_inverse(&a, t)?;
                let diff: Vec<f64> = i_star.iter().zip(&y[m + m * m..]).map(|(s, v)| s - v).collect();
                Ok((row_times_matrix(&diff, &inv), y[..m].to_vec()))
            };
            let (pm2, _) = psi_at(probes[0])?;
            let (pm1, _) = psi_at(probes[1])?;
            let (psi_m, x_m) = psi_at(tm)?;
            let (pp1, _) = psi_at(probes[3])?;
            let (pp2, _) = psi_at(probes[4])?;
            let seg = crate::ode::Segment::new(tl, tr);
            let u = arcs.control.value(tm, &x_m, Some(seg))?;
            let fx = p.f_x(tm, &x_m, &u)?;
            let gx = p.g_x(tm, &x_m, &u)?;
            let pf = row_times_matrix(&psi_m, &fx);
            let r: Vec<f64> = (0..m)
                .map(|j| {
                    let d1 = (pp2[j] - pm2[j]) / (2.0 * h);
                    let d2 = (pp1[j] - pm1[j]) / h;
                    let dpsi = (4.0 * d2 - d1) / 3.0;
                    lambda0 * (dpsi + pf[j] + gx[j])
                })
                .collect();
            Ok(vector_norm(&r))
        })
        .collect::<Result<_, _>>()?;
    Ok(residuals.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cauchy::accumulate;
    use crate::problem::builtin;

    fn run(name: &str) -> (ControlProblem, AccumulatedIntegral, CauchyAdjoint) {
        let p = builtin(name).unwrap();
        let acc = accumulate(&p, p.reference().unwrap(), &vec![0.0; p.state_dim()], 64.0, &OdeOptions::default()).unwrap();
        let i_star = acc.last().to_vec();
        let c = cauchy_adjoint(&p, &acc, &i_star, None).unwrap();
        (p, acc, c)
    }

    #[test]
    fn halkin_adjoint_is_minus_half() {
        let (p, acc, c) = run("halkin");
        assert!((c.lambda0 - 0.5).abs() < 1e-8);
        assert!(c.t_out > 10.0 && c.t_out <= 32.0, "{}", c.t_out);
        for k in 0..c.psi.len() {
            assert!((c.psi.node(k)[0] + 0.5).abs() < 1e-6, "t={}", c.psi.times()[k]);
        }
        let dev = verify_product_identity(c.lambda0, &c.psi, &acc, &c.i_star).unwrap();
        assert!(dev < 1e-10, "{dev}");
        let res = adjoint_ode_residual(&p, &acc, &c).unwrap();
        assert!(res < 1e-5, "{res}");
    }

    #[test]
    fn scalar_exp_unit_adjoint() {
        let (p, acc, c) = run("scalar-exp");
        assert!((c.lambda0 - 0.5).abs() < 1e-8);
        assert_eq!(c.t_out, 32.0);
        for t in (0..=200).map(|k| k as f64 * 0.1) {
            assert!((c.psi_unit.eval(t)[0] - f64::exp(-t)).abs() < 1e-6, "t={t}");
        }
        assert!(adjoint_ode_residual(&p, &acc, &c).unwrap() < 1e-5);
        // normalization of the multipliers
        assert!((c.psi.node(0)[0].abs() + c.lambda0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn injected_fault_is_detected() {
        let (_, acc, c) = run("scalar-exp");
        let mut arc = c.psi.clone().into_arc();
        let shifted = DenseArc::from_nodes(
            1,
            arc.times().to_vec(),
            (0..arc.len()).map(|k| arc.node(k)[0] + 0.01).collect(),
            &vec![0.0; arc.len()],
        );
        arc = shifted;
        let dev = verify_product_identity(c.lambda0, &AdjointArc::new(arc), &acc, &c.i_star).unwrap();
        assert!((dev - 0.01).abs() < 1e-6, "{dev}");
    }

    #[test]
    fn explicit_span_outside_is_rejected() {
        let (p, acc, c) = run("monotone-growth");
        assert!(cauchy_adjoint(&p, &acc, &c.i_star, Some(100.0)).is_err());
        assert!(cauchy_adjoint(&p, &acc, &[1.0, 2.0], None).is_err());
    }
}
