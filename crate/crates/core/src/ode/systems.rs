use nalgebra::DMatrix;
use thiserror::Error;

use super::{solve, AdjointArc, DenseArc, MatrixArc, OdeError, OdeOptions, OdeSystem, Segment, Trajectory};
use crate::expr::EvalError;
use crate::problem::{ControlProblem, ReferenceControl};

/// Inverses with a 1-norm condition number above this are refused.
pub const COND_LIMIT: f64 = 1e14;

#[derive(Debug, Error, PartialEq)]
pub enum InverseError {
    #[error("fundamental matrix is singular or ill-conditioned at t = {t} (cond = {cond:e})")]
    Singular { t: f64, cond: f64 },
}

fn merged_stops(u: &ReferenceControl, extra: &[f64], a: f64, b: f64) -> Vec<f64> {
    let mut s = u.breakpoints(a, b);
    s.extend(extra.iter().copied().filter(|&t| t > a && t < b));
    s.sort_by(f64::total_cmp);
    s.dedup();
    s
}

/// Column-relative error scale for a row-major `m×m` block at `offset`:
/// every entry of column `j` is measured against the column's sup norm.
pub(crate) fn matrix_scale(y0: &[f64], y1: &[f64], m: usize, offset: usize, opts: &OdeOptions, sc: &mut [f64]) {
    for j in 0..m {
        let mut norm: f64 = 0.0;
        for i in 0..m {
            let k = offset + i * m + j;
            norm = norm.max(y0[k].abs()).max(y1[k].abs());
        }
        let s = ((opts.atol + opts.rtol) * norm).max(f64::MIN_POSITIVE);
        for i in 0..m {
            sc[offset + i * m + j] = s;
        }
    }
}

struct StateSystem<'a> {
    p: &'a ControlProblem,
    u: &'a ReferenceControl,
    payoff: bool,
}

impl OdeSystem for StateSystem<'_> {
    fn dim(&self) -> usize {
        self.p.state_dim() + usize::from(self.payoff)
    }

    fn control_defect(&self) -> bool {
        true
    }

    fn rhs(&self, t: f64, y: &[f64], seg: Segment, dy: &mut [f64]) -> Result<(), EvalError> {
        let m = self.p.state_dim();
        let x = &y[..m];
        let mut u = Vec::with_capacity(self.p.control_dim());
        self.u.value_into(t, x, Some(seg), &mut u)?;
        self.p.f_into(t, x, &u, &mut dy[..m])?;
        if self.payoff {
            dy[m] = self.p.g(t, x, &u)?;
        }
        Ok(())
    }

    fn monitored_norm(&self, y: &[f64]) -> f64 {
        y[..self.p.state_dim()].iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Solve `x' = f(t, x, u(t, x))` from `x(a) = x_init` up to `b`.
pub fn integrate_state(
    p: &ControlProblem,
    u: &ReferenceControl,
    x_init: &[f64],
    span: (f64, f64),
    opts: &OdeOptions,
) -> Result<Trajectory, OdeError> {
    let sys = StateSystem { p, u, payoff: false };
    let stops = merged_stops(u, &[], span.0, span.1);
    Ok(Trajectory(solve(&sys, span.0, x_init, span.1, &stops, opts)?))
}

/// As [`integrate_state`], also returning the running payoff `∫_a^t g` as a scalar arc.
pub fn integrate_state_with_payoff(
    p: &ControlProblem,
    u: &ReferenceControl,
    x_init: &[f64],
    span: (f64, f64),
    opts: &OdeOptions,
) -> Result<(Trajectory, DenseArc), OdeError> {
    let m = p.state_dim();
    let sys = StateSystem { p, u, payoff: true };
    let stops = merged_stops(u, &[], span.0, span.1);
    let mut y0 = x_init.to_vec();
    y0.push(0.0);
    let arc = solve(&sys, span.0, &y0, span.1, &stops, opts)?;
    Ok((Trajectory(arc.components(0..m)), arc.components(m..m + 1)))
}

struct AdjointSystem<'a> {
    p: &'a ControlProblem,
    u: &'a ReferenceControl,
    x: &'a Trajectory,
    lambda: f64,
}

impl OdeSystem for AdjointSystem<'_> {
    fn dim(&self) -> usize {
        self.p.state_dim()
    }

    fn rhs(&self, t: f64, psi: &[f64], seg: Segment, dy: &mut [f64]) -> Result<(), EvalError> {
        let m = self.p.state_dim();
        let x = self.x.eval(t);
        let u = self.u.value(t, &x, Some(seg))?;
        let fx = self.p.f_x(t, &x, &u)?;
        let gx = self.p.g_x(t, &x, &u)?;
        for j in 0..m {
            let mut acc = self.lambda * gx[j];
            for i in 0..m {
                acc += psi[i] * fx[(i, j)];
            }
            dy[j] = -acc;
        }
        Ok(())
    }
}

/// Solve `ψ' = -ψ f_x - λ g_x` backward from `ψ(b) = psi_end` to `a`,
/// along the state arc `x` under control `u`.
pub fn integrate_adjoint_backward(
    p: &ControlProblem,
    u: &ReferenceControl,
    x: &Trajectory,
    lambda: f64,
    psi_end: &[f64],
    span: (f64, f64),
    opts: &OdeOptions,
) -> Result<AdjointArc, OdeError> {
    let sys = AdjointSystem { p, u, x, lambda };
    let stops = merged_stops(u, x.times(), span.0, span.1);
    let arc = solve(&sys, span.1, psi_end, span.0, &stops, opts)?;
    Ok(AdjointArc(arc))
}

struct MatrixSystem<'a> {
    p: &'a ControlProblem,
    u: &'a ReferenceControl,
    x: &'a Trajectory,
}

impl OdeSystem for MatrixSystem<'_> {
    fn dim(&self) -> usize {
        let m = self.p.state_dim();
        m * m + 1
    }

    fn rhs(&self, t: f64, y: &[f64], seg: Segment, dy: &mut [f64]) -> Result<(), EvalError> {
        let m = self.p.state_dim();
        let x = self.x.eval(t);
        let u = self.u.value(t, &x, Some(seg))?;
        let fx = self.p.f_x(t, &x, &u)?;
        for i in 0..m {
            for j in 0..m {
                let mut acc = 0.0;
                for k in 0..m {
                    acc += fx[(i, k)] * y[k * m + j];
                }
                dy[i * m + j] = acc;
            }
        }
        dy[m * m] = fx.trace();
        Ok(())
    }

    fn error_scale(&self, y0: &[f64], y1: &[f64], opts: &OdeOptions, sc: &mut [f64]) {
        let m = self.p.state_dim();
        matrix_scale(y0, y1, m, 0, opts, sc);
        let l = m * m;
        sc[l] = opts.atol + opts.rtol * y0[l].abs().max(y1[l].abs());
    }

    fn monitored_norm(&self, _y: &[f64]) -> f64 {
        0.0
    }
}

/// Fundamental matrix `A' = f_x A`, `A(a) = I`, along `x` under `u`.
/// `log|det A|` is co-integrated from the trace of `f_x`.
pub fn fundamental_matrix(
    p: &ControlProblem,
    u: &ReferenceControl,
    x: &Trajectory,
    span: (f64, f64),
    opts: &OdeOptions,
) -> Result<MatrixArc, OdeError> {
    let m = p.state_dim();
    let sys = MatrixSystem { p, u, x };
    let mut y0 = vec![0.0; m * m + 1];
    for i in 0..m {
        y0[i * m + i] = 1.0;
    }
    let stops = merged_stops(u, x.times(), span.0, span.1);
    let arc = solve(&sys, span.0, &y0, span.1, &stops, opts)?;
    let log_det = (0..arc.len()).map(|i| arc.node(i)[m * m]).collect();
    Ok(MatrixArc::new(arc.components(0..m * m), m, log_det))
}

/// `A(t)^{-1}` by LU, refused when the 1-norm condition number exceeds [`COND_LIMIT`].
pub fn inverse_at(a: &MatrixArc, t: f64) -> Result<DMatrix<f64>, InverseError> {
    checked_inverse(&a.at(t), t)
}

pub(crate) fn checked_inverse(mat: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>, InverseError> {
    let inv = mat
        .clone()
        .lu()
        .try_inverse()
        .ok_or(InverseError::Singular { t, cond: f64::INFINITY })?;
    let cond = one_norm(mat) * one_norm(&inv);
    if !cond.is_finite() || cond > COND_LIMIT {
        return Err(InverseError::Singular { t, cond });
    }
    Ok(inv)
}

pub(crate) fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{builtin, load_problem};

    #[test]
    fn halkin_state_and_matrix() {
        let p = builtin("halkin").unwrap();
        let u = p.reference().unwrap();
        let opts = OdeOptions::default();
        let x = integrate_state(&p, u, p.x0(), (0.0, 10.0), &opts).unwrap();
        assert!((x.eval(3.0)[0] - (1.0 - f64::exp(-3.0))).abs() < 1e-9);
        let a = fundamental_matrix(&p, u, &x, (0.0, 10.0), &opts).unwrap();
        for t in [0.0, 2.0, 7.5, 10.0] {
            let v = a.at(t)[(0, 0)];
            assert!(((v - f64::exp(-t)) / f64::exp(-t)).abs() < 1e-7, "t={t}");
        }
        let last = *a.log_det().last().unwrap();
        assert!((last + 10.0).abs() < 1e-8);
    }

    #[test]
    fn halkin_adjoint_closed_form() {
        // with psi(tau) = 0 and lambda = 1: psi(t) = e^{-(tau - t)} - 1
        let p = builtin("halkin").unwrap();
        let u = p.reference().unwrap();
        let opts = OdeOptions::default();
        let tau = 6.0;
        let x = integrate_state(&p, u, p.x0(), (0.0, tau), &opts).unwrap();
        let psi = integrate_adjoint_backward(&p, u, &x, 1.0, &[0.0], (0.0, tau), &opts).unwrap();
        assert_eq!(psi.start(), 0.0);
        for t in [0.0, 1.0, 3.3, 6.0] {
            let want = f64::exp(-(tau - t)) - 1.0;
            assert!((psi.eval(t)[0] - want).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn payoff_accumulation() {
        let p = builtin("monotone-growth").unwrap();
        let u = p.reference().unwrap();
        let (x, j) = integrate_state_with_payoff(&p, u, p.x0(), (0.0, 5.0), &OdeOptions::default()).unwrap();
        // x = t, ∫ e^{-t} t dt = 1 - (1 + T) e^{-T}
        assert!((x.eval(5.0)[0] - 5.0).abs() < 1e-10);
        let want = 1.0 - 6.0 * f64::exp(-5.0);
        assert!((j.eval(5.0)[0] - want).abs() < 1e-8, "{}", j.eval(5.0)[0] - want);
    }

    #[test]
    fn rotation_matrix_and_inverse() {
        let doc = r#"
            state_dim = 2
            control_dim = 1
            dynamics = ["x2", "-x1"]
            payoff = "0"
            [control]
            kind = "box"
            lower = [0]
            upper = [0]
        "#;
        let p = load_problem(doc).unwrap();
        let u = ReferenceControl::constant(vec![0.0], 5.0);
        let opts = OdeOptions::default();
        let x = integrate_state(&p, &u, &[1.0, 0.0], (0.0, 5.0), &opts).unwrap();
        let a = fundamental_matrix(&p, &u, &x, (0.0, 5.0), &opts).unwrap();
        let t: f64 = 2.0;
        let m = a.at(t);
        assert!((m[(0, 0)] - t.cos()).abs() < 1e-8);
        assert!((m[(0, 1)] - t.sin()).abs() < 1e-8);
        let inv = inverse_at(&a, t).unwrap();
        let prod = &m * inv;
        assert!((prod - DMatrix::identity(2, 2)).abs().max() < 1e-12);
    }

    #[test]
    fn singular_inverse_refused() {
        let mat = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(checked_inverse(&mat, 0.0).is_err());
        let near = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-15]);
        assert!(matches!(checked_inverse(&near, 1.0), Err(InverseError::Singular { .. })));
    }
}
