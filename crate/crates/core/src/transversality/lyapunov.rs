use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::TransversalityError;
use crate::ode::MatrixArc;

pub const DEFAULT_LYAPUNOV_STEP: f64 = 0.5;
pub const DEFAULT_LYAPUNOV_HORIZON: f64 = 40.0;
/// Leading fraction of the horizon excluded from the averages while the frames align.
pub const LYAPUNOV_BURN_IN: f64 = 0.25;

/// Time-averaged `log|R_ii|` from periodic QR re-orthonormalization, started
/// from a fixed generic frame and averaged after a burn-in.
///
/// `adjoint` refers to the homogeneous adjoint flow `ψ' = -ψ f_x`, whose
/// propagator is `A^{-T}`; `forward` to `A` itself. Both are sorted in
/// decreasing order, so `adjoint[i] ≈ -forward[m-1-i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub adjoint: Vec<f64>,
    pub forward: Vec<f64>,
    pub horizon: f64,
    pub step: f64,
    /// Length of the initial stretch left out of the averages.
    pub burn_in: f64,
}

/// Householder reflection along `(1, 2, …, m)`: an orthonormal frame not aligned with the axes.
fn generic_frame(m: usize) -> DMatrix<f64> {
    let v = DMatrix::from_fn(m, 1, |i, _| (i + 1) as f64);
    let v = &v / v.norm();
    DMatrix::identity(m, m) - (&v * v.transpose()) * 2.0
}

fn qr_step(
    q: &DMatrix<f64>,
    step: &DMatrix<f64>,
    sums: &mut [f64],
    record: bool,
    t: f64,
) -> Result<DMatrix<f64>, TransversalityError> {
    let qr = (step * q).qr();
    let r = qr.r();
    let mut qn = qr.q();
    for i in 0..sums.len() {
        let d = r[(i, i)];
        if !(d.abs() > 0.0) || !d.is_finite() {
            return Err(TransversalityError::Reorthonormalization { t });
        }
        if record {
            sums[i] += d.abs().ln();
        }
        if d < 0.0 {
            qn.column_mut(i).neg_mut();
        }
    }
    Ok(qn)
}

/// Lyapunov exponents of the flows generated by `a` over `[start, start + horizon]`,
/// re-orthonormalized every `step`.
pub fn lyapunov_exponents(a: &MatrixArc, step: f64, horizon: f64) -> Result<LyapunovEstimate, TransversalityError> {
    if !(step > 0.0) || !(horizon > 0.0) {
        return Err(TransversalityError::Precondition("step and horizon must be positive".into()));
    }
    let (start, end) = (a.start(), a.end());
    if end - start < horizon * (1.0 - 1e-12) {
        return Err(TransversalityError::ShortArc { start, end, need: horizon });
    }
    let m = a.order();
    let n = (horizon / step).ceil() as usize;
    let skip = (n as f64 * LYAPUNOV_BURN_IN).round() as usize;
    let averaged = horizon * (n - skip) as f64 / n as f64;
    let mut qf = generic_frame(m);
    let mut qa = generic_frame(m);
    let mut sf = vec![0.0; m];
    let mut sa = vec![0.0; m];
    let mut prev = a.at(start);
    for k in 1..=n {
        let t = (start + horizon * k as f64 / n as f64).min(end);
        let next = a.at(t);
        let singular = || TransversalityError::Reorthonormalization { t };
        // forward step X = A(t_k+1) A(t_k)^{-1}, from A(t_k)^T X^T = A(t_k+1)^T
        let fwd = prev
            .transpose()
            .lu()
            .solve(&next.transpose())
            .ok_or_else(singular)?
            .transpose();
        // adjoint step A(t_k)^T A(t_k+1)^{-T} = (A(t_k+1)^{-1} A(t_k))^T
        let adj = next.clone().lu().solve(&prev).ok_or_else(singular)?.transpose();
        qf = qr_step(&qf, &fwd, &mut sf, k > skip, t)?;
        qa = qr_step(&qa, &adj, &mut sa, k > skip, t)?;
        prev = next;
    }
    let mut forward: Vec<f64> = sf.iter().map(|s| s / averaged).collect();
    let mut adjoint: Vec<f64> = sa.iter().map(|s| s / averaged).collect();
    forward.sort_by(|x, y| y.total_cmp(x));
    adjoint.sort_by(|x, y| y.total_cmp(x));
    Ok(LyapunovEstimate {
        adjoint,
        forward,
        horizon,
        step,
        burn_in: horizon - averaged,
    })
}
