//! Dormand–Prince 5(4) with FSAL, Hairer-style step control and a quartic
//! continuous extension.

use super::{DenseArc, OdeError, OdeOptions, Segment};
use crate::expr::EvalError;

/// A first-order system `y' = F(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    /// Evaluate `F(t, y)` into `dy`. `seg` is the integration segment the
    /// step belongs to, for right-hand sides with jumps at segment ends.
    fn rhs(&self, t: f64, y: &[f64], seg: Segment, dy: &mut [f64]) -> Result<(), EvalError>;

    /// Per-component error scale for a step from `y0` to `y1`.
    fn error_scale(&self, y0: &[f64], y1: &[f64], opts: &OdeOptions, sc: &mut [f64]) {
        for ((s, a), b) in sc.iter_mut().zip(y0).zip(y1) {
            *s = opts.atol + opts.rtol * a.abs().max(b.abs());
        }
    }

    /// Also require the midpoint defect `y'(t½) - F(t½, y(t½))` of the dense
    /// output to stay within the error scale.
    fn control_defect(&self) -> bool {
        false
    }

    /// Norm compared against the blow-up threshold.
    fn monitored_norm(&self, y: &[f64]) -> f64 {
        y.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

struct Work {
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
    err: Vec<f64>,
    sc: Vec<f64>,
    bubble: Vec<f64>,
    mid: Vec<f64>,
    fmid: Vec<f64>,
}

impl Work {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            ytmp: vec![0.0; n],
            ynew: vec![0.0; n],
            err: vec![0.0; n],
            sc: vec![0.0; n],
            bubble: vec![0.0; n],
            mid: vec![0.0; n],
            fmid: vec![0.0; n],
        }
    }
}

fn rms(v: &[f64], sc: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().zip(sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn call<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    seg: Segment,
    dy: &mut [f64],
) -> Result<(), OdeError> {
    sys.rhs(t, y, seg, dy).map_err(|source| OdeError::Rhs { t, source })?;
    if dy.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::NonFinite { t });
    }
    Ok(())
}

fn initial_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    f0: &[f64],
    seg: Segment,
    dir: f64,
    opts: &OdeOptions,
    w: &mut Work,
) -> Result<f64, OdeError> {
    sys.error_scale(y, y, opts, &mut w.sc);
    let d0 = rms(y, &w.sc);
    let d1 = rms(f0, &w.sc);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(seg.len()).min(opts.max_step);
    for i in 0..y.len() {
        w.ytmp[i] = y[i] + dir * h0 * f0[i];
    }
    let mut f1 = vec![0.0; y.len()];
    call(sys, t + dir * h0, &w.ytmp, seg, &mut f1)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff, &w.sc) / h0;
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dm).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(seg.len()).min(opts.max_step))
}

/// Integrate from `t0` to `t1` (either direction), restarting the method at
/// every time in `stops` that lies strictly between them. Steps land exactly
/// on stops. The returned arc is ordered by increasing time.
pub fn solve<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t1: f64,
    stops: &[f64],
    opts: &OdeOptions,
) -> Result<DenseArc, OdeError> {
    let n = sys.dim();
    if y0.len() != n {
        return Err(OdeError::Dimension {
            expected: n,
            got: y0.len(),
        });
    }
    if !(t0.is_finite() && t1.is_finite()) || t0 == t1 {
        return Err(OdeError::InvalidSpan { start: t0, end: t1 });
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::NonFinite { t: t0 });
    }
    let dir = if t1 > t0 { 1.0 } else { -1.0 };
    let (lo, hi) = if dir > 0.0 { (t0, t1) } else { (t1, t0) };
    let mut marks: Vec<f64> = stops.iter().copied().filter(|&s| s > lo && s < hi).collect();
    marks.sort_by(f64::total_cmp);
    if dir < 0.0 {
        marks.reverse();
    }
    marks.push(t1);
    // drop stops too close to their predecessor to carry a step
    let close = |a: f64, b: f64| (a - b).abs() <= 64.0 * f64::EPSILON * a.abs().max(b.abs()).max(1.0);
    let mut kept: Vec<f64> = Vec::with_capacity(marks.len());
    for &s in &marks {
        let prev = kept.last().copied().unwrap_or(t0);
        if s == t1 {
            if close(prev, t1) && !kept.is_empty() {
                kept.pop();
            }
            kept.push(t1);
        } else if !close(prev, s) {
            kept.push(s);
        }
    }
    let marks = kept;

    let mut arc = DenseArc::with_start(n, t0, y0);
    let mut w = Work::new(n);
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut h_prev: Option<f64> = None;
    let mut steps = 0usize;

    for &b in &marks {
        let seg = Segment::new(t.min(b), t.max(b));
        call(sys, t, &y, seg, &mut w.k[0])?;
        let mut h = match h_prev {
            Some(h) => h.min(seg.len()).min(opts.max_step),
            None => {
                let f0 = w.k[0].clone();
                initial_step(sys, t, &y, &f0, seg, dir, opts, &mut w)?
            }
        };
        let mut rejected = false;
        loop {
            let remaining = (b - t).abs();
            let mut last = false;
            if h >= remaining * (1.0 - 1e-12) {
                h = remaining;
                last = true;
            }
            let h_min = 16.0 * f64::EPSILON * t.abs().max(1.0);
            if h < h_min {
                return Err(OdeError::StepUnderflow { t });
            }
            steps += 1;
            if steps > opts.max_steps {
                return Err(OdeError::TooManySteps { t });
            }
            let hs = dir * h;
            let err = attempt(sys, t, &y, hs, seg, &mut w)?;
            sys.error_scale(&y, &w.ynew, opts, &mut w.sc);
            for i in 0..n {
                w.err[i] = hs
                    * (E1 * w.k[0][i]
                        + E3 * w.k[2][i]
                        + E4 * w.k[3][i]
                        + E5 * w.k[4][i]
                        + E6 * w.k[5][i]
                        + E7 * w.k[6][i]);
            }
            let e = if err { f64::INFINITY } else { rms(&w.err, &w.sc) };
            if e <= 1.0 {
                for i in 0..n {
                    w.bubble[i] = hs
                        * (D1 * w.k[0][i]
                            + D3 * w.k[2][i]
                            + D4 * w.k[3][i]
                            + D5 * w.k[4][i]
                            + D6 * w.k[5][i]
                            + D7 * w.k[6][i]);
                }
            }
            let defect = if e <= 1.0 && sys.control_defect() {
                midpoint_defect(sys, t, &y, hs, seg, &mut w)?
            } else {
                0.0
            };
            if e <= 1.0 && defect <= 1.0 {
                let t_new = if last { b } else { t + hs };
                arc.push_interval(t_new, &w.ynew, &w.k[0], &w.k[6], &w.bubble);
                t = t_new;
                std::mem::swap(&mut y, &mut w.ynew);
                if sys.monitored_norm(&y) > opts.blowup {
                    return Err(OdeError::BlowUp { t });
                }
                let (a, rest) = w.k.split_at_mut(1);
                a[0].copy_from_slice(&rest[5]);
                let fac = if e == 0.0 { 10.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 10.0) };
                let fac = if defect > 0.0 { fac.min((0.9 * defect.powf(-1.0 / 3.0)).max(0.2)) } else { fac };
                let fac = if rejected { fac.min(1.0) } else { fac };
                rejected = false;
                if !last {
                    h_prev = Some((h * fac).min(opts.max_step));
                    h = h_prev.unwrap();
                } else {
                    h_prev = Some((h * fac).min(opts.max_step).max(h_prev.unwrap_or(h)));
                    break;
                }
            } else {
                rejected = true;
                let fac = if !e.is_finite() || !defect.is_finite() {
                    0.2
                } else if e > 1.0 {
                    (0.9 * e.powf(-0.2)).clamp(0.2, 1.0)
                } else {
                    (0.9 * defect.powf(-1.0 / 3.0)).clamp(0.2, 1.0)
                };
                h *= fac;
            }
        }
    }
    if dir < 0.0 {
        arc.reverse();
    }
    Ok(arc)
}

/// Max-norm of the dense-output defect at the step midpoint, relative to the
/// error scale; `inf` when the midpoint evaluation is non-finite.
fn midpoint_defect<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    h: f64,
    seg: Segment,
    w: &mut Work,
) -> Result<f64, OdeError> {
    let n = y.len();
    for i in 0..n {
        let (d0, d1) = (w.k[0][i], w.k[6][i]);
        w.mid[i] = 0.5 * (y[i] + w.ynew[i]) + h / 8.0 * (d0 - d1) + w.bubble[i] / 16.0;
    }
    let mid = std::mem::take(&mut w.mid);
    let ok = stage(sys, t + 0.5 * h, &mid, seg, &mut w.fmid);
    w.mid = mid;
    if !ok? {
        return Ok(f64::INFINITY);
    }
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let slope = 1.5 * (w.ynew[i] - y[i]) / h - 0.25 * (w.k[0][i] + w.k[6][i]);
        // the difference quotient cannot resolve below its own rounding error
        let floor = 8.0 * f64::EPSILON * (y[i].abs() + w.ynew[i].abs()) / h.abs();
        worst = worst.max((slope - w.fmid[i]).abs() / (w.sc[i] + floor));
    }
    Ok(worst)
}

/// One trial step. Returns `true` if a stage evaluated to a non-finite value
/// (the step is then rejected and retried with a smaller `h`).
fn attempt<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    h: f64,
    seg: Segment,
    w: &mut Work,
) -> Result<bool, OdeError> {
    let n = y.len();
    let stages: [(f64, &[f64]); 5] = [
        (C2, &[A21]),
        (C3, &[A31, A32]),
        (C4, &[A41, A42, A43]),
        (C5, &[A51, A52, A53, A54]),
        (1.0, &[A61, A62, A63, A64, A65]),
    ];
    for (s, (c, a)) in stages.iter().enumerate() {
        for i in 0..n {
            let mut acc = 0.0;
            for (j, aj) in a.iter().enumerate() {
                acc += aj * w.k[j][i];
            }
            w.ytmp[i] = y[i] + h * acc;
        }
        let (_, rest) = w.k.split_at_mut(s + 1);
        match stage(sys, t + c * h, &w.ytmp, seg, &mut rest[0]) {
            Ok(true) => {}
            Ok(false) => return Ok(true),
            Err(e) => return Err(e),
        }
    }
    for i in 0..n {
        w.ynew[i] = y[i]
            + h * (A71 * w.k[0][i]
                + A73 * w.k[2][i]
                + A74 * w.k[3][i]
                + A75 * w.k[4][i]
                + A76 * w.k[5][i]);
    }
    if w.ynew.iter().any(|v| !v.is_finite()) {
        return Ok(true);
    }
    let ynew = std::mem::take(&mut w.ynew);
    let ok = stage(sys, t + h, &ynew, seg, &mut w.k[6]);
    w.ynew = ynew;
    Ok(!ok?)
}

fn stage<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    seg: Segment,
    dy: &mut [f64],
) -> Result<bool, OdeError> {
    if y.iter().any(|v| !v.is_finite()) {
        return Ok(false);
    }
    sys.rhs(t, y, seg, dy).map_err(|source| OdeError::Rhs { t, source })?;
    Ok(dy.iter().all(|v| v.is_finite()))
}
