use std::sync::Arc;

use super::CauchyError;
use crate::csvfmt::num;
use crate::expr::EvalError;
use crate::ode::{integrate_state, solve, DenseArc, MatrixArc, OdeOptions, OdeSystem, Segment, Trajectory};
use crate::problem::{ControlProblem, ReferenceControl};
use crate::tail::{geometric_checkpoints, tail_windows, window_stats, WindowStats};

const SUBGRID: f64 = 0.1;

/// Dense arcs behind an [`AccumulatedIntegral`].
#[derive(Debug, Clone)]
pub struct AccumulatedArcs {
    pub x: Trajectory,
    pub a: MatrixArc,
    /// `I_ξ(t)` as a row vector arc.
    pub i: DenseArc,
    /// The open-loop reference signal used for the integration.
    pub control: ReferenceControl,
}

#[derive(Debug, Clone)]
pub struct AccumulatedIntegral {
    pub xi: Vec<f64>,
    /// Sample times: a uniform subgrid merged with the doubling checkpoints.
    pub times: Vec<f64>,
    /// `I_ξ(T)` at each sample time.
    pub values: Vec<Vec<f64>>,
    pub checkpoints: Vec<f64>,
    /// End-anchored tail window statistics of the samples.
    pub windows: Vec<WindowStats>,
    pub arcs: Option<AccumulatedArcs>,
}

impl AccumulatedIntegral {
    /// Wrap externally computed samples (no dense arcs).
    pub fn from_samples(xi: Vec<f64>, times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, CauchyError> {
        if times.len() != values.len() || times.len() < 2 {
            return Err(CauchyError::Precondition(
                "need at least two samples with matching times and values".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CauchyError::Precondition("sample times must increase".into()));
        }
        let t_max = *times.last().unwrap();
        let windows = tail_windows(times[0], t_max)
            .into_iter()
            .filter_map(|(a, b)| window_stats(&times, &values, a, b))
            .collect();
        Ok(Self {
            xi,
            checkpoints: geometric_checkpoints(t_max),
            times,
            values,
            windows,
            arcs: None,
        })
    }

    pub fn t_max(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn last(&self) -> &[f64] {
        self.values.last().unwrap()
    }

    /// `I_ξ(t)`: dense output when available, else linear interpolation of samples.
    pub fn at(&self, t: f64) -> Vec<f64> {
        if let Some(arcs) = &self.arcs {
            return arcs.i.eval(t);
        }
        let n = self.times.len();
        let k = self.times.partition_point(|&s| s <= t).clamp(1, n - 1) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let s = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        self.values[k]
            .iter()
            .zip(&self.values[k + 1])
            .map(|(a, b)| a + s * (b - a))
            .collect()
    }

    /// `xi_1..xi_m,T,I_1..I_m`, one row per sample.
    pub fn to_csv(&self) -> String {
        let m = self.xi.len();
        let d = self.dim();
        let mut head: Vec<String> = (1..=m).map(|i| format!("xi_{i}")).collect();
        head.push("T".into());
        head.extend((1..=d).map(|i| format!("I_{i}")));
        let mut out = head.join(",");
        out.push('\n');
        let xi: Vec<String> = self.xi.iter().map(|v| num(*v)).collect();
        for (t, row) in self.times.iter().zip(&self.values) {
            let mut cells = xi.clone();
            cells.push(num(*t));
            cells.extend(row.iter().map(|v| num(*v)));
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

pub(crate) struct AccumulateSystem<'a> {
    pub(crate) p: &'a ControlProblem,
    pub(crate) u: &'a ReferenceControl,
}

impl OdeSystem for AccumulateSystem<'_> {
    fn dim(&self) -> usize {
        let m = self.p.state_dim();
        m + m * m + m
    }

    fn rhs(&self, t: f64, y: &[f64], seg: Segment, dy: &mut [f64]) -> Result<(), EvalError> {
        let m = self.p.state_dim();
        let x = &y[..m];
        let a = &y[m..m + m * m];
        let u = self.u.value(t, x, Some(seg))?;
        self.p.f_into(t, x, &u, &mut dy[..m])?;
        let fx = self.p.f_x(t, x, &u)?;
        let gx = self.p.g_x(t, x, &u)?;
        for i in 0..m {
            for j in 0..m {
                let mut acc = 0.0;
                for k in 0..m {
                    acc += fx[(i, k)] * a[k * m + j];
                }
                dy[m + i * m + j] = acc;
            }
        }
        for j in 0..m {
            let mut acc = 0.0;
            for i in 0..m {
                acc += gx[i] * a[i * m + j];
            }
            dy[m + m * m + j] = acc;
        }
        Ok(())
    }

    fn error_scale(&self, y0: &[f64], y1: &[f64], opts: &OdeOptions, sc: &mut [f64]) {
        let m = self.p.state_dim();
        for k in (0..m).chain(m + m * m..m + m * m + m) {
            sc[k] = opts.atol + opts.rtol * y0[k].abs().max(y1[k].abs());
        }
        crate::ode::matrix_scale(y0, y1, m, m, opts, sc);
    }

    fn monitored_norm(&self, y: &[f64]) -> f64 {
        let m = self.p.state_dim();
        y[..m]
            .iter()
            .chain(&y[m + m * m..])
            .fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Open-loop version of `u0` along the unperturbed trajectory.
pub(crate) fn open_loop(
    p: &ControlProblem,
    u0: &ReferenceControl,
    t_max: f64,
    opts: &OdeOptions,
) -> Result<ReferenceControl, CauchyError> {
    if u0.depends_on_state() {
        let x = integrate_state(p, u0, p.x0(), (0.0, t_max), opts)?;
        Ok(u0.freeze_along(&Arc::new(x)))
    } else {
        Ok(u0.clone())
    }
}

/// Co-integrate `x_ξ`, `A_ξ` and `I_ξ` on `[0, t_max]` from `x_ξ(0) = x0 + ξ`
/// under the open-loop reference signal.
pub fn accumulate(
    p: &ControlProblem,
    u0: &ReferenceControl,
    xi: &[f64],
    t_max: f64,
    opts: &OdeOptions,
) -> Result<AccumulatedIntegral, CauchyError> {
    let control = open_loop(p, u0, t_max, opts)?;
    accumulate_open_loop(p, &control, xi, t_max, opts)
}

pub(crate) fn accumulate_open_loop(
    p: &ControlProblem,
    control: &ReferenceControl,
    xi: &[f64],
    t_max: f64,
    opts: &OdeOptions,
) -> Result<AccumulatedIntegral, CauchyError> {
    let m = p.state_dim();
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(CauchyError::Precondition(format!("T_max must be positive, got {t_max}")));
    }
    if xi.len() != m {
        return Err(CauchyError::Precondition(format!(
            "perturbation has length {} but state_dim is {m}",
            xi.len()
        )));
    }
    let sys = AccumulateSystem { p, u: control };
    let mut y0 = vec![0.0; m + m * m + m];
    for (k, (a, b)) in p.x0().iter().zip(xi).enumerate() {
        y0[k] = a + b;
    }
    for i in 0..m {
        y0[m + i * m + i] = 1.0;
    }
    let checkpoints = geometric_checkpoints(t_max);
    let n = ((t_max / SUBGRID).round() as usize).max(1);
    let mut times: Vec<f64> = (0..=n).map(|i| t_max * i as f64 / n as f64).collect();
    times.extend(checkpoints.iter().copied());
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut stops = control.breakpoints(0.0, t_max);
    stops.extend(times.iter().copied());
    let arc = solve(&sys, 0.0, &y0, t_max, &stops, opts)?;

    let i_arc = arc.components(m + m * m..m + m * m + m);
    let values: Vec<Vec<f64>> = times.iter().map(|&t| i_arc.eval(t)).collect();

    let mut out = AccumulatedIntegral::from_samples(xi.to_vec(), times, values)?;
    out.values[0] = vec![0.0; m];
    out.arcs = Some(AccumulatedArcs {
        x: Trajectory::new(arc.components(0..m)),
        a: MatrixArc::from_arc(arc.components(m..m + m * m), m),
        i: i_arc,
        control: control.clone(),
    });
    Ok(out)
}
