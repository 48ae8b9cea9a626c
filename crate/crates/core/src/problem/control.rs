use std::sync::Arc;

use crate::expr::{EvalError, Expr};
use crate::ode::{Segment, Trajectory};

/// Compact-valued control constraint `U(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlSet {
    /// `lower_i(t) <= u_i <= upper_i(t)`; bounds are expressions in `t`.
    Box { lower: Vec<Expr>, upper: Vec<Expr> },
    /// A finite list of admissible control vectors.
    Finite { points: Vec<Vec<f64>> },
}

impl ControlSet {
    /// Evaluate the box bounds at `t`. Finite sets return the componentwise hull.
    pub fn bounds_at(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
        match self {
            ControlSet::Box { lower, upper } => {
                let lo = lower.iter().map(|e| e.eval(&[t])).collect::<Result<Vec<_>, _>>()?;
                let hi = upper.iter().map(|e| e.eval(&[t])).collect::<Result<Vec<_>, _>>()?;
                Ok((lo, hi))
            }
            ControlSet::Finite { points } => {
                let k = points.first().map_or(0, Vec::len);
                let mut lo = vec![f64::INFINITY; k];
                let mut hi = vec![f64::NEG_INFINITY; k];
                for p in points {
                    for i in 0..k {
                        lo[i] = lo[i].min(p[i]);
                        hi[i] = hi[i].max(p[i]);
                    }
                }
                Ok((lo, hi))
            }
        }
    }

    /// Membership test with absolute slack `tol`.
    pub fn contains(&self, t: f64, u: &[f64], tol: f64) -> Result<bool, EvalError> {
        match self {
            ControlSet::Box { .. } => {
                let (lo, hi) = self.bounds_at(t)?;
                Ok(u
                    .iter()
                    .zip(lo.iter().zip(&hi))
                    .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol))
            }
            ControlSet::Finite { points } => Ok(points
                .iter()
                .any(|p| p.iter().zip(u).all(|(a, b)| (a - b).abs() <= tol))),
        }
    }

    /// Extreme points of `U(t)`: box corners, or every point of a finite set.
    pub fn vertices(&self, t: f64) -> Result<Vec<Vec<f64>>, EvalError> {
        match self {
            ControlSet::Box { .. } => {
                let (lo, hi) = self.bounds_at(t)?;
                let k = lo.len();
                Ok((0..1usize << k)
                    .map(|mask| {
                        (0..k)
                            .map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] })
                            .collect()
                    })
                    .collect())
            }
            ControlSet::Finite { points } => Ok(points.clone()),
        }
    }

    /// Box midpoint, or the first listed point of a finite set.
    pub fn center(&self, t: f64) -> Result<Vec<f64>, EvalError> {
        match self {
            ControlSet::Box { .. } => {
                let (lo, hi) = self.bounds_at(t)?;
                Ok(lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect())
            }
            ControlSet::Finite { points } => Ok(points.first().cloned().unwrap_or_default()),
        }
    }

    /// Clip `u` into the box (no-op for finite sets).
    pub fn clip(&self, t: f64, u: &mut [f64]) -> Result<(), EvalError> {
        if let ControlSet::Box { .. } = self {
            let (lo, hi) = self.bounds_at(t)?;
            for (v, (l, h)) in u.iter_mut().zip(lo.iter().zip(&hi)) {
                *v = v.clamp(*l, *h);
            }
        }
        Ok(())
    }
}

/// A candidate control `u(t)`.
///
/// Evaluation takes an optional integration [`Segment`]: piecewise-defined
/// controls resolve which piece applies from the segment midpoint, so the
/// right-hand side seen by one integration segment never jumps.
#[derive(Debug, Clone)]
pub enum ReferenceControl {
    /// `values[i]` on `[grid[i], grid[i+1])`; the last value holds beyond the grid.
    PiecewiseConstant {
        grid: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
    /// Control law `u_i = e_i(t, x)`; expressions use symbols `t, x1..xm`.
    Law { exprs: Vec<Expr> },
    /// A law evaluated along a fixed trajectory, i.e. the open-loop signal `e(t, x0(t))`.
    Tracked {
        exprs: Vec<Expr>,
        along: Arc<Trajectory>,
    },
    /// `value` on `[start, end)`, `base` elsewhere.
    Windowed {
        base: Box<ReferenceControl>,
        start: f64,
        end: f64,
        value: Vec<f64>,
    },
}

impl ReferenceControl {
    pub fn constant(value: Vec<f64>, horizon: f64) -> Self {
        ReferenceControl::PiecewiseConstant {
            grid: vec![0.0, horizon],
            values: vec![value.clone(), value],
        }
    }

    /// Sample `self` at the nodes of `grid` into a piecewise-constant control.
    pub fn sample(&self, grid: &[f64], x_at: impl Fn(f64) -> Vec<f64>) -> Result<Self, EvalError> {
        let values = grid
            .iter()
            .map(|&t| self.value(t, &x_at(t), None))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ReferenceControl::PiecewiseConstant {
            grid: grid.to_vec(),
            values,
        })
    }

    pub fn value(&self, t: f64, x: &[f64], seg: Option<Segment>) -> Result<Vec<f64>, EvalError> {
        let mut out = Vec::new();
        self.value_into(t, x, seg, &mut out)?;
        Ok(out)
    }

    pub fn value_into(
        &self,
        t: f64,
        x: &[f64],
        seg: Option<Segment>,
        out: &mut Vec<f64>,
    ) -> Result<(), EvalError> {
        out.clear();
        match self {
            ReferenceControl::PiecewiseConstant { grid, values } => {
                let at = seg.map_or(t, |s| s.mid());
                let idx = grid.partition_point(|&g| g <= at).saturating_sub(1);
                out.extend_from_slice(&values[idx.min(values.len() - 1)]);
            }
            ReferenceControl::Law { exprs } => {
                let mut env = Vec::with_capacity(1 + x.len());
                env.push(t);
                env.extend_from_slice(x);
                for e in exprs {
                    out.push(e.eval(&env)?);
                }
            }
            ReferenceControl::Tracked { exprs, along } => {
                let mut env = Vec::with_capacity(1 + along.dim());
                env.push(t);
                env.extend(along.eval(t));
                for e in exprs {
                    out.push(e.eval(&env)?);
                }
            }
            ReferenceControl::Windowed {
                base,
                start,
                end,
                value,
            } => {
                let at = seg.map_or(t, |s| s.mid());
                if at >= *start && at < *end {
                    out.extend_from_slice(value);
                } else {
                    base.value_into(t, x, seg, out)?;
                }
            }
        }
        Ok(())
    }

    /// Times in `(a, b)` where the control may jump.
    pub fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let mut out = match self {
            ReferenceControl::PiecewiseConstant { grid, .. } => grid.clone(),
            ReferenceControl::Law { .. } | ReferenceControl::Tracked { .. } => Vec::new(),
            ReferenceControl::Windowed {
                base, start, end, ..
            } => {
                let mut v = base.breakpoints(a, b);
                v.push(*start);
                v.push(*end);
                v
            }
        };
        out.retain(|&t| t > a && t < b);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// True when the control reads the current state (a feedback law).
    pub fn depends_on_state(&self) -> bool {
        match self {
            ReferenceControl::Law { exprs } => {
                exprs.iter().any(|e| (1..e.symbols().len()).any(|i| e.depends_on(i)))
            }
            ReferenceControl::Windowed { base, .. } => base.depends_on_state(),
            _ => false,
        }
    }

    /// Freeze a feedback law along `trajectory` so the control becomes a
    /// function of time only. Open-loop controls are returned unchanged.
    pub fn freeze_along(&self, trajectory: &Arc<Trajectory>) -> ReferenceControl {
        match self {
            ReferenceControl::Law { exprs } if self.depends_on_state() => {
                ReferenceControl::Tracked {
                    exprs: exprs.clone(),
                    along: trajectory.clone(),
                }
            }
            ReferenceControl::Windowed {
                base,
                start,
                end,
                value,
            } => ReferenceControl::Windowed {
                base: Box::new(base.freeze_along(trajectory)),
                start: *start,
                end: *end,
                value: value.clone(),
            },
            other => other.clone(),
        }
    }
}
