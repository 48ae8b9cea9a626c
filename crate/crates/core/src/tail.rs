//! Tail-window statistics shared by the convergence classifier and the
//! transversality checks.
//!
//! Windows are anchored at the end of the horizon and halve in length:
//! `[0, T/2], [T/2, 3T/4], [3T/4, 7T/8], [7T/8, 15T/16], [15T/16, T]`.

use serde::{Deserialize, Serialize};

pub const WINDOW_COUNT: usize = 5;

/// End-anchored halving windows over `[start, end]`.
pub fn tail_windows(start: f64, end: f64) -> Vec<(f64, f64)> {
    let len = end - start;
    let mut out = Vec::with_capacity(WINDOW_COUNT);
    let mut a = start;
    for k in 1..WINDOW_COUNT {
        let b = end - len / f64::powi(2.0, k as i32);
        out.push((a, b));
        a = b;
    }
    out.push((a, end));
    out
}

/// `1, 2, 4, …` below `t_max`, then `t_max` itself.
pub fn geometric_checkpoints(t_max: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut c = 1.0;
    while c < t_max {
        out.push(c);
        c *= 2.0;
    }
    out.push(t_max);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub start: f64,
    pub end: f64,
    /// Largest Euclidean norm over the window samples.
    pub sup: f64,
    /// Smallest Euclidean norm over the window samples.
    pub inf: f64,
    /// Largest per-component spread `max - min`.
    pub oscillation: f64,
    pub mean: Vec<f64>,
    /// Per-component sample achieving the minimum, then the maximum.
    pub extremes: Vec<Vec<f64>>,
    pub count: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Statistics of the samples `(times[i], values[i])` with `a <= t <= b`.
/// Returns `None` when the window holds no sample.
pub fn window_stats(times: &[f64], values: &[Vec<f64>], a: f64, b: f64) -> Option<WindowStats> {
    let lo = times.partition_point(|&t| t < a);
    let hi = times.partition_point(|&t| t <= b);
    if hi <= lo {
        return None;
    }
    let rows = &values[lo..hi];
    let dim = rows[0].len();
    let mut sup: f64 = 0.0;
    let mut inf = f64::INFINITY;
    let mut mean = vec![0.0; dim];
    let mut argmin = vec![0usize; dim];
    let mut argmax = vec![0usize; dim];
    for (r, row) in rows.iter().enumerate() {
        let n = norm(row);
        sup = sup.max(n);
        inf = inf.min(n);
        for c in 0..dim {
            mean[c] += row[c];
            if row[c] < rows[argmin[c]][c] {
                argmin[c] = r;
            }
            if row[c] > rows[argmax[c]][c] {
                argmax[c] = r;
            }
        }
    }
    let count = rows.len();
    mean.iter_mut().for_each(|m| *m /= count as f64);
    let oscillation = (0..dim)
        .map(|c| rows[argmax[c]][c] - rows[argmin[c]][c])
        .fold(0.0, f64::max);
    let mut extremes = Vec::with_capacity(2 * dim);
    for c in 0..dim {
        extremes.push(rows[argmin[c]].clone());
        extremes.push(rows[argmax[c]].clone());
    }
    Some(WindowStats {
        start: a,
        end: b,
        sup,
        inf,
        oscillation,
        mean,
        extremes,
        count,
    })
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Log-log slope of window sup norms against window end times, using the
/// windows ending at `t >= 4` when there are at least two of them.
/// Windows with zero sup are skipped; returns `-inf` when everything is zero.
pub fn growth_exponent(ends: &[f64], sups: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = ends
        .iter()
        .zip(sups)
        .filter(|(_, s)| **s > 0.0 && s.is_finite())
        .map(|(t, s)| (*t, *s))
        .collect();
    if pts.is_empty() {
        return f64::NEG_INFINITY;
    }
    let late: Vec<(f64, f64)> = pts.iter().copied().filter(|(t, _)| *t >= 4.0).collect();
    let use_pts = if late.len() >= 2 { late } else { pts };
    let xs: Vec<f64> = use_pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = use_pts.iter().map(|p| p.1.ln()).collect();
    least_squares(&xs, &ys).map_or(0.0, |(s, _)| s)
}
