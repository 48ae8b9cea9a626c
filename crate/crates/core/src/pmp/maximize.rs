use super::{hamiltonian, PmpError};
use crate::expr::EvalError;
use crate::problem::{ControlProblem, ControlSet};

const GRID_POINTS: usize = 33;
const GRID_BUDGET: usize = 40_000;
const CONTROL_TOL: f64 = 1e-8;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

fn points_per_axis(k: usize) -> usize {
    let mut n = GRID_POINTS;
    while n > 3 && n.checked_pow(k as u32).is_none_or(|c| c > GRID_BUDGET) {
        n -= 2;
    }
    n
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            _ => {}
        }
    }
    false
}

/// Maximize `obj` over `U(t)`.
///
/// Box sets: a uniform grid (33 points per axis, fewer in high dimension)
/// followed by coordinatewise golden-section refinement within one grid
/// spacing of the best grid point. Finite sets: exhaustive scan. Ties go to
/// the lexicographically smallest control.
pub fn maximize_over<F>(set: &ControlSet, t: f64, mut obj: F) -> Result<(Vec<f64>, f64), PmpError>
where
    F: FnMut(&[f64]) -> Result<f64, EvalError>,
{
    match set {
        ControlSet::Finite { points } => {
            if points.is_empty() {
                return Err(PmpError::EmptyControlSet { t });
            }
            let mut best: Option<(Vec<f64>, f64)> = None;
            for pt in points {
                let v = obj(pt)?;
                let better = match &best {
                    None => true,
                    Some((bu, bv)) => v > *bv || (v == *bv && lex_less(pt, bu)),
                };
                if better {
                    best = Some((pt.clone(), v));
                }
            }
            Ok(best.unwrap())
        }
        ControlSet::Box { .. } => {
            let (lo, hi) = set.bounds_at(t)?;
            if lo.iter().zip(&hi).any(|(a, b)| a > b) {
                return Err(PmpError::EmptyControlSet { t });
            }
            let k = lo.len();
            let n = points_per_axis(k);
            let step: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| (b - a) / (n - 1) as f64).collect();
            let axis = |i: usize, j: usize| if j == n - 1 { hi[i] } else { lo[i] + j as f64 * step[i] };

            // axis 0 is most significant, so the first maximizer met is the lexicographically smallest
            let total = n.pow(k as u32);
            let mut u = lo.clone();
            let mut best_u = lo.clone();
            let mut best_v = f64::NEG_INFINITY;
            for flat in 0..total {
                let mut rest = flat;
                for i in (0..k).rev() {
                    u[i] = axis(i, rest % n);
                    rest /= n;
                }
                let v = obj(&u)?;
                if v > best_v {
                    best_v = v;
                    best_u.copy_from_slice(&u);
                }
            }

            let sweeps = if k == 1 { 1 } else { 3 };
            for _ in 0..sweeps {
                for i in 0..k {
                    if step[i] == 0.0 {
                        continue;
                    }
                    let a = (best_u[i] - step[i]).max(lo[i]);
                    let b = (best_u[i] + step[i]).min(hi[i]);
                    let mut cand = best_u.clone();
                    let mut f = |s: f64| {
                        cand[i] = s;
                        obj(&cand)
                    };
                    let (mut xi, mut vi) = golden(a, b, &mut f)?;
                    if let Some(xs) = slope_bisection(a, b, xi, &mut f)? {
                        let vs = f(xs)?;
                        if vs >= vi - 4.0 * f64::EPSILON * vi.abs() {
                            (xi, vi) = (xs, vs);
                        }
                    }
                    if vi > best_v {
                        best_v = vi;
                        best_u[i] = xi;
                    }
                }
            }
            Ok((best_u, best_v))
        }
    }
}

fn golden<F>(mut a: f64, mut b: f64, f: &mut F) -> Result<(f64, f64), EvalError>
where
    F: FnMut(f64) -> Result<f64, EvalError>,
{
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > CONTROL_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    let m = 0.5 * (a + b);
    let fm = f(m)?;
    let mut best = (m, fm);
    for (x, v) in [(c, fc), (d, fd)] {
        if v > best.1 {
            best = (x, v);
        }
    }
    Ok(best)
}

/// Root of the central-difference slope near `x0`, bracketed inside `[a, b]`.
/// Golden-section search stalls near `√ε` because function values stop
/// separating; the sign of `f(x + δ) - f(x - δ)` stays informative much longer.
fn slope_bisection<F>(a: f64, b: f64, x0: f64, f: &mut F) -> Result<Option<f64>, EvalError>
where
    F: FnMut(f64) -> Result<f64, EvalError>,
{
    let scale = (b - a).max(f64::MIN_POSITIVE);
    let delta = 1e-5 * scale;
    let width = 1e-6 * scale;
    let mut lo = (x0 - width).max(a + delta);
    let mut hi = (x0 + width).min(b - delta);
    if !(lo < hi) {
        return Ok(None);
    }
    let mut slope = |x: f64| -> Result<f64, EvalError> { Ok(f(x + delta)? - f(x - delta)?) };
    if !(slope(lo)? > 0.0 && slope(hi)? < 0.0) {
        return Ok(None);
    }
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// `argmax_{v ∈ U(t)} H(x, t, v, λ, ψ)` and the maximal value.
pub fn maximize_hamiltonian(
    p: &ControlProblem,
    x: &[f64],
    t: f64,
    lambda: f64,
    psi: &[f64],
) -> Result<(Vec<f64>, f64), PmpError> {
    maximize_over(p.control_set(), t, |u| hamiltonian(p, x, t, u, lambda, psi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::problem::{builtin, load_problem};

    fn unit_box(lo: f64, hi: f64, k: usize) -> ControlSet {
        ControlSet::Box {
            lower: vec![parse(&lo.to_string(), &["t"]).unwrap(); k],
            upper: vec![parse(&hi.to_string(), &["t"]).unwrap(); k],
        }
    }

    #[test]
    fn bang_control_for_positive_slope() {
        let (u, v) = maximize_over(&unit_box(0.0, 1.0, 1), 0.0, |u| Ok(2.0 * u[0])).unwrap();
        assert_eq!(u, vec![1.0]);
        assert_eq!(v, 2.0);
    }

    #[test]
    fn interior_quadratic() {
        let (u, _) = maximize_over(&unit_box(-1.0, 1.0, 1), 0.0, |u| Ok(-(u[0] - 0.3).powi(2))).unwrap();
        assert!((u[0] - 0.3).abs() < 1e-6, "{u:?}");
    }

    #[test]
    fn two_dimensional_quadratic() {
        let (u, _) = maximize_over(&unit_box(-1.0, 1.0, 2), 0.0, |u| {
            Ok(-(u[0] + 0.41).powi(2) - 2.0 * (u[1] - 0.77).powi(2))
        })
        .unwrap();
        assert!((u[0] + 0.41).abs() < 1e-6 && (u[1] - 0.77).abs() < 1e-6, "{u:?}");
    }

    #[test]
    fn ties_are_lexicographic() {
        let doc = r#"
            state_dim = 1
            control_dim = 1
            dynamics = ["(1 - x1)*u1"]
            payoff = "(1 - x1)*u1"
            [control]
            kind = "finite"
            points = [[1.0], [0.0]]
        "#;
        let p = load_problem(doc).unwrap();
        let (u, v) = maximize_hamiltonian(&p, &[0.0], 0.0, 0.5, &[-0.5]).unwrap();
        assert_eq!(u, vec![0.0]);
        assert_eq!(v, 0.0);
        // box version of the same tie: H ≡ 0 on [0, 1]
        let h = builtin("halkin").unwrap();
        let (u, _) = maximize_hamiltonian(&h, &[0.0], 0.0, 0.5, &[-0.5]).unwrap();
        assert_eq!(u, vec![0.0]);
    }

    #[test]
    fn grid_budget() {
        assert_eq!(points_per_axis(1), 33);
        assert_eq!(points_per_axis(2), 33);
        assert!(points_per_axis(4).pow(4) <= GRID_BUDGET);
    }
}
