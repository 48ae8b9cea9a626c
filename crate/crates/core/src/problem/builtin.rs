//! Benchmark problems with closed-form extremals.
//!
//! | name              | dynamics        | payoff                          | U        | x0 | u0(t)           |
//! |-------------------|-----------------|---------------------------------|----------|----|-----------------|
//! | `scalar-exp`      | `u`             | `e^{-t}(x + 3u - 2u^2)`         | [-2, 2]  | 0  | 1               |
//! | `halkin`          | `(1 - x)u`      | `(1 - x)u`                      | [0, 1]   | 0  | 1               |
//! | `lq-discounted`   | `u`             | `-e^{-t}(x^2 + u^2)`            | [-2, 2]  | 1  | `-P e^{-P t}`   |
//! | `monotone-growth` | `u`             | `e^{-t} x`                      | [0, 1]   | 0  | 1               |
//!
//! `P = (sqrt(5) - 1)/2` solves `P^2 + P - 1 = 0`, the discounted Riccati
//! equation of `lq-discounted`. Along `u0`:
//!
//! * `scalar-exp`: `g_x = e^{-t}`, `A = 1`, `I_* = 1`, unit-multiplier adjoint `e^{-T}`.
//! * `halkin`: `g_x = -1`, `A = e^{-t}`, `I_* = -1`, normalized adjoint `-1/2`.
//! * `lq-discounted`: `g_x = -2 e^{-(1+P)t}`, `A = 1`, `I_* = -2/(1+P)`.
//! * `monotone-growth`: `g_x = e^{-t} > 0`, `f_x = 0`, `I_* = 1`.
//!
//! Documented probe set for all four: `t` in `[0, 10]`, `x` in `[-2, 2]^m`.

use super::{ControlProblem, ProblemError, ProblemSpec};
use super::config::{BoundSpec, ControlSpec};

pub const BUILTIN_NAMES: [&str; 4] = ["scalar-exp", "halkin", "lq-discounted", "monotone-growth"];

pub const LQ_RICCATI_ROOT: f64 = 0.6180339887498949;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuiltinInfo {
    pub name: &'static str,
    pub description: &'static str,
}

pub fn builtin_catalog() -> Vec<BuiltinInfo> {
    BUILTIN_NAMES
        .iter()
        .map(|&name| BuiltinInfo {
            name,
            description: match name {
                "scalar-exp" => "x' = u, g = e^-t (x + 3u - 2u^2), u in [-2,2]; normal extremal with I* = 1",
                "halkin" => "x' = (1-x)u, g = (1-x)u, u in [0,1]; adjoint -1/2 violates lim psi = 0",
                "lq-discounted" => "x' = u, g = -e^-t (x^2 + u^2), u in [-2,2], x0 = 1; Riccati feedback",
                "monotone-growth" => "x' = u, g = e^-t x, u in [0,1]; monotone case with psi >= 0",
                _ => unreachable!(),
            },
        })
        .collect()
}

fn scalar(
    label: &str,
    dynamics: &str,
    payoff: &str,
    lower: f64,
    upper: f64,
    x0: f64,
    reference: &str,
) -> ProblemSpec {
    ProblemSpec {
        label: Some(label.into()),
        state_dim: Some(1),
        control_dim: Some(1),
        dynamics: Some(vec![dynamics.into()]),
        payoff: Some(payoff.into()),
        x0: Some(vec![x0]),
        reference: Some(vec![reference.into()]),
        control: Some(ControlSpec {
            kind: Some("box".into()),
            lower: Some(vec![BoundSpec::Number(lower)]),
            upper: Some(vec![BoundSpec::Number(upper)]),
            points: None,
        }),
    }
}

pub fn builtin(name: &str) -> Result<ControlProblem, ProblemError> {
    let spec = match name {
        "scalar-exp" => scalar(
            name,
            "u1",
            "exp(-t)*(x1 + 3*u1 - 2*u1^2)",
            -2.0,
            2.0,
            0.0,
            "1",
        ),
        "halkin" => scalar(name, "(1 - x1)*u1", "(1 - x1)*u1", 0.0, 1.0, 0.0, "1"),
        "lq-discounted" => scalar(
            name,
            "u1",
            "-exp(-t)*(x1^2 + u1^2)",
            -2.0,
            2.0,
            1.0,
            &format!("-{p:?}*exp(-{p:?}*t)", p = LQ_RICCATI_ROOT),
        ),
        "monotone-growth" => scalar(name, "u1", "exp(-t)*x1", 0.0, 1.0, 0.0, "1"),
        _ => {
            return Err(ProblemError::UnknownBuiltin {
                name: name.into(),
                available: BUILTIN_NAMES.iter().map(|s| s.to_string()).collect(),
            })
        }
    };
    ControlProblem::from_spec(&spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_builtins_construct() {
        for name in BUILTIN_NAMES {
            let p = builtin(name).unwrap();
            assert_eq!(p.label(), name);
            assert!(p.reference().is_some());
        }
    }

    #[test]
    fn unknown_name_lists_available() {
        let err = builtin("nope").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("nope") && msg.contains("halkin") && msg.contains("scalar-exp"));
    }

    #[test]
    fn riccati_root() {
        let p = LQ_RICCATI_ROOT;
        assert!((p * p + p - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scalar_exp_closed_form_data() {
        let p = builtin("scalar-exp").unwrap();
        // along u0 = 1 the payoff gradient is e^{-t} regardless of x
        for &(t, x) in &[(0.0, 0.0), (1.5, 1.5), (3.0, -2.0)] {
            let gx = p.g_x(t, &[x], &[1.0]).unwrap();
            assert!((gx[0] - f64::exp(-t)).abs() < 1e-15);
            assert_eq!(p.f_x(t, &[x], &[1.0]).unwrap()[(0, 0)], 0.0);
        }
        let u0 = p.reference().unwrap().value(2.0, &[2.0], None).unwrap();
        assert_eq!(u0, vec![1.0]);
    }
}
