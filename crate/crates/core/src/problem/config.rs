//! TOML problem documents.
//!
//! ```toml
//! label = "halkin"
//! state_dim = 1
//! control_dim = 1
//! dynamics = ["(1 - x1)*u1"]
//! payoff = "(1 - x1)*u1"
//! x0 = [0.0]                 # optional, defaults to the origin
//! reference = ["1"]          # optional candidate control u0(t, x)
//!
//! [control]
//! kind = "box"               # or "finite" with `points = [[0.0], [1.0]]`
//! lower = [0.0]              # numbers or expressions in t
//! upper = ["1"]
//! ```

use serde::{Deserialize, Serialize};

use super::{
    law_symbols, problem_symbols, time_symbols, ControlProblem, ControlSet, ProblemError,
    ReferenceControl,
};
use crate::expr::Expr;

/// A box bound: a number or an expression in `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundSpec {
    Number(f64),
    Expr(String),
}

impl BoundSpec {
    fn source(&self) -> String {
        match self {
            BoundSpec::Number(v) => format!("{v:?}"),
            BoundSpec::Expr(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<BoundSpec>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<BoundSpec>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
}

/// Raw problem document. Every field is optional at the serde level so that
/// missing fields are reported by name during [`ControlProblem::from_spec`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub control_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub payoff: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlSpec>,
}

fn required<T: Clone>(v: &Option<T>, name: &str) -> Result<T, ProblemError> {
    v.clone()
        .ok_or_else(|| ProblemError::MissingField(name.to_string()))
}

fn parse_field(
    source: &str,
    symbols: &std::sync::Arc<[String]>,
    field: String,
) -> Result<Expr, ProblemError> {
    Expr::parse(source, symbols.clone()).map_err(|source| ProblemError::Parse { field, source })
}

pub(super) fn build(spec: &ProblemSpec) -> Result<ControlProblem, ProblemError> {
    let m = required(&spec.state_dim, "state_dim")?;
    let k = required(&spec.control_dim, "control_dim")?;
    if m == 0 || k == 0 {
        return Err(ProblemError::Invalid {
            field: if m == 0 { "state_dim" } else { "control_dim" }.into(),
            message: "must be at least 1".into(),
        });
    }
    let dyn_src = required(&spec.dynamics, "dynamics")?;
    let payoff_src = required(&spec.payoff, "payoff")?;
    let control = required(&spec.control, "control")?;

    if dyn_src.len() != m {
        return Err(ProblemError::Dimension(format!(
            "dynamics has {} components but state_dim is {m}",
            dyn_src.len()
        )));
    }
    let symbols = problem_symbols(m, k);
    let dynamics = dyn_src
        .iter()
        .enumerate()
        .map(|(i, s)| parse_field(s, &symbols, format!("dynamics[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let payoff = parse_field(&payoff_src, &symbols, "payoff".into())?;

    let kind = required(&control.kind, "control.kind")?;
    let control_set = match kind.as_str() {
        "box" => {
            let lower = required(&control.lower, "control.lower")?;
            let upper = required(&control.upper, "control.upper")?;
            for (name, v) in [("control.lower", &lower), ("control.upper", &upper)] {
                if v.len() != k {
                    return Err(ProblemError::Dimension(format!(
                        "{name} has {} entries but control_dim is {k}",
                        v.len()
                    )));
                }
            }
            let ts = time_symbols();
            let parse_bounds = |v: &[BoundSpec], name: &str| {
                v.iter()
                    .enumerate()
                    .map(|(i, b)| parse_field(&b.source(), &ts, format!("{name}[{i}]")))
                    .collect::<Result<Vec<_>, _>>()
            };
            ControlSet::Box {
                lower: parse_bounds(&lower, "control.lower")?,
                upper: parse_bounds(&upper, "control.upper")?,
            }
        }
        "finite" => {
            let points = required(&control.points, "control.points")?;
            if let Some((i, p)) = points.iter().enumerate().find(|(_, p)| p.len() != k) {
                return Err(ProblemError::Dimension(format!(
                    "control.points[{i}] has {} entries but control_dim is {k}",
                    p.len()
                )));
            }
            ControlSet::Finite { points }
        }
        other => {
            return Err(ProblemError::Invalid {
                field: "control.kind".into(),
                message: format!("expected `box` or `finite`, got `{other}`"),
            })
        }
    };

    let x0 = spec.x0.clone().unwrap_or_else(|| vec![0.0; m]);
    if x0.len() != m {
        return Err(ProblemError::Dimension(format!(
            "x0 has length {} but state_dim is {m}",
            x0.len()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(ProblemError::Invalid {
            field: "x0".into(),
            message: "entries must be finite".into(),
        });
    }

    let reference = match &spec.reference {
        None => None,
        Some(src) => {
            if src.len() != k {
                return Err(ProblemError::Dimension(format!(
                    "reference has {} components but control_dim is {k}",
                    src.len()
                )));
            }
            let ls = law_symbols(m);
            let exprs = src
                .iter()
                .enumerate()
                .map(|(i, s)| parse_field(s, &ls, format!("reference[{i}]")))
                .collect::<Result<Vec<_>, _>>()?;
            Some(ReferenceControl::Law { exprs })
        }
    };

    Ok(ControlProblem::assemble(
        spec.label.clone().unwrap_or_else(|| "unnamed".into()),
        m,
        k,
        dynamics,
        payoff,
        control_set,
        x0,
        reference,
    ))
}

/// Parse and validate a TOML problem document.
pub fn load_problem(document: &str) -> Result<ControlProblem, ProblemError> {
    let spec: ProblemSpec =
        toml::from_str(document).map_err(|e| ProblemError::Document(e.message().to_string()))?;
    build(&spec)
}

/// Canonical document for `p`; expressions are written in their printed form.
pub fn save_problem(p: &ControlProblem) -> String {
    let control = match p.control_set() {
        ControlSet::Box { lower, upper } => ControlSpec {
            kind: Some("box".into()),
            lower: Some(lower.iter().map(|e| BoundSpec::Expr(e.to_string())).collect()),
            upper: Some(upper.iter().map(|e| BoundSpec::Expr(e.to_string())).collect()),
            points: None,
        },
        ControlSet::Finite { points } => ControlSpec {
            kind: Some("finite".into()),
            points: Some(points.clone()),
            ..Default::default()
        },
    };
    let reference = match p.reference() {
        Some(ReferenceControl::Law { exprs }) => {
            Some(exprs.iter().map(ToString::to_string).collect())
        }
        _ => None,
    };
    let spec = ProblemSpec {
        label: Some(p.label().to_string()),
        state_dim: Some(p.state_dim()),
        control_dim: Some(p.control_dim()),
        dynamics: Some(p.dynamics().iter().map(ToString::to_string).collect()),
        payoff: Some(p.payoff().to_string()),
        x0: Some(p.x0().to_vec()),
        reference,
        control: Some(control),
    };
    toml::to_string(&spec).expect("problem spec serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    const HALKIN: &str = r#"
        label = "halkin"
        state_dim = 1
        control_dim = 1
        dynamics = ["(1-x1)*u1"]
        payoff = "(1-x1)*u1"
        [control]
        kind = "box"
        lower = [0]
        upper = ["1"]
    "#;

    #[test]
    fn loads_halkin() {
        let p = load_problem(HALKIN).unwrap();
        assert_eq!(p.state_dim(), 1);
        assert_eq!(p.x0(), &[0.0]);
        assert_eq!(p.dynamics()[0].to_string(), "((1.0 - x1) * u1)");
        assert_eq!(p.g(0.0, &[0.5], &[1.0]).unwrap(), 0.5);
    }

    #[test]
    fn missing_payoff_is_named() {
        let doc = HALKIN.replace("payoff = \"(1-x1)*u1\"", "");
        match load_problem(&doc) {
            Err(ProblemError::MissingField(f)) => assert_eq!(f, "payoff"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn x0_dimension_mismatch() {
        let doc = format!("x0 = [0.0, 1.0]\n{HALKIN}");
        assert!(matches!(load_problem(&doc), Err(ProblemError::Dimension(_))));
    }

    #[test]
    fn parse_error_carries_field_path() {
        let doc = HALKIN.replace("dynamics = [\"(1-x1)*u1\"]", "dynamics = [\"(1-x1)*\"]");
        match load_problem(&doc) {
            Err(ProblemError::Parse { field, .. }) => assert_eq!(field, "dynamics[0]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn finite_sets_and_bad_kind() {
        let doc = HALKIN
            .replace("kind = \"box\"", "kind = \"finite\"\npoints = [[0.0], [1.0]]")
            .replace("lower = [0]\n", "")
            .replace("upper = [\"1\"]\n", "");
        let p = load_problem(&doc).unwrap();
        assert!(matches!(p.control_set(), ControlSet::Finite { points } if points.len() == 2));
        let bad = HALKIN.replace("kind = \"box\"", "kind = \"ball\"");
        assert!(matches!(load_problem(&bad), Err(ProblemError::Invalid { .. })));
        let unknown = format!("extra = 1\n{HALKIN}");
        assert!(matches!(load_problem(&unknown), Err(ProblemError::Document(_))));
    }

    #[test]
    fn save_then_load_is_identity_on_canonical_fields() {
        for name in super::super::BUILTIN_NAMES {
            let p = super::super::builtin(name).unwrap();
            let q = load_problem(&save_problem(&p)).unwrap();
            assert_eq!(p.label(), q.label());
            assert_eq!(p.dynamics(), q.dynamics());
            assert_eq!(p.payoff(), q.payoff());
            assert_eq!(p.control_set(), q.control_set());
            assert_eq!(p.x0(), q.x0());
            assert_eq!(save_problem(&p), save_problem(&q));
        }
    }
}
