use horizon_core::expr::parse;
use proptest::prelude::*;

const SYMBOLS: [&str; 3] = ["t", "x1", "x2"];

/// Random expressions that stay finite on moderate inputs.
fn expr_text() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        (-3.0f64..3.0).prop_map(|c| format!("({c})")),
        Just("t".to_string()),
        Just("x1".to_string()),
        Just("x2".to_string()),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} + {b}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) - ({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a})*({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a})/(2 + ({b})^2)")),
            inner.clone().prop_map(|a| format!("sin({a})")),
            inner.clone().prop_map(|a| format!("cos({a})")),
            inner.clone().prop_map(|a| format!("exp(sin({a}))")),
            inner.prop_map(|a| format!("sqrt(1 + ({a})^2)")),
        ]
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5f64..1.5, 3)
}

/// Five-point central difference in coordinate `k`.
fn central_difference(f: impl Fn(&[f64]) -> f64, at: &[f64], k: usize) -> f64 {
    let h = 1e-3;
    let shifted = |s: f64| {
        let mut v = at.to_vec();
        v[k] += s * h;
        f(&v)
    };
    (-shifted(2.0) + 8.0 * shifted(1.0) - 8.0 * shifted(-1.0) + shifted(-2.0)) / (12.0 * h)
}

proptest! {
    #[test]
    fn print_then_parse_is_a_fixed_point(src in expr_text()) {
        let e = parse(&src, &SYMBOLS).unwrap();
        let printed = e.to_string();
        let again = parse(&printed, &SYMBOLS).unwrap();
        prop_assert_eq!(&e, &again);
        prop_assert_eq!(printed, again.to_string());
    }

    #[test]
    fn dual_value_matches_eval(src in expr_text(), x in point(), seed in 0usize..3) {
        let e = parse(&src, &SYMBOLS).unwrap();
        let plain = e.eval(&x);
        let dual = e.eval_dual(&x, seed);
        if let (Ok(v), Ok(d)) = (plain, dual) {
            prop_assert_eq!(v, d.value);
        }
    }

    #[test]
    fn sum_derivative_is_exact(a in expr_text(), b in expr_text(), ints in prop::collection::vec(-4i32..4, 3), seed in 0usize..3) {
        // inputs are small integers, so they are exactly representable
        let x: Vec<f64> = ints.into_iter().map(f64::from).collect();
        let ea = parse(&a, &SYMBOLS).unwrap();
        let eb = parse(&b, &SYMBOLS).unwrap();
        let sum = parse(&format!("({a}) + ({b})"), &SYMBOLS).unwrap();
        if let (Ok(da), Ok(db), Ok(ds)) = (ea.eval_dual(&x, seed), eb.eval_dual(&x, seed), sum.eval_dual(&x, seed)) {
            prop_assert_eq!(ds.derivative, da.derivative + db.derivative);
        }
    }

    #[test]
    fn dual_matches_central_differences(src in expr_text(), x in point(), seed in 0usize..3) {
        let e = parse(&src, &SYMBOLS).unwrap();
        let d = e.eval_dual(&x, seed).unwrap();
        let fd = central_difference(|v| e.eval(v).unwrap(), &x, seed);
        let rel = (d.derivative - fd).abs() / d.derivative.abs().max(1.0);
        prop_assert!(rel <= 1e-6, "{src}: dual {} fd {fd}", d.derivative);
    }
}

#[test]
fn domain_failures_are_errors_not_nan() {
    for src in ["log(x1)", "1/x1", "x1^(-1)", "sqrt(x1 - 1)"] {
        let e = parse(src, &SYMBOLS).unwrap();
        assert!(e.eval(&[0.0, 0.0, 0.0]).is_err(), "{src}");
        assert!(e.eval_dual(&[0.0, 0.0, 0.0], 1).is_err(), "{src}");
    }
}
