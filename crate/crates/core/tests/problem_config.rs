use horizon_core::problem::{builtin, load_problem, save_problem, validate, BUILTIN_NAMES};
use proptest::prelude::*;

fn probe_grid() -> Vec<f64> {
    (0..=20).map(|i| 0.5 * f64::from(i)).collect()
}

#[test]
fn builtins_pass_validation_on_their_probe_sets() {
    for name in BUILTIN_NAMES {
        let p = builtin(name).unwrap();
        let bx = vec![(-2.0, 2.0); p.state_dim()];
        let report = validate(&p, &probe_grid(), &bx);
        assert!(report.passed(), "{name}: {report:?}");
    }
}

#[test]
fn builtins_survive_save_and_load() {
    for name in BUILTIN_NAMES {
        let p = builtin(name).unwrap();
        let back = load_problem(&save_problem(&p)).unwrap();
        assert_eq!(save_problem(&back), save_problem(&p), "{name}");
        assert_eq!(back.x0(), p.x0());
        assert_eq!(back.state_dim(), p.state_dim());
    }
}

#[test]
fn unknown_builtin_and_bad_documents_are_rejected() {
    assert!(builtin("ramsey").is_err());
    assert!(load_problem("state_dim = 1").is_err());
    assert!(load_problem("not toml at all [").is_err());
}

proptest! {
    #[test]
    fn save_load_is_identity_on_canonical_fields(
        a in -2.0f64..2.0,
        rho in 0.1f64..3.0,
        lo in -3.0f64..0.0,
        width in 0.1f64..3.0,
        x0 in -1.0f64..1.0,
    ) {
        let doc = format!(
            "state_dim = 1\ncontrol_dim = 1\ndynamics = [\"({a})*x1 + u1\"]\npayoff = \"exp(-({rho})*t)*(x1 - u1^2)\"\n\
             x0 = [{x0:?}]\nreference = [\"0\"]\n[control]\nkind = \"box\"\nlower = [{lo:?}]\nupper = [{:?}]\n",
            lo + width
        );
        let p = load_problem(&doc).unwrap();
        let saved = save_problem(&p);
        let q = load_problem(&saved).unwrap();
        prop_assert_eq!(&saved, &save_problem(&q));
        prop_assert_eq!(q.x0(), &[x0][..]);
        let pt = [0.7, 0.3];
        prop_assert_eq!(p.g(pt[0], &[pt[1]], &[0.2]).unwrap(), q.g(pt[0], &[pt[1]], &[0.2]).unwrap());
        prop_assert_eq!(p.f(pt[0], &[pt[1]], &[0.2]).unwrap(), q.f(pt[0], &[pt[1]], &[0.2]).unwrap());
    }
}
