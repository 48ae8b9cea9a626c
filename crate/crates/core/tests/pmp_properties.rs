use horizon_core::ode::{vector_norm, AdjointArc, DenseArc};
use horizon_core::pmp::{
    maximize_hamiltonian, normalize, run_truncation, solve_finite_horizon, Horizon, SweepOptions,
    TruncationOptions,
};
use horizon_core::problem::{builtin, BUILTIN_NAMES};
use proptest::prelude::*;

#[test]
fn truncation_extremals_satisfy_their_contracts() {
    for name in BUILTIN_NAMES {
        let p = builtin(name).unwrap();
        let run = run_truncation(&p, p.reference(), &[5.0, 10.0], &TruncationOptions::default()).unwrap();
        assert!(run.converged(), "{name}");
        for e in &run.entries {
            assert!(e.error.is_none(), "{name}: {e:?}");
            assert!((vector_norm(&e.psi0) + e.lambda - 1.0).abs() <= 1e-9, "{name}: {e:?}");
            assert!(e.residual <= 1e-6, "{name}: {e:?}");
        }
        let last = run.last.as_ref().unwrap();
        assert_eq!(last.horizon, Horizon::Finite(10.0));
        assert!(last.psi.last().iter().all(|v| *v == 0.0), "{name}");
        assert!(
            last.objective.windows(2).all(|w| w[1] >= w[0] - 1e-10),
            "{name}: objective decreased"
        );
    }
}

#[test]
fn lq_multiplier_matches_riccati_value() {
    // unit-multiplier costate ψ(0) = -2P x0 with x0 = 1 and 1 + 2P = √5
    let p = builtin("lq-discounted").unwrap();
    let run = run_truncation(&p, p.reference(), &[5.0, 10.0, 20.0], &TruncationOptions::default()).unwrap();
    let e = run.entries.last().unwrap();
    assert!((e.lambda - 1.0 / 5f64.sqrt()).abs() < 1e-4, "{e:?}");
}

#[test]
fn sweep_is_deterministic() {
    let p = builtin("scalar-exp").unwrap();
    let u = p.reference().unwrap();
    let a = solve_finite_horizon(&p, 8.0, None, u, &SweepOptions::default()).unwrap();
    let b = solve_finite_horizon(&p, 8.0, None, u, &SweepOptions::default()).unwrap();
    assert_eq!(a.psi, b.psi);
    assert_eq!(a.x.to_csv(), b.x.to_csv());
    assert_eq!(a.objective, b.objective);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scalar_exp_hamiltonian_maximizer(psi in -3.0f64..3.0, lambda in 0.05f64..1.0, t in 0.0f64..3.0, x in -2.0f64..2.0) {
        // H = ψu + λe^{-t}(x + 3u - 2u²) is concave in u with vertex (ψe^t/λ + 3)/4
        let p = builtin("scalar-exp").unwrap();
        let (u, value) = maximize_hamiltonian(&p, &[x], t, lambda, &[psi]).unwrap();
        let vertex = ((psi * t.exp() / lambda + 3.0) / 4.0).clamp(-2.0, 2.0);
        prop_assert!((u[0] - vertex).abs() <= 1e-6, "u={} vertex={vertex}", u[0]);
        let h = psi * vertex + lambda * (-t).exp() * (x + 3.0 * vertex - 2.0 * vertex * vertex);
        prop_assert!((value - h).abs() <= 1e-12 * h.abs().max(1.0));
    }

    #[test]
    fn normalization_sums_to_one(raw in 0.0f64..5.0, values in prop::collection::vec(-4.0f64..4.0, 6)) {
        prop_assume!(raw + vector_norm(&values[..2]) > 1e-6);
        let arc = DenseArc::from_nodes(2, vec![0.0, 1.0, 2.0], values, &[0.0; 6]);
        let (lambda, psi) = normalize(raw, &AdjointArc::new(arc.clone())).unwrap();
        prop_assert!((lambda + vector_norm(psi.node(0)) - 1.0).abs() <= 1e-12);
        let s = lambda / raw.max(f64::MIN_POSITIVE);
        if raw > 0.0 {
            for (a, b) in psi.node(2).iter().zip(arc.node(2)) {
                prop_assert!((a - s * b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}

#[test]
fn degenerate_multipliers_are_rejected() {
    let arc = DenseArc::from_nodes(1, vec![0.0, 1.0], vec![0.0, 0.0], &[0.0, 0.0]);
    assert!(normalize(0.0, &AdjointArc::new(arc)).is_err());
}
