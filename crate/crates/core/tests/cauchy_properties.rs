use horizon_core::cauchy::{
    accumulate, cauchy_adjoint, classify_convergence, verify_product_identity, AccumulatedIntegral, VerdictKind,
};
use horizon_core::expr::EvalError;
use horizon_core::ode::{solve, vector_norm, OdeOptions, OdeSystem, Segment};
use horizon_core::problem::{builtin, load_problem, ControlProblem, ReferenceControl, BUILTIN_NAMES};
use proptest::prelude::*;

/// `x' = a x`, `g = c e^{-ρt} x`, so `I_0(T) = c (e^{(a-ρ)T} - 1)/(a - ρ)`.
fn exponential_problem(a: f64, rho: f64, c: f64) -> ControlProblem {
    let doc = format!(
        "state_dim = 1\ncontrol_dim = 1\ndynamics = [\"({a})*x1 + 0*u1\"]\npayoff = \"({c})*exp(-({rho})*t)*x1\"\n\
         x0 = [1.0]\nreference = [\"0\"]\n[control]\nkind = \"box\"\nlower = [-1]\nupper = [1]\n"
    );
    load_problem(&doc).unwrap()
}

/// `(x, A, I)` integrated from a restart point, written independently of the library's augmented system.
struct Restart<'a> {
    p: &'a ControlProblem,
    u: &'a ReferenceControl,
}

impl OdeSystem for Restart<'_> {
    fn dim(&self) -> usize {
        let m = self.p.state_dim();
        m + m * m + m
    }

    fn rhs(&self, t: f64, y: &[f64], _seg: Segment, dy: &mut [f64]) -> Result<(), EvalError> {
        let m = self.p.state_dim();
        let x = &y[..m];
        let u = self.u.value(t, x, None)?;
        let f = self.p.f(t, x, &u)?;
        let fx = self.p.f_x(t, x, &u)?;
        let gx = self.p.g_x(t, x, &u)?;
        dy[..m].copy_from_slice(&f);
        for i in 0..m {
            for j in 0..m {
                dy[m + i * m + j] = (0..m).map(|k| fx[(i, k)] * y[m + k * m + j]).sum();
            }
        }
        for j in 0..m {
            dy[m + m * m + j] = (0..m).map(|i| gx[i] * y[m + i * m + j]).sum();
        }
        Ok(())
    }
}

fn restart_increment(p: &ControlProblem, acc: &AccumulatedIntegral, t1: f64, t2: f64) -> Vec<f64> {
    let arcs = acc.arcs.as_ref().unwrap();
    let m = p.state_dim();
    let mut y0 = arcs.x.eval(t1);
    let a1 = arcs.a.at(t1);
    for i in 0..m {
        for j in 0..m {
            y0.push(a1[(i, j)]);
        }
    }
    y0.extend(std::iter::repeat(0.0).take(m));
    let sys = Restart { p, u: &arcs.control };
    let tight = OdeOptions {
        atol: 1e-12,
        rtol: 1e-11,
        ..OdeOptions::default()
    };
    let arc = solve(&sys, t1, &y0, t2, &[], &tight).unwrap();
    arc.last()[m + m * m..].to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn integral_vanishes_at_the_origin(xi in -0.5f64..0.5, which in 0usize..4) {
        let p = builtin(BUILTIN_NAMES[which]).unwrap();
        let acc = accumulate(&p, p.reference().unwrap(), &[xi], 8.0, &OdeOptions::default()).unwrap();
        prop_assert_eq!(acc.times[0], 0.0);
        prop_assert!(acc.values[0].iter().all(|v| *v == 0.0));
        prop_assert!(acc.at(0.0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn integral_matches_antiderivative(a in -1.0f64..0.3, gap in 0.5f64..2.0, c in -2.0f64..2.0) {
        let rho = a + gap;
        let p = exponential_problem(a, rho, c);
        let acc = accumulate(&p, p.reference().unwrap(), &[0.0], 16.0, &OdeOptions::default()).unwrap();
        for (t, v) in acc.times.iter().zip(&acc.values) {
            let exact = c * (f64::exp((a - rho) * t) - 1.0) / (a - rho);
            prop_assert!((v[0] - exact).abs() <= 1e-7 * exact.abs().max(1.0), "t={t}");
        }
    }

    #[test]
    fn scaling_the_payoff_scales_the_adjoint(c in 0.2f64..5.0) {
        let base = exponential_problem(0.0, 1.0, 1.0);
        let scaled = exponential_problem(0.0, 1.0, c);
        let opts = OdeOptions::default();
        let a0 = accumulate(&base, base.reference().unwrap(), &[0.0], 32.0, &opts).unwrap();
        let a1 = accumulate(&scaled, scaled.reference().unwrap(), &[0.0], 32.0, &opts).unwrap();
        for (u, v) in a0.values.iter().zip(&a1.values) {
            prop_assert!((c * u[0] - v[0]).abs() <= 1e-8 * c.max(1.0));
        }
        let k0 = cauchy_adjoint(&base, &a0, &[1.0], Some(10.0)).unwrap();
        let k1 = cauchy_adjoint(&scaled, &a1, &[c], Some(10.0)).unwrap();
        for t in [0.0, 3.0, 9.5] {
            prop_assert!((c * k0.psi_unit.eval(t)[0] - k1.psi_unit.eval(t)[0]).abs() <= 1e-8 * c.max(1.0), "t={t}");
        }
        prop_assert!((k1.lambda0 - 1.0 / (1.0 + c)).abs() <= 1e-15);
    }

    #[test]
    fn lambda_lies_in_unit_interval(i_star in -1e3f64..1e3) {
        let p = builtin("scalar-exp").unwrap();
        let acc = accumulate(&p, p.reference().unwrap(), &[0.0], 16.0, &OdeOptions::default()).unwrap();
        let k = cauchy_adjoint(&p, &acc, &[i_star], Some(4.0)).unwrap();
        prop_assert!(k.lambda0 > 0.0 && k.lambda0 <= 1.0);
        prop_assert_eq!(k.lambda0 == 1.0, i_star == 0.0);
    }

    #[test]
    fn increments_match_a_restart(t1 in 1.0f64..6.0, gap in 1.0f64..6.0, xi in -0.3f64..0.3) {
        let p = builtin("halkin").unwrap();
        let acc = accumulate(&p, p.reference().unwrap(), &[xi], 16.0, &OdeOptions::default()).unwrap();
        let t2 = t1 + gap;
        let direct: Vec<f64> = acc.at(t2).iter().zip(acc.at(t1)).map(|(b, a)| b - a).collect();
        let restarted = restart_increment(&p, &acc, t1, t2);
        prop_assert!((direct[0] - restarted[0]).abs() <= 1e-7, "{direct:?} vs {restarted:?}");
    }
}

#[test]
fn zero_limit_gives_unit_lambda() {
    let p = builtin("scalar-exp").unwrap();
    let acc = accumulate(&p, p.reference().unwrap(), &[0.0], 16.0, &OdeOptions::default()).unwrap();
    let k = cauchy_adjoint(&p, &acc, &[0.0], Some(4.0)).unwrap();
    assert_eq!(k.lambda0, 1.0);
}

#[test]
fn product_identity_on_converged_builtins() {
    let opts = OdeOptions::default();
    for name in BUILTIN_NAMES {
        let p = builtin(name).unwrap();
        let acc = accumulate(&p, p.reference().unwrap(), &vec![0.0; p.state_dim()], 64.0, &opts).unwrap();
        let verdict = classify_convergence(&acc, 1e-6).unwrap();
        let VerdictKind::Converged { limit } = &verdict.kind else {
            panic!("{name}: {}", verdict.label());
        };
        let k = cauchy_adjoint(&p, &acc, limit, None).unwrap();
        let dev = verify_product_identity(k.lambda0, &k.psi, &acc, limit).unwrap();
        assert!(dev <= 1e-6, "{name}: {dev}");
        assert!((k.lambda0 - 1.0 / (1.0 + vector_norm(limit))).abs() <= 1e-15);
    }
}

#[test]
fn halkin_limit_is_minus_one() {
    let p = builtin("halkin").unwrap();
    let acc = accumulate(&p, p.reference().unwrap(), &[0.0], 64.0, &OdeOptions::default()).unwrap();
    let verdict = classify_convergence(&acc, 1e-6).unwrap();
    let VerdictKind::Converged { limit } = verdict.kind else {
        panic!("{}", verdict.label())
    };
    assert!((limit[0] + 1.0).abs() <= 1e-8);
}
