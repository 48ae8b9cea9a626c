use std::path::Path;

use horizon_core::cauchy::{
    abnormality_indicator, accumulate, adjoint_ode_residual, axis_directions, cauchy_adjoint, classify_convergence,
    continuity_probe, select_limit, verify_product_identity, AccumulatedIntegral, CauchyAdjoint, ConvergenceVerdict,
    VerdictKind,
};
use horizon_core::csvfmt;
use horizon_core::ode::{vector_norm, AdjointArc, DenseArc, OdeOptions};
use horizon_core::pmp::{run_truncation, SweepOptions, TruncationOptions};
use horizon_core::problem::{builtin, builtin_catalog, load_problem, ControlProblem, ReferenceControl};
use horizon_core::tail::geometric_checkpoints;
use horizon_core::transversality::{monotone_analysis, run_battery, BatteryInput, ProbeGrid};

use crate::output::{fmt_vec, read, write_atomic, Summary};
use crate::{
    AdjointArgs, CheckArgs, CliError, GlobalArgs, ListArgs, SweepArgs, EXIT_NOT_CONVERGED, EXIT_NO_LIMIT, EXIT_OK,
};

const DEFAULT_TAUS: [f64; 4] = [5.0, 10.0, 20.0, 40.0];
const MONOTONE_PROBE_RADIUS: f64 = 0.1;
const MONOTONE_PROBE_SPAN: f64 = 10.0;

fn problem(g: &GlobalArgs) -> Result<ControlProblem, CliError> {
    match (&g.problem, &g.builtin) {
        (Some(path), None) => Ok(load_problem(&read(path)?)?),
        (None, Some(name)) => Ok(builtin(name)?),
        _ => Err(CliError::Usage("exactly one of --problem or --builtin is required".into())),
    }
}

fn ode(g: &GlobalArgs) -> Result<OdeOptions, CliError> {
    for (name, v) in [("atol", g.atol), ("rtol", g.rtol), ("tol-conv", g.tol_conv), ("tmax", g.tmax)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(CliError::Usage(format!("--{name} must be positive, got {v}")));
        }
    }
    Ok(OdeOptions {
        atol: g.atol,
        rtol: g.rtol,
        ..OdeOptions::default()
    })
}

fn reference(p: &ControlProblem) -> Result<&ReferenceControl, CliError> {
    p.reference()
        .ok_or_else(|| CliError::Usage(format!("problem {:?} has no reference control", p.label())))
}

pub fn list(a: &ListArgs) -> Result<u8, CliError> {
    let catalog = builtin_catalog();
    if a.json {
        let items: Vec<serde_json::Value> = catalog
            .iter()
            .map(|b| serde_json::json!({ "name": b.name, "description": b.description }))
            .collect();
        println!("{}", serde_json::to_string_pretty(&items).expect("listing serializes"));
    } else {
        for b in catalog {
            println!("{:<17}{}", b.name, b.description);
        }
    }
    Ok(EXIT_OK)
}

pub fn solve(g: &GlobalArgs) -> Result<u8, CliError> {
    let p = problem(g)?;
    let ode = ode(g)?;
    let taus = g.tau.clone().unwrap_or_else(|| DEFAULT_TAUS.to_vec());
    let opts = TruncationOptions {
        sweep: SweepOptions {
            ode,
            ..SweepOptions::default()
        },
        seed: g.seed,
        ..TruncationOptions::default()
    };
    let run = run_truncation(&p, p.reference(), &taus, &opts)?;
    write_atomic(&g.out, "truncation.csv", &run.to_csv())?;
    if let Some(e) = &run.last {
        write_atomic(&g.out, "extremal_x.csv", &e.x.to_csv())?;
        write_atomic(&g.out, "extremal_psi.csv", &e.psi.to_csv())?;
    }

    let mut s = Summary::default();
    s.put("command", "solve");
    s.put("problem", p.label());
    s.put("seed", g.seed);
    s.put("tau", fmt_vec(&taus));
    s.put("pool_size", run.omega.as_ref().map_or(0, |o| o.pool_size));
    if let Some(o) = &run.omega {
        s.put("omega", fmt_vec(&o.envelope));
    }
    for e in &run.entries {
        match &e.error {
            None => s.put(
                &format!("n{}", e.n),
                format!(
                    "tau = {} lambda = {:.16e} psi0 = {} residual = {:.3e} converged = {} iterations = {}",
                    e.tau,
                    e.lambda,
                    fmt_vec(&e.psi0),
                    e.residual,
                    e.converged,
                    e.iterations
                ),
            ),
            Some(err) => s.put(&format!("n{}", e.n), format!("tau = {} error = {err}", e.tau)),
        }
    }
    let all_ok = run.entries.iter().all(|e| e.error.is_none() && e.converged);
    if let Some(e) = run.entries.iter().rev().find(|e| e.error.is_none()) {
        s.put("lambda", format!("{:.16e}", e.lambda));
        s.put("psi0", fmt_vec(&e.psi0));
    }
    s.put("converged", all_ok);
    write_atomic(&g.out, "summary.txt", &s.render())?;
    Ok(if all_ok { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

struct CauchyRun {
    p: ControlProblem,
    acc: AccumulatedIntegral,
    verdict: ConvergenceVerdict,
    cauchy: Option<CauchyAdjoint>,
    limit_error: Option<String>,
}

fn cauchy_run(g: &GlobalArgs, cluster: Option<usize>, t_out: Option<f64>) -> Result<CauchyRun, CliError> {
    let p = problem(g)?;
    let ode = ode(g)?;
    let u0 = reference(&p)?.clone();
    let acc = accumulate(&p, &u0, &vec![0.0; p.state_dim()], g.tmax, &ode)?;
    let verdict = classify_convergence(&acc, g.tol_conv)?;
    let (cauchy, limit_error) = match select_limit(&verdict, cluster) {
        Ok(i_star) => (Some(cauchy_adjoint(&p, &acc, &i_star, t_out)?), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(CauchyRun {
        p,
        acc,
        verdict,
        cauchy,
        limit_error,
    })
}

pub fn adjoint(g: &GlobalArgs, a: &AdjointArgs) -> Result<u8, CliError> {
    let r = cauchy_run(g, a.cluster, a.t_out)?;
    write_atomic(&g.out, "I_accumulated.csv", &r.acc.to_csv())?;
    let mut s = Summary::default();
    s.put("command", "adjoint");
    s.put("problem", r.p.label());
    s.put("seed", g.seed);
    s.put("tmax", g.tmax);
    s.put("tol_conv", g.tol_conv);
    s.put("verdict", r.verdict.label());
    if let Some(c) = &r.cauchy {
        write_atomic(&g.out, "psi_cauchy.csv", &c.to_csv())?;
        let identity = verify_product_identity(c.lambda0, &c.psi, &r.acc, &c.i_star)?;
        let residual = adjoint_ode_residual(&r.p, &r.acc, c)?;
        s.put("i_star", fmt_vec(&c.i_star));
        s.put("lambda0", format!("{:.16e}", c.lambda0));
        s.put("psi0", fmt_vec(c.psi.node(0)));
        s.put("t_out", c.t_out);
        s.put("product_identity", format!("{identity:.3e}"));
        s.put("adjoint_residual", format!("{residual:.3e}"));
    }
    if let Some(e) = &r.limit_error {
        s.put("limit", e);
    }
    s.block("verdict", &r.verdict.to_json());
    write_atomic(&g.out, "summary.txt", &s.render())?;
    Ok(match r.verdict.kind {
        VerdictKind::Converged { .. } => EXIT_OK,
        _ => EXIT_NO_LIMIT,
    })
}

/// Node derivatives by three-point differences on a nonuniform grid.
fn node_derivatives(times: &[f64], rows: &[Vec<f64>]) -> Vec<f64> {
    let n = times.len();
    let m = rows[0].len();
    let mut d = Vec::with_capacity(n * m);
    for i in 0..n {
        let (a, b) = match i {
            0 => (0, 1),
            _ if i == n - 1 => (n - 2, n - 1),
            _ => (i - 1, i + 1),
        };
        for j in 0..m {
            if a + 2 == b {
                let (h0, h1) = (times[i] - times[a], times[b] - times[i]);
                let left = (rows[i][j] - rows[a][j]) / h0;
                let right = (rows[b][j] - rows[i][j]) / h1;
                d.push((h1 * left + h0 * right) / (h0 + h1));
            } else {
                d.push((rows[b][j] - rows[a][j]) / (times[b] - times[a]));
            }
        }
    }
    d
}

fn load_psi(path: &Path, m: usize) -> Result<AdjointArc, CliError> {
    let (header, rows) = csvfmt::parse(&read(path)?).map_err(|source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |why: &str| CliError::Usage(format!("{}: {why}", path.display()));
    if header.first().map(String::as_str) != Some("t") || header.len() < 1 + m {
        return Err(bad(&format!("expected a `t` column followed by {m} adjoint columns")));
    }
    if rows.len() < 2 {
        return Err(bad("need at least two rows"));
    }
    let times: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    if times.windows(2).any(|w| !(w[1] > w[0])) || rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(bad("times must increase and all values must be finite"));
    }
    let psi_rows: Vec<Vec<f64>> = rows.iter().map(|r| r[1..=m].to_vec()).collect();
    let derivs = node_derivatives(&times, &psi_rows);
    let values = psi_rows.into_iter().flatten().collect();
    Ok(AdjointArc::new(DenseArc::from_nodes(m, times, values, &derivs)))
}

pub fn check(g: &GlobalArgs, a: &CheckArgs) -> Result<u8, CliError> {
    let ode = ode(g)?;
    let r = cauchy_run(g, a.cluster, None)?;
    let m = r.p.state_dim();
    let u0 = reference(&r.p)?;
    let (psi, lambda) = match (&a.psi, &r.cauchy) {
        (Some(path), _) => {
            let psi = load_psi(path, m)?;
            let lambda = 1.0 - vector_norm(psi.node(0));
            (psi, lambda)
        }
        (None, Some(c)) => (c.psi.clone(), c.lambda0),
        (None, None) => {
            return Err(CliError::Usage(format!(
                "no adjoint available: {}; pass --cluster or --psi",
                r.limit_error.as_deref().unwrap_or("integral has no limit")
            )))
        }
    };
    let arcs = r.acc.arcs.as_ref().expect("accumulate keeps dense arcs");
    let taus: Vec<f64> = match &g.tau {
        Some(t) => t.clone(),
        None => geometric_checkpoints(psi.end())
            .into_iter()
            .filter(|t| *t < psi.end())
            .collect(),
    };
    let monotone = match (&a.psi, &r.cauchy) {
        (None, Some(c)) => {
            let mut probes = vec![r.acc.clone()];
            for d in axis_directions(m) {
                let xi: Vec<f64> = d.iter().map(|v| MONOTONE_PROBE_RADIUS * v).collect();
                probes.push(accumulate(&r.p, u0, &xi, g.tmax, &ode)?);
            }
            let grid = ProbeGrid::uniform(MONOTONE_PROBE_SPAN.min(g.tmax), 40);
            Some(monotone_analysis(&r.p, &arcs.control, &arcs.x, &grid, c, &probes)?)
        }
        _ => None,
    };
    let input = BatteryInput {
        psi: &psi,
        lambda,
        a: &arcs.a,
        taus,
        tol: g.tol_conv,
        dominance: None,
        monotone,
        seed: g.seed,
    };
    let report = run_battery(&r.p, Some(u0), input, &ode)?;
    write_atomic(&g.out, "transversality.txt", &report.to_text())?;
    for c in &report.conditions {
        write_atomic(&g.out, &format!("evidence_{}.csv", c.condition), &c.evidence_csv())?;
    }
    println!("{}", report.summary_line());
    Ok(EXIT_OK)
}

pub fn sweep(g: &GlobalArgs, a: &SweepArgs) -> Result<u8, CliError> {
    let p = problem(g)?;
    let ode = ode(g)?;
    let u0 = reference(&p)?;
    let probe = continuity_probe(&p, u0, &a.radii, &axis_directions(p.state_dim()), g.tmax, &ode)?;
    let abn = abnormality_indicator(&p, u0, &a.radii, g.tmax, &ode)?;
    write_atomic(&g.out, "probe.csv", &probe.to_csv())?;
    write_atomic(
        &g.out,
        "abnormality.json",
        &serde_json::to_string_pretty(&abn).expect("report serializes"),
    )?;
    let mut s = Summary::default();
    s.put("command", "sweep");
    s.put("problem", p.label());
    s.put("tmax", g.tmax);
    s.put("radii", fmt_vec(&a.radii));
    s.put("continuity_decreasing", probe.decreasing);
    match probe.modulus {
        Some((pw, c)) => s.put("modulus", format!("{c:.6e} * r^{pw:.6}")),
        None => s.put("modulus", "none (no nonzero differences)"),
    }
    s.put("abnormality", abn.message());
    write_atomic(&g.out, "summary.txt", &s.render())?;
    Ok(EXIT_OK)
}
