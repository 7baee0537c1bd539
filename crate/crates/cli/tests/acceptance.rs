//! Acceptance criteria. Runs as a plain program and prints one PASS/FAIL
//! line per criterion; exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use noncoercive_cli::config::{build_problem, parse_config_for, ProblemConfig, Subcommand};
use noncoercive_cli::run as run_config;
use noncoercive_cli::run::{solve_point, sweep_points, PointResult, SweepPoint};
use noncoercive_core::auditor::{weak_pairings, EstimateId};
use noncoercive_core::counterexample::{divergence_report, log_h1_limit, DivergenceReport};
use noncoercive_core::functional::{
    eval_jm, residual, CoefficientField, Datum, Integrand, MSchedule, ProblemSpec,
};
use noncoercive_core::grid::{build_interval_grid, DiscreteField, Norm};
use noncoercive_core::solver::solve_outer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    if elapsed <= limit {
        Ok(())
    } else {
        Err(format!("took {elapsed:?}, limit {limit:?}"))
    }
}

/// Thomas algorithm for the P1 system of `−2u'' + u = 1` on `cells` uniform cells.
fn tridiagonal_oracle(cells: usize) -> Vec<f64> {
    let h = 1.0 / cells as f64;
    let n = cells - 1;
    let diag = 4.0 / h + 2.0 * h / 3.0;
    let off = -2.0 / h + h / 6.0;
    let (mut c, mut d) = (vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let denom = diag - if i > 0 { off * c[i - 1] } else { 0.0 };
        c[i] = off / denom;
        d[i] = (h - if i > 0 { off * d[i - 1] } else { 0.0 }) / denom;
    }
    let mut u = vec![0.0; cells + 1];
    for i in (0..n).rev() {
        u[i + 1] = d[i] - if i + 1 < n { c[i] * u[i + 2] } else { 0.0 };
    }
    u
}

fn quadratic_oracle() -> Outcome {
    let start = Instant::now();
    let g = build_interval_grid(0.0, 1.0, 256).map_err(|e| e.to_string())?;
    let spec = ProblemSpec::new(
        &g,
        Integrand::quadratic(1.0, 0.0).unwrap(),
        CoefficientField::zero(),
        Datum::constant(&g, 1.0).unwrap(),
    )
    .map_err(|e| e.to_string())?;
    let (u, trace) = solve_outer(&spec).map_err(|e| e.to_string())?;
    within(start.elapsed(), Duration::from_secs(5))?;
    let s = 2f64.sqrt();
    let oracle = tridiagonal_oracle(256);
    let (mut exact_err, mut oracle_err) = (0.0f64, 0.0f64);
    for (i, (p, v)) in g.nodes().iter().zip(u.values()).enumerate() {
        let exact = 1.0 - ((p[0] - 0.5) / s).cosh() / (1.0 / (2.0 * s)).cosh();
        exact_err = exact_err.max((v - exact).abs());
        oracle_err = oracle_err.max((v - oracle[i]).abs());
    }
    ensure(
        trace.converged() && exact_err <= 1e-4 && oracle_err <= 1e-8,
        format!(
            "closed-form Linf {exact_err:.3e} (<= 1e-4), tridiagonal Linf {oracle_err:.3e} (<= 1e-8), {:?}",
            start.elapsed()
        ),
    )
}

struct Sweep {
    points: Vec<SweepPoint>,
    results: Vec<PointResult>,
    elapsed: Duration,
}

fn default_sweep() -> Sweep {
    let config = parse_config_for("", Subcommand::Sweep).unwrap();
    assert_eq!(config.problem.cells, 128);
    let points = sweep_points(&config);
    let start = Instant::now();
    let results = points
        .iter()
        .map(|p| solve_point(&p.problem, p.seed, Some(config.audit.certify_samples), true).unwrap())
        .collect();
    Sweep {
        points,
        results,
        elapsed: start.elapsed(),
    }
}

fn estimate_battery(sweep: &Sweep) -> Outcome {
    within(sweep.elapsed, Duration::from_secs(600))?;
    if sweep.points.len() != 48 {
        return Err(format!("{} sweep points, expected 48", sweep.points.len()));
    }
    let ids = [
        EstimateId::Primastima,
        EstimateId::TkBound,
        EstimateId::Secondastima,
        EstimateId::Terzastima,
        EstimateId::GkBound,
    ];
    let (mut checked, mut failed) = (0, Vec::new());
    for (p, r) in sweep.points.iter().zip(&sweep.results) {
        for stage in &r.audit.stages {
            let count = |id| stage.reports.iter().filter(|e| e.estimate_id == id).count();
            if count(EstimateId::TkBound) != 6 || count(EstimateId::GkBound) != 6 {
                return Err(format!(
                    "point {} stage {}: expected 6 k-values",
                    p.index, stage.stage_index
                ));
            }
            for e in stage
                .reports
                .iter()
                .filter(|e| ids.contains(&e.estimate_id))
            {
                checked += 1;
                let ok = e.tolerance.rel == 1e-6 && e.lhs <= e.rhs * (1.0 + 1e-6) + e.tolerance.abs;
                if !ok || e.verdict != noncoercive_core::auditor::Verdict::Pass {
                    failed.push(format!(
                        "{}#{}:{}",
                        p.index, stage.stage_index, e.estimate_id
                    ));
                }
            }
        }
    }
    ensure(
        failed.is_empty(),
        format!(
            "{checked} verdicts over 48 points, {} failed {:?}, {:?}",
            failed.len(),
            failed,
            sweep.elapsed
        ),
    )
}

fn maximum_principle(sweep: &Sweep) -> Outcome {
    let (mut checked, mut violations, mut worst) = (0, Vec::new(), f64::NEG_INFINITY);
    for (p, r) in sweep.points.iter().zip(&sweep.results) {
        for o in &r.trace.outer {
            if !o.datum_bound.is_finite() {
                continue;
            }
            let spec = build_problem(&p.problem).unwrap();
            let fn_sup = noncoercive_core::functional::make_jn_datum(&spec.f, o.n_level)
                .unwrap()
                .linf_bound()
                .unwrap();
            let lhs = o.field.norm(Norm::Linf);
            checked += 1;
            let margin = lhs - fn_sup * (1.0 + 1e-6);
            worst = worst.max(margin);
            if margin > 0.0 {
                violations.push(format!(
                    "point {} n={} margin {margin:.3e}",
                    p.index, o.n_level
                ));
            }
        }
    }
    ensure(
        violations.is_empty() && checked > 0,
        format!(
            "{checked} bounded stages, {} violations {violations:?}, worst margin {worst:.3e}",
            violations.len()
        ),
    )
}

fn m_fixpoint() -> Outcome {
    let mut details = Vec::new();
    for name in ["quadratic", "anisotropic", "logaug"] {
        let g = build_interval_grid(0.0, 1.0, 128).unwrap();
        let spec = ProblemSpec::new(
            &g,
            Integrand::builtin(name, &Default::default()).unwrap(),
            CoefficientField::constant(1.0),
            Datum::constant(&g, 1.0).unwrap(),
        )
        .unwrap()
        .with_m_schedule(MSchedule::Explicit(vec![2.0, 4.0, 8.0]))
        .unwrap();
        if spec.f.linf_bound() != Some(1.0) {
            return Err("datum sup norm is not 1".into());
        }
        let (_, trace) = solve_outer(&spec).map_err(|e| e.to_string())?;
        let mut worst = 0.0f64;
        for o in &trace.outer {
            let levels: Vec<f64> = o.stages.iter().map(|s| s.m_level).collect();
            if levels != [2.0, 4.0, 8.0] {
                return Err(format!("{name}: stages at M = {levels:?}"));
            }
            for i in 0..o.stages.len() {
                for j in i + 1..o.stages.len() {
                    let d = o.stages[i]
                        .field
                        .difference(&o.stages[j].field)
                        .unwrap()
                        .norm(Norm::Linf);
                    worst = worst.max(d);
                }
            }
        }
        details.push(format!("{name} {worst:.2e}"));
        if worst > 1e-8 || !trace.converged() {
            return Err(format!("pairwise Linf: {}", details.join(", ")));
        }
    }
    Ok(format!("pairwise Linf (<= 1e-8): {}", details.join(", ")))
}

fn strictly_decreasing_tail(d: &[f64]) -> bool {
    let tail = &d[d.len().saturating_sub(3)..];
    tail.len() >= 2 && tail.windows(2).all(|w| w[1] < w[0])
}

fn outer_stabilization() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for name in ["quadratic", "anisotropic", "logaug"] {
        let problem = ProblemConfig {
            integrand: name.into(),
            f: "power-singularity".into(),
            n_schedule: noncoercive_cli::config::NLevels::List(vec![1.0, 2.0, 4.0, 8.0, 16.0]),
            ..ProblemConfig::default()
        };
        let spec = build_problem(&problem).map_err(|e| e.to_string())?;
        let (_, trace) = solve_outer(&spec).map_err(|e| e.to_string())?;
        let strong = &trace.stabilization_history;
        let pairings: Vec<Vec<f64>> = trace
            .outer
            .iter()
            .map(|o| weak_pairings(&o.field, &spec.b))
            .collect();
        let weak: Vec<f64> = pairings
            .windows(2)
            .map(|w| {
                w[0].iter()
                    .zip(&w[1])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        let per_pairing = (0..pairings[0].len()).all(|m| {
            let d: Vec<f64> = pairings
                .windows(2)
                .map(|w| (w[1][m] - w[0][m]).abs())
                .collect();
            strictly_decreasing_tail(&d)
        });
        let this = trace.converged()
            && strictly_decreasing_tail(strong)
            && strictly_decreasing_tail(&weak)
            && per_pairing;
        ok &= this;
        details.push(format!(
            "{name}: L2 {:?} weak {:?} each-pairing {per_pairing}",
            strong
                .iter()
                .map(|x| format!("{x:.2e}"))
                .collect::<Vec<_>>(),
            weak.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>(),
        ));
    }
    ensure(ok, details.join("; "))
}

fn minimality(sweep: &Sweep) -> Outcome {
    let mut bad = Vec::new();
    let mut worst = f64::INFINITY;
    for (p, r) in sweep.points.iter().zip(&sweep.results) {
        let m = r.minimality.as_ref().ok_or("minimality not run")?;
        if m.comparisons.len() != 50 {
            return Err(format!(
                "point {}: {} comparisons",
                p.index,
                m.comparisons.len()
            ));
        }
        for c in &m.comparisons {
            worst = worst.min(c.slack / (1.0 + c.j_v.abs()));
            if c.slack < -1e-9 * (1.0 + c.j_v.abs()) {
                bad.push(format!("{}:{}", p.index, c.kind));
            }
        }
    }
    ensure(
        bad.is_empty(),
        format!(
            "48 points x 50 comparisons, {} failures {bad:?}, smallest scaled slack {worst:.3e}",
            bad.len()
        ),
    )
}

fn counterexample_table() -> Result<(DivergenceReport, Duration), String> {
    let start = Instant::now();
    let rep = divergence_report(3, 0.25, 12).map_err(|e| e.to_string())?;
    Ok((rep, start.elapsed()))
}

fn counterexample_a(rep: &DivergenceReport, elapsed: Duration) -> Outcome {
    within(elapsed, Duration::from_secs(10))?;
    let limit = log_h1_limit(3, 0.25);
    let last = rep.rows[12].log_h1;
    let gap = limit - last;
    ensure(
        (limit - PI / 2.0).abs() < 1e-14 && rep.log_h1_monotone && rep.log_h1_bounded && gap.abs() <= 1e-6,
        format!(
            "monotone {}, bounded {}, limit {limit:.10}, value(12) {last:.10}, gap {gap:.3e} (needs <= 1e-6)",
            rep.log_h1_monotone, rep.log_h1_bounded
        ),
    )
}

fn counterexample_b(rep: &DivergenceReport, elapsed: Duration) -> Outcome {
    within(elapsed, Duration::from_secs(10))?;
    let ratio = rep.rows[12].w11 / rep.rows[1].w11;
    ensure(
        rep.w11_increasing && ratio >= 100.0,
        format!(
            "strictly increasing {}, value(12)/value(1) = {ratio:.6} (needs >= 100)",
            rep.w11_increasing
        ),
    )
}

fn counterexample_c(rep: &DivergenceReport, elapsed: Duration) -> Outcome {
    within(elapsed, Duration::from_secs(10))?;
    let worst = rep
        .rows
        .iter()
        .map(|r| r.chain_rhs - r.w11)
        .fold(f64::INFINITY, f64::min);
    ensure(
        rep.rows.len() == 13 && rep.chain_holds && worst >= 0.0,
        format!("13 rows, smallest chain slack {worst:.6e}"),
    )
}

fn counterexample_d(rep: &DivergenceReport, elapsed: Duration) -> Outcome {
    within(elapsed, Duration::from_secs(10))?;
    let gap = rep
        .rows
        .iter()
        .filter(|r| r.log_h1 > 0.0)
        .map(|r| (r.weighted_grad - r.log_h1).abs() / r.log_h1)
        .fold(0.0, f64::max);
    ensure(
        gap <= 1e-8,
        format!("largest relative gap {gap:.3e} (<= 1e-8)"),
    )
}

fn gradient_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for name in ["quadratic", "anisotropic", "logaug"] {
        let g = build_interval_grid(0.0, 1.0, 64).unwrap();
        let f = Datum::builtin("sine", &Default::default(), &g).unwrap();
        let spec = ProblemSpec::new(
            &g,
            Integrand::builtin(name, &Default::default()).unwrap(),
            CoefficientField::smooth_bump(0.5, 9.5, [0.5, 0.5], 0.15).unwrap(),
            f,
        )
        .unwrap();
        let phase = rng.gen_range(0.0..1.0);
        let v = DiscreteField::interpolate(&g, |p| {
            1.5 * (PI * p[0]).sin()
                + 0.7 * (2.0 * PI * (3.0 * p[0] + phase)).sin() * (PI * p[0]).sin()
        })
        .unwrap();
        let m = 0.8 * v.norm(Norm::Linf);
        let r = residual(&spec, &v, m).unwrap();
        let interior = g.interior_nodes().to_vec();
        for _ in 0..20 {
            let i = interior[rng.gen_range(0..interior.len())];
            let h = 1e-6;
            let mut plus = v.values().to_vec();
            let mut minus = plus.clone();
            plus[i] += h;
            minus[i] -= h;
            let jp = eval_jm(&spec, &DiscreteField::from_values(&g, plus).unwrap(), m).unwrap();
            let jm = eval_jm(&spec, &DiscreteField::from_values(&g, minus).unwrap(), m).unwrap();
            let fd = (jp - jm) / (2.0 * h);
            let rel = (fd - r[i]).abs() / r[i].abs();
            worst = worst.max(rel);
            checked += 1;
        }
    }
    ensure(
        worst <= 1e-5,
        format!("{checked} node checks over 3 integrands, b > 0, finite M: worst rel err {worst:.3e} (<= 1e-5)"),
    )
}

fn determinism() -> Outcome {
    let config = parse_config_for("seed = 2024\n", Subcommand::Sweep).unwrap();
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_config(&config, a.path(), Some(1)).map_err(|e| e.to_string())?;
    run_config(&config, b.path(), None).map_err(|e| e.to_string())?;
    let ja = fs::read(a.path().join("report.json")).map_err(|e| e.to_string())?;
    let jb = fs::read(b.path().join("report.json")).map_err(|e| e.to_string())?;
    ensure(
        ja == jb,
        format!(
            "report.json {} bytes, identical: {} (1 worker vs default pool)",
            ja.len(),
            ja == jb
        ),
    )
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    })
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("1 quadratic oracle equivalence", guarded(quadratic_oracle)));
    let sweep = catch_unwind(default_sweep);
    match &sweep {
        Ok(s) => {
            results.push((
                "2 estimate battery on default sweep",
                guarded(|| estimate_battery(s)),
            ));
            results.push((
                "3 maximum principle on bounded data",
                guarded(|| maximum_principle(s)),
            ));
        }
        Err(_) => {
            results.push((
                "2 estimate battery on default sweep",
                Err("sweep failed".into()),
            ));
            results.push((
                "3 maximum principle on bounded data",
                Err("sweep failed".into()),
            ));
        }
    }
    results.push(("4 M-fixpoint with schedule (2,4,8)", guarded(m_fixpoint)));
    results.push((
        "5 outer stabilization for x^-0.4",
        guarded(outer_stabilization),
    ));
    results.push((
        "6 minimality against 50 comparison fields",
        match &sweep {
            Ok(s) => guarded(|| minimality(s)),
            Err(_) => Err("sweep failed".into()),
        },
    ));
    match counterexample_table() {
        Ok((rep, t)) => {
            results.push((
                "7a log-H1 monotone, bounded, converged at n=12",
                guarded(|| counterexample_a(&rep, t)),
            ));
            results.push((
                "7b W11 increasing with growth >= 100",
                guarded(|| counterexample_b(&rep, t)),
            ));
            results.push((
                "7c coercivity chain at every n",
                guarded(|| counterexample_c(&rep, t)),
            ));
            results.push((
                "7d weighted-gradient identity",
                guarded(|| counterexample_d(&rep, t)),
            ));
        }
        Err(e) => {
            for name in ["7a", "7b", "7c", "7d"] {
                results.push((name, Err(e.clone())));
            }
        }
    }
    results.push((
        "8 residual matches finite differences",
        guarded(gradient_consistency),
    ));
    results.push(("9 byte-identical sweep reports", guarded(determinism)));

    let mut failures = 0;
    for (name, r) in &results {
        match r {
            Ok(d) => println!("PASS criterion {name}: {d}"),
            Err(d) => {
                failures += 1;
                println!("FAIL criterion {name}: {d}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failures,
        results.len()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
