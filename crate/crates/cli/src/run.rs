//! Subcommand orchestration.

use std::collections::BTreeMap;
use std::path::Path;

use noncoercive_core::auditor::{audit_all, AuditReport, EstimateId, EstimateReport, Verdict};
use noncoercive_core::counterexample::{divergence_report, DivergenceReport};
use noncoercive_core::functional::{certify, CertifyReport, Integrand};
use noncoercive_core::grid::{DiscreteField, Norm};
use noncoercive_core::solver::{minimality_check, MinimalityReport};
use noncoercive_core::{SolveTrace, SolverOptions};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{
    build_problem, echo_config, sweep_point, ProblemConfig, RunConfig, Subcommand,
};
use crate::report::{ensure_dir, num, opt_num, write_json, write_text, Table};
use crate::{CliError, EXIT_AUDIT_FAILED, EXIT_NOT_CONVERGED, EXIT_OK};

/// Summary deciding the exit status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub subcommand: Subcommand,
    pub converged: bool,
    /// Estimates with verdict `fail`.
    pub hard_failures: usize,
    /// Estimates with verdict `warn`.
    pub warnings: usize,
    /// Failed certifications, minimality comparisons and counterexample
    /// assertions.
    pub check_failures: usize,
}

impl Outcome {
    fn new(subcommand: Subcommand) -> Self {
        Self {
            subcommand,
            converged: true,
            hard_failures: 0,
            warnings: 0,
            check_failures: 0,
        }
    }

    pub fn exit_code(&self) -> i32 {
        if !self.converged {
            EXIT_NOT_CONVERGED
        } else if self.hard_failures + self.check_failures > 0 {
            EXIT_AUDIT_FAILED
        } else {
            EXIT_OK
        }
    }

    fn absorb(&mut self, p: &PointResult) {
        self.converged &= p.trace.converged();
        self.hard_failures += p.audit.hard_failures();
        self.warnings += p.audit.warnings();
        self.check_failures += p.check_failures();
    }

    fn summary(&self) -> Value {
        json!({
            "converged": self.converged,
            "hard_failures": self.hard_failures,
            "warnings": self.warnings,
            "check_failures": self.check_failures,
            "exit_code": self.exit_code(),
        })
    }
}

/// Runs `config`, writing every artifact into `out`.
pub fn run(config: &RunConfig, out: &Path, jobs: Option<usize>) -> Result<Outcome, CliError> {
    ensure_dir(out)?;
    write_text(out, "config.echo.toml", &echo_config(config)?)?;
    match config.subcommand {
        Subcommand::Solve => run_solve(config, out, false),
        Subcommand::Audit => run_solve(config, out, true),
        Subcommand::Counterexample => run_counterexample(config, out),
        Subcommand::Certify => run_certify(config, out),
        Subcommand::Sweep => run_sweep(config, out, jobs),
    }
}

/// Everything computed for one problem.
pub struct PointResult {
    pub certify: Option<CertifyReport>,
    pub field: DiscreteField,
    pub trace: SolveTrace,
    pub audit: AuditReport,
    pub minimality: Option<MinimalityReport>,
}

impl PointResult {
    pub fn check_failures(&self) -> usize {
        let cert = self.certify.as_ref().map_or(0, |c| usize::from(!c.passed));
        let min = self.minimality.as_ref().map_or(0, |m| m.failures);
        cert + min
    }
}

/// Certifies (optionally), solves, audits and checks minimality.
pub fn solve_point(
    problem: &ProblemConfig,
    seed: u64,
    certify_samples: Option<usize>,
    minimality: bool,
) -> Result<PointResult, CliError> {
    let certify = match certify_samples {
        Some(samples) => {
            let integrand = Integrand::builtin(&problem.integrand, &problem.integrand_params)?;
            Some(certify(&integrand, problem.dimension, samples, seed)?)
        }
        None => None,
    };
    let spec = build_problem(problem)?;
    let (field, trace) = SolverOptions::default().solve_outer(&spec)?;
    let audit = audit_all(&spec, &trace, seed)?;
    let minimality = if minimality {
        Some(minimality_check(&spec, &field, seed)?)
    } else {
        None
    };
    Ok(PointResult {
        certify,
        field,
        trace,
        audit,
        minimality,
    })
}

fn run_solve(config: &RunConfig, out: &Path, with_certify: bool) -> Result<Outcome, CliError> {
    let samples = with_certify.then_some(config.audit.certify_samples);
    let point = solve_point(
        &config.problem,
        config.seed,
        samples,
        config.audit.minimality,
    )?;
    if config.output.solution_csv {
        write_text(out, "solution.csv", solution_table(&point.trace).as_str())?;
    }
    if config.output.trace_csv {
        write_text(out, "trace.csv", trace_table(&point.trace).as_str())?;
    }
    write_text(out, "stages.csv", stages_table(&point.trace).as_str())?;
    let mut est = Table::new(&ESTIMATE_COLUMNS);
    estimate_rows(&mut est, &[], &point.audit);
    write_text(out, "estimates.csv", est.as_str())?;

    let mut outcome = Outcome::new(config.subcommand);
    outcome.absorb(&point);
    let mut doc = point_json(&point);
    insert(
        &mut doc,
        "schema_version",
        json!(crate::config::SCHEMA_VERSION),
    );
    insert(&mut doc, "subcommand", json!(config.subcommand.to_string()));
    insert(&mut doc, "seed", json!(config.seed));
    insert(&mut doc, "summary", outcome.summary());
    write_json(out, "report.json", &doc)?;
    Ok(outcome)
}

fn insert(doc: &mut Value, key: &str, value: Value) {
    if let Value::Object(map) = doc {
        map.insert(key.to_string(), value);
    }
}

fn run_counterexample(config: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let c = &config.counterexample;
    let rep = divergence_report(c.dimension, c.rho, c.n_max)?;
    write_text(
        out,
        "counterexample.csv",
        counterexample_table(&rep).as_str(),
    )?;
    let mut outcome = Outcome::new(config.subcommand);
    outcome.check_failures = usize::from(!rep.passed());
    let doc = json!({
        "schema_version": crate::config::SCHEMA_VERSION,
        "subcommand": config.subcommand.to_string(),
        "seed": config.seed,
        "counterexample": rep,
        "summary": outcome.summary(),
    });
    write_json(out, "report.json", &doc)?;
    Ok(outcome)
}

fn run_certify(config: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let mut outcome = Outcome::new(config.subcommand);
    let mut table = Table::new(&[
        "integrand",
        "dim",
        "samples",
        "seed",
        "check",
        "worst_margin",
        "violation_count",
        "passed",
    ]);
    let mut reports = BTreeMap::new();
    for name in &config.sweep.integrands {
        let params = if *name == config.problem.integrand {
            config.problem.integrand_params.clone()
        } else {
            noncoercive_core::functional::builtin_defaults("integrand", name).unwrap_or_default()
        };
        let integrand = Integrand::builtin(name, &params)?;
        let rep = certify(
            &integrand,
            config.problem.dimension,
            config.audit.certify_samples,
            config.seed,
        )?;
        for (check, margin) in &rep.worst_margin {
            table.row(&[
                name.clone(),
                rep.dim.to_string(),
                rep.samples.to_string(),
                rep.seed.to_string(),
                serde_json::to_value(check)?
                    .as_str()
                    .unwrap_or_default()
                    .to_string(),
                num(*margin),
                rep.violation_count.to_string(),
                rep.passed.to_string(),
            ]);
        }
        outcome.check_failures += usize::from(!rep.passed);
        reports.insert(name.clone(), rep);
    }
    write_text(out, "certify.csv", table.as_str())?;
    let doc = json!({
        "schema_version": crate::config::SCHEMA_VERSION,
        "subcommand": config.subcommand.to_string(),
        "seed": config.seed,
        "certify": reports,
        "summary": outcome.summary(),
    });
    write_json(out, "report.json", &doc)?;
    Ok(outcome)
}

/// One entry of the sweep's Cartesian product.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub integrand: String,
    pub b: String,
    pub b_scale: f64,
    pub f: String,
    pub seed: u64,
    pub problem: ProblemConfig,
}

/// Points in the order integrand, coefficient, scale, datum (last fastest).
pub fn sweep_points(config: &RunConfig) -> Vec<SweepPoint> {
    let s = &config.sweep;
    let mut points = Vec::new();
    for integrand in &s.integrands {
        for b in &s.coefficients {
            for &scale in &s.b_scales {
                for f in &s.data {
                    let index = points.len();
                    points.push(SweepPoint {
                        index,
                        integrand: integrand.clone(),
                        b: b.clone(),
                        b_scale: scale,
                        f: f.clone(),
                        seed: config.seed.wrapping_add(index as u64),
                        problem: sweep_point(&config.problem, integrand, b, f, scale),
                    });
                }
            }
        }
    }
    points
}

fn run_sweep(config: &RunConfig, out: &Path, jobs: Option<usize>) -> Result<Outcome, CliError> {
    let points = sweep_points(config);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder.build().map_err(|e| CliError::Pool(e.to_string()))?;
    let samples = config.audit.certify_samples;
    let minimality = config.audit.minimality;
    let results: Vec<Result<PointResult, CliError>> = pool.install(|| {
        points
            .par_iter()
            .map(|p| solve_point(&p.problem, p.seed, Some(samples), minimality))
            .collect()
    });

    let mut outcome = Outcome::new(config.subcommand);
    let mut matrix = Table::new(&[
        "point",
        "integrand",
        "b",
        "b_scale",
        "f",
        "seed",
        "certified",
        "converged",
        "hard_failures",
        "warnings",
        "minimality_failures",
        "linf_ratio_max",
        "verdict",
    ]);
    let mut columns = vec!["point"];
    columns.extend(ESTIMATE_COLUMNS);
    let mut estimates = Table::new(&columns);
    let mut docs = Vec::with_capacity(points.len());
    for (p, r) in points.iter().zip(results) {
        let r = r?;
        outcome.absorb(&r);
        let mut point_outcome = Outcome::new(Subcommand::Sweep);
        point_outcome.absorb(&r);
        let linf_ratio = r
            .audit
            .all()
            .filter(|e| {
                e.estimate_id == EstimateId::LinfBound && e.verdict != Verdict::Inapplicable
            })
            .map(|e| {
                if e.rhs > 0.0 {
                    e.lhs / e.rhs
                } else if e.lhs > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .fold(None, |acc: Option<f64>, x| {
                Some(acc.map_or(x, |a| a.max(x)))
            });
        let verdict = match point_outcome.exit_code() {
            EXIT_OK => "pass",
            EXIT_NOT_CONVERGED => "not_converged",
            _ => "fail",
        };
        matrix.row(&[
            p.index.to_string(),
            p.integrand.clone(),
            p.b.clone(),
            num(p.b_scale),
            p.f.clone(),
            p.seed.to_string(),
            r.certify.as_ref().is_none_or(|c| c.passed).to_string(),
            r.trace.converged().to_string(),
            r.audit.hard_failures().to_string(),
            r.audit.warnings().to_string(),
            r.minimality.as_ref().map_or(0, |m| m.failures).to_string(),
            opt_num(linf_ratio),
            verdict.to_string(),
        ]);
        estimate_rows(&mut estimates, &[p.index.to_string()], &r.audit);
        let mut doc = point_json(&r);
        insert(&mut doc, "point", json!(p.index));
        insert(&mut doc, "integrand", json!(p.integrand));
        insert(&mut doc, "b", json!(p.b));
        insert(&mut doc, "b_scale", json!(p.b_scale));
        insert(&mut doc, "f", json!(p.f));
        insert(&mut doc, "seed", json!(p.seed));
        insert(&mut doc, "summary", point_outcome.summary());
        docs.push(doc);
    }
    write_text(out, "sweep_matrix.csv", matrix.as_str())?;
    write_text(out, "estimates.csv", estimates.as_str())?;
    let doc = json!({
        "schema_version": crate::config::SCHEMA_VERSION,
        "subcommand": config.subcommand.to_string(),
        "seed": config.seed,
        "points": docs,
        "summary": outcome.summary(),
    });
    write_json(out, "report.json", &doc)?;
    Ok(outcome)
}

/// JSON sections of one solved point: `solve`, `estimates` (keyed by
/// estimate id), `testclass`, `minimality` and `certify`.
pub fn point_json(p: &PointResult) -> Value {
    let outer: Vec<Value> = p
        .trace
        .outer
        .iter()
        .enumerate()
        .map(|(i, o)| {
            json!({
                "stage_index": i,
                "n_level": o.n_level,
                "datum_bound": o.datum_bound,
                "converged": o.converged(),
                "m_fixpoint_index": o.m_fixpoint_index,
                "linf": o.field.norm(Norm::Linf),
                "l2": o.field.norm(Norm::L2),
                "m_stages": o.stages.iter().map(|s| json!({
                    "m_level": s.m_level,
                    "status": s.trace.status,
                    "iterations": s.trace.iterations,
                    "residual_inf": s.trace.residual_inf,
                    "final_energy": s.trace.final_energy(),
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    let mut estimates: BTreeMap<&'static str, Vec<Value>> = BTreeMap::new();
    for stage in &p.audit.stages {
        for r in &stage.reports {
            estimates
                .entry(r.estimate_id.as_str())
                .or_default()
                .push(estimate_json(Some(stage.stage_index), r));
        }
    }
    for r in &p.audit.global {
        estimates
            .entry(r.estimate_id.as_str())
            .or_default()
            .push(estimate_json(None, r));
    }
    json!({
        "solve": {
            "converged": p.trace.converged(),
            "outer": outer,
            "stabilization_history": p.trace.stabilization_history,
            "final_linf": p.field.norm(Norm::Linf),
        },
        "estimates": estimates,
        "testclass": p.audit.testclass,
        "minimality": p.minimality,
        "certify": p.certify,
    })
}

fn estimate_json(stage_index: Option<usize>, r: &EstimateReport) -> Value {
    json!({
        "stage_index": stage_index,
        "lhs": r.lhs,
        "rhs": r.rhs,
        "rhs_tight": r.rhs_tight,
        "slack": r.slack,
        "params": r.params,
        "verdict": r.verdict,
        "tolerance": r.tolerance,
        "note": r.note,
    })
}

pub const ESTIMATE_COLUMNS: [&str; 11] = [
    "stage_index",
    "n_level",
    "estimate_id",
    "k",
    "lhs",
    "rhs",
    "rhs_tight",
    "slack",
    "rel_tol",
    "abs_tol",
    "verdict",
];

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::Warn => "warn",
        Verdict::Inapplicable => "inapplicable",
    }
}

/// One row per estimate, stage and `k`; global reports have an empty stage.
fn estimate_rows(table: &mut Table, prefix: &[String], audit: &AuditReport) {
    let mut push = |stage: Option<(usize, f64)>, r: &EstimateReport| {
        let mut cells = prefix.to_vec();
        cells.extend([
            stage.map(|s| s.0.to_string()).unwrap_or_default(),
            opt_num(stage.map(|s| s.1)),
            r.estimate_id.as_str().to_string(),
            opt_num(r.params.get("k").copied()),
            num(r.lhs),
            num(r.rhs),
            opt_num(r.rhs_tight),
            num(r.slack),
            num(r.tolerance.rel),
            num(r.tolerance.abs),
            verdict_str(r.verdict).to_string(),
        ]);
        table.row(&cells);
    };
    for s in &audit.stages {
        for r in &s.reports {
            push(Some((s.stage_index, s.n_level)), r);
        }
    }
    for r in &audit.global {
        push(None, r);
    }
}

/// Final field of every outer stage at the nodes.
pub fn solution_table(trace: &SolveTrace) -> Table {
    let mut t = Table::new(&["stage_index", "n_level", "node", "x", "y", "value"]);
    for (i, o) in trace.outer.iter().enumerate() {
        let nodes = o.field.grid().nodes();
        for (node, (p, v)) in nodes.iter().zip(o.field.values()).enumerate() {
            t.row(&[
                i.to_string(),
                num(o.n_level),
                node.to_string(),
                num(p[0]),
                num(p[1]),
                num(*v),
            ]);
        }
    }
    t
}

/// Energy after every accepted step of every inner minimization; the row
/// with `iteration = 0` holds the starting energy and no step data.
pub fn trace_table(trace: &SolveTrace) -> Table {
    let mut t = Table::new(&[
        "stage_index",
        "n_level",
        "m_index",
        "m_level",
        "iteration",
        "energy",
        "step",
        "slope",
        "direction",
        "armijo",
    ]);
    for (i, o) in trace.outer.iter().enumerate() {
        for (mi, s) in o.stages.iter().enumerate() {
            for (it, e) in s.trace.energies.iter().enumerate() {
                let step = it.checked_sub(1).and_then(|k| s.trace.steps.get(k));
                t.row(&[
                    i.to_string(),
                    num(o.n_level),
                    mi.to_string(),
                    num(s.m_level),
                    it.to_string(),
                    num(*e),
                    opt_num(step.map(|r| r.step)),
                    opt_num(step.map(|r| r.slope)),
                    step.map(|r| format!("{:?}", r.direction).to_lowercase())
                        .unwrap_or_default(),
                    step.map(|r| r.armijo.to_string()).unwrap_or_default(),
                ]);
            }
        }
    }
    t
}

/// One row per `(n, M)` stage.
pub fn stages_table(trace: &SolveTrace) -> Table {
    let mut t = Table::new(&[
        "stage_index",
        "n_level",
        "m_index",
        "m_level",
        "status",
        "iterations",
        "residual_inf",
        "final_energy",
        "linf",
        "m_fixpoint",
    ]);
    for (i, o) in trace.outer.iter().enumerate() {
        for (mi, s) in o.stages.iter().enumerate() {
            let status = serde_json::to_value(s.trace.status)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            t.row(&[
                i.to_string(),
                num(o.n_level),
                mi.to_string(),
                num(s.m_level),
                status,
                s.trace.iterations.to_string(),
                num(s.trace.residual_inf),
                num(s.trace.final_energy()),
                num(s.field.norm(Norm::Linf)),
                (o.m_fixpoint_index == Some(mi)).to_string(),
            ]);
        }
    }
    t
}

pub fn counterexample_table(rep: &DivergenceReport) -> Table {
    let mut t = Table::new(&[
        "n",
        "cutoff_radius",
        "w11",
        "log_h1",
        "weighted_grad",
        "l2_sq",
        "chain_rhs",
        "chain_holds",
    ]);
    for r in &rep.rows {
        t.row(&[
            num(r.n),
            num(r.cutoff_radius),
            num(r.w11),
            num(r.log_h1),
            num(r.weighted_grad),
            num(r.l2_sq),
            num(r.chain_rhs),
            (r.w11 <= r.chain_rhs).to_string(),
        ]);
    }
    t
}
