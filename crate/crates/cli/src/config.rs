//! Run configuration: TOML document, defaults, validation and echo.
//!
//! The full schema with every default is `docs/config-reference.toml`.

use std::fmt;
use std::sync::Arc;

use noncoercive_core::counterexample::{check_exponent, MAX_LEVEL};
use noncoercive_core::functional::{
    builtin_defaults, CoefficientField, Datum, Integrand, MSchedule, Params, ProblemSpec,
    COEFFICIENT_NAMES, DATUM_NAMES, INTEGRAND_NAMES,
};
use noncoercive_core::grid::{build_interval_grid, build_rect_grid, Grid};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Subcommand {
    Solve,
    Audit,
    Counterexample,
    Sweep,
    Certify,
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subcommand::Solve => "solve",
            Subcommand::Audit => "audit",
            Subcommand::Counterexample => "counterexample",
            Subcommand::Sweep => "sweep",
            Subcommand::Certify => "certify",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub subcommand: Subcommand,
    pub seed: u64,
    pub problem: ProblemConfig,
    pub audit: AuditConfig,
    pub counterexample: CounterexampleConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            subcommand: Subcommand::Solve,
            seed: 0,
            problem: ProblemConfig::default(),
            audit: AuditConfig::default(),
            counterexample: CounterexampleConfig::default(),
            sweep: SweepConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

/// `"doubling"` or an explicit increasing list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MLevels {
    Named(String),
    List(Vec<f64>),
}

/// `"auto"` or an explicit increasing list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NLevels {
    Named(String),
    List(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    /// 1 (interval) or 2 (rectangle).
    pub dimension: usize,
    /// Cells along x.
    pub cells: usize,
    /// Cells along y; 2D only.
    pub y_cells: usize,
    /// Interval end points; 1D only.
    pub bounds: [f64; 2],
    /// Rectangle side lengths; 2D only.
    pub lengths: [f64; 2],
    pub integrand: String,
    pub integrand_params: Params,
    pub b: String,
    pub b_params: Params,
    pub b_scale: f64,
    pub f: String,
    pub f_params: Params,
    pub m_schedule: MLevels,
    pub n_schedule: NLevels,
    pub solver_tol: f64,
    pub max_iter: usize,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            dimension: 1,
            cells: 128,
            y_cells: 128,
            bounds: [0.0, 1.0],
            lengths: [1.0, 1.0],
            integrand: "quadratic".into(),
            integrand_params: Params::new(),
            b: "constant".into(),
            b_params: Params::new(),
            b_scale: 1.0,
            f: "constant".into(),
            f_params: Params::new(),
            m_schedule: MLevels::Named("doubling".into()),
            n_schedule: NLevels::Named("auto".into()),
            solver_tol: noncoercive_core::functional::DEFAULT_SOLVER_TOL,
            max_iter: noncoercive_core::functional::DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditConfig {
    pub certify_samples: usize,
    pub minimality: bool,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            certify_samples: 2000,
            minimality: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CounterexampleConfig {
    pub dimension: u32,
    pub rho: f64,
    pub n_max: u32,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        Self {
            dimension: 3,
            rho: 0.25,
            n_max: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub integrands: Vec<String>,
    pub coefficients: Vec<String>,
    pub data: Vec<String>,
    /// Multipliers applied to each coefficient.
    pub b_scales: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            integrands: INTEGRAND_NAMES.iter().map(|s| s.to_string()).collect(),
            coefficients: COEFFICIENT_NAMES.iter().map(|s| s.to_string()).collect(),
            data: DATUM_NAMES.iter().map(|s| s.to_string()).collect(),
            b_scales: vec![1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: String,
    pub solution_csv: bool,
    pub trace_csv: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: "out".into(),
            solution_csv: true,
            trace_csv: true,
        }
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let mut config: RunConfig =
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    if config.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "schema_version: expected {SCHEMA_VERSION}, got {}",
            config.schema_version
        )));
    }
    fill_params(&mut config.problem)?;
    validate(&config)?;
    Ok(config)
}

/// As [`parse_config`], with the subcommand coming from the command line.
/// A document that names a different subcommand is rejected.
pub fn parse_config_for(text: &str, subcommand: Subcommand) -> Result<RunConfig, CliError> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    let mut config = parse_config(text)?;
    if table.contains_key("subcommand") && config.subcommand != subcommand {
        return Err(CliError::Config(format!(
            "subcommand: document says '{}' but '{}' was requested",
            config.subcommand, subcommand
        )));
    }
    config.subcommand = subcommand;
    Ok(config)
}

/// TOML text of the resolved configuration; parses back to the same value.
pub fn echo_config(config: &RunConfig) -> Result<String, CliError> {
    toml::to_string(config)
        .map_err(|e| CliError::Config(format!("cannot serialize configuration: {e}")))
}

fn fill_params(p: &mut ProblemConfig) -> Result<(), CliError> {
    merge_defaults(
        "problem.integrand",
        "integrand",
        &p.integrand,
        INTEGRAND_NAMES,
        &mut p.integrand_params,
    )?;
    merge_defaults(
        "problem.b",
        "coefficient",
        &p.b,
        COEFFICIENT_NAMES,
        &mut p.b_params,
    )?;
    merge_defaults("problem.f", "datum", &p.f, DATUM_NAMES, &mut p.f_params)?;
    Ok(())
}

fn merge_defaults(
    field: &str,
    kind: &str,
    name: &str,
    known: &[&str],
    params: &mut Params,
) -> Result<(), CliError> {
    let defaults = builtin_defaults(kind, name).ok_or_else(|| {
        CliError::Config(format!(
            "{field}: unknown {kind} '{name}'; known: [{}]",
            known.join(", ")
        ))
    })?;
    for key in params.keys() {
        if !defaults.contains_key(key) {
            let names: Vec<&str> = defaults.keys().map(String::as_str).collect();
            return Err(CliError::Config(format!(
                "{field}_params: unknown parameter '{key}' for '{name}'; known: [{}]",
                names.join(", ")
            )));
        }
    }
    for (k, v) in defaults {
        params.entry(k).or_insert(v);
    }
    Ok(())
}

fn check_levels(field: &str, levels: &[f64]) -> Result<(), CliError> {
    if levels.is_empty() {
        return Err(CliError::Config(format!("{field}: must be nonempty")));
    }
    if levels.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(CliError::Config(format!(
            "{field}: entries must be positive and finite"
        )));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Config(format!(
            "{field}: must be strictly increasing"
        )));
    }
    Ok(())
}

fn validate(c: &RunConfig) -> Result<(), CliError> {
    let p = &c.problem;
    let bad = |field: &str, msg: String| Err(CliError::Config(format!("{field}: {msg}")));
    if !(p.dimension == 1 || p.dimension == 2) {
        return bad(
            "problem.dimension",
            format!("must be 1 or 2 (got {})", p.dimension),
        );
    }
    if p.cells == 0 || p.y_cells == 0 {
        return bad("problem.cells", "cell counts must be at least 1".into());
    }
    if !(p.bounds[0] < p.bounds[1]) {
        return bad("problem.bounds", format!("need a < b (got {:?})", p.bounds));
    }
    if !(p.lengths[0] > 0.0 && p.lengths[1] > 0.0) {
        return bad(
            "problem.lengths",
            format!("side lengths must be positive (got {:?})", p.lengths),
        );
    }
    if !(p.b_scale >= 0.0 && p.b_scale.is_finite()) {
        return bad(
            "problem.b_scale",
            format!("must be nonnegative (got {})", p.b_scale),
        );
    }
    match &p.m_schedule {
        MLevels::Named(s) if s == "doubling" => {}
        MLevels::Named(s) => {
            return bad(
                "problem.m_schedule",
                format!("expected \"doubling\" or a list (got \"{s}\")"),
            )
        }
        MLevels::List(v) => check_levels("problem.m_schedule", v)?,
    }
    match &p.n_schedule {
        NLevels::Named(s) if s == "auto" => {}
        NLevels::Named(s) => {
            return bad(
                "problem.n_schedule",
                format!("expected \"auto\" or a list (got \"{s}\")"),
            )
        }
        NLevels::List(v) => check_levels("problem.n_schedule", v)?,
    }
    if !(p.solver_tol > 0.0) {
        return bad(
            "problem.solver_tol",
            format!("must be positive (got {})", p.solver_tol),
        );
    }
    if p.max_iter == 0 {
        return bad("problem.max_iter", "must be at least 1".into());
    }
    // the built-in constructors check parameter ranges
    let problem = build_problem(p).map_err(|e| match e {
        CliError::Core(inner) => CliError::Config(format!("problem: {inner}")),
        other => other,
    });
    if c.subcommand != Subcommand::Counterexample {
        problem?;
    }
    if c.audit.certify_samples == 0 {
        return bad("audit.certify_samples", "must be at least 1".into());
    }
    let ce = &c.counterexample;
    check_exponent(ce.dimension, ce.rho)
        .map_err(|e| CliError::Config(format!("counterexample: {e}")))?;
    if ce.n_max as f64 > MAX_LEVEL {
        return bad(
            "counterexample.n_max",
            format!("must not exceed {MAX_LEVEL} (got {})", ce.n_max),
        );
    }
    let s = &c.sweep;
    for (field, names, known) in [
        ("sweep.integrands", &s.integrands, INTEGRAND_NAMES),
        ("sweep.coefficients", &s.coefficients, COEFFICIENT_NAMES),
        ("sweep.data", &s.data, DATUM_NAMES),
    ] {
        if names.is_empty() {
            return bad(field, "must be nonempty".into());
        }
        for n in names {
            if !known.contains(&n.as_str()) {
                return bad(
                    field,
                    format!("unknown id '{n}'; known: [{}]", known.join(", ")),
                );
            }
        }
    }
    if s.b_scales.is_empty() || s.b_scales.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return bad(
            "sweep.b_scales",
            "must be a nonempty list of nonnegative numbers".into(),
        );
    }
    if c.output.directory.is_empty() {
        return bad("output.directory", "must not be empty".into());
    }
    Ok(())
}

pub fn build_grid(p: &ProblemConfig) -> Result<Arc<Grid>, CliError> {
    Ok(if p.dimension == 1 {
        build_interval_grid(p.bounds[0], p.bounds[1], p.cells)?
    } else {
        build_rect_grid(p.cells, p.y_cells, p.lengths[0], p.lengths[1])?
    })
}

/// Problem on a fresh grid, built from a validated configuration.
pub fn build_problem(p: &ProblemConfig) -> Result<ProblemSpec, CliError> {
    let grid = build_grid(p)?;
    let integrand = Integrand::builtin(&p.integrand, &p.integrand_params)?;
    let b = CoefficientField::builtin(&p.b, &p.b_params)?.scaled(p.b_scale)?;
    let f = Datum::builtin(&p.f, &p.f_params, &grid)?;
    let mut spec =
        ProblemSpec::new(&grid, integrand, b, f)?.with_tolerance(p.solver_tol, p.max_iter)?;
    if let MLevels::List(v) = &p.m_schedule {
        spec = spec.with_m_schedule(MSchedule::Explicit(v.clone()))?;
    }
    if let NLevels::List(v) = &p.n_schedule {
        spec = spec.with_n_schedule(v.clone())?;
    }
    Ok(spec)
}

/// Problem configuration of one sweep point: the base problem with the
/// built-ins replaced. Parameters stay those of the base problem when the
/// name is unchanged and fall back to the built-in defaults otherwise.
pub fn sweep_point(
    base: &ProblemConfig,
    integrand: &str,
    b: &str,
    f: &str,
    b_scale: f64,
) -> ProblemConfig {
    let pick = |kind: &str, name: &str, current: &str, params: &Params| -> Params {
        if name == current {
            params.clone()
        } else {
            builtin_defaults(kind, name).unwrap_or_default()
        }
    };
    ProblemConfig {
        integrand: integrand.into(),
        integrand_params: pick(
            "integrand",
            integrand,
            &base.integrand,
            &base.integrand_params,
        ),
        b: b.into(),
        b_params: pick("coefficient", b, &base.b, &base.b_params),
        b_scale,
        f: f.into(),
        f_params: pick("datum", f, &base.f, &base.f_params),
        ..base.clone()
    }
}
