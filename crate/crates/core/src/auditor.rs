//! Both sides of the a priori estimates, evaluated on computed fields.
//!
//! Every report carries `lhs`, `rhs`, the tolerance used and a verdict with
//! `pass ⇔ lhs ≤ rhs·(1 + rel) + abs`. Right-hand sides use `∫|f|²` of the
//! untruncated datum; `rhs_tight` holds the variant with the datum actually
//! used for the stage.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::functional::{eval_j, make_jn_datum, CoefficientField, Datum, ProblemSpec};
use crate::grid::{DiscreteField, Grid, Layout, Norm, Point};
use crate::solver::SolveTrace;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EstimateId {
    LinfBound,
    Primastima,
    TkBound,
    Secondastima,
    Terzastima,
    GkBound,
    CoercivityChain,
    Testclass,
    WeakGradStab,
    StrongL2Stab,
}

impl EstimateId {
    pub const ALL: [EstimateId; 10] = [
        EstimateId::LinfBound,
        EstimateId::Primastima,
        EstimateId::TkBound,
        EstimateId::Secondastima,
        EstimateId::Terzastima,
        EstimateId::GkBound,
        EstimateId::CoercivityChain,
        EstimateId::Testclass,
        EstimateId::WeakGradStab,
        EstimateId::StrongL2Stab,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimateId::LinfBound => "LINF_BOUND",
            EstimateId::Primastima => "PRIMASTIMA",
            EstimateId::TkBound => "TK_BOUND",
            EstimateId::Secondastima => "SECONDASTIMA",
            EstimateId::Terzastima => "TERZASTIMA",
            EstimateId::GkBound => "GK_BOUND",
            EstimateId::CoercivityChain => "COERCIVITY_CHAIN",
            EstimateId::Testclass => "TESTCLASS",
            EstimateId::WeakGradStab => "WEAK_GRAD_STAB",
            EstimateId::StrongL2Stab => "STRONG_L2_STAB",
        }
    }
}

impl fmt::Display for EstimateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Failed, but only warning-grade (the sup bound).
    Warn,
    /// Hypotheses not met; nothing was checked.
    Inapplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Tolerance {
    pub const ESTIMATE: Tolerance = Tolerance {
        rel: 1e-6,
        abs: 1e-12,
    };
    pub const LINF: Tolerance = Tolerance {
        rel: 1e-6,
        abs: 0.0,
    };

    pub fn admits(&self, lhs: f64, rhs: f64) -> bool {
        lhs <= rhs * (1.0 + self.rel) + self.abs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub estimate_id: EstimateId,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub params: BTreeMap<String, f64>,
    pub verdict: Verdict,
    pub tolerance: Tolerance,
    /// Right side with `∫|f_n|²` in place of `∫|f|²`.
    pub rhs_tight: Option<f64>,
    pub note: Option<String>,
}

impl EstimateReport {
    fn new(id: EstimateId, lhs: f64, rhs: f64, tolerance: Tolerance) -> Self {
        let verdict = if tolerance.admits(lhs, rhs) {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        Self {
            estimate_id: id,
            lhs,
            rhs,
            slack: rhs - lhs,
            params: BTreeMap::new(),
            verdict,
            tolerance,
            rhs_tight: None,
            note: None,
        }
    }

    fn inapplicable(id: EstimateId, note: impl Into<String>) -> Self {
        Self {
            estimate_id: id,
            lhs: 0.0,
            rhs: 0.0,
            slack: 0.0,
            params: BTreeMap::new(),
            verdict: Verdict::Inapplicable,
            tolerance: Tolerance::ESTIMATE,
            rhs_tight: None,
            note: Some(note.into()),
        }
    }

    fn param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    fn tight(mut self, rhs: f64) -> Self {
        self.rhs_tight = Some(rhs);
        self
    }

    /// Hard failure: counts against the exit status.
    pub fn is_failure(&self) -> bool {
        self.verdict == Verdict::Fail
    }

    /// The stored verdict agrees with `(lhs, rhs, tolerance)`.
    pub fn is_consistent(&self) -> bool {
        let ok = self.tolerance.admits(self.lhs, self.rhs);
        match self.verdict {
            Verdict::Pass => ok,
            Verdict::Fail | Verdict::Warn => !ok,
            Verdict::Inapplicable => true,
        }
    }
}

/// Sup bound `‖u‖∞ ≤ ‖g‖∞`. Failures are warnings.
pub fn audit_linf(u: &DiscreteField, g: &Datum) -> EstimateReport {
    let Some(bound) = g.linf_bound() else {
        return EstimateReport::inapplicable(EstimateId::LinfBound, "datum has no known sup bound");
    };
    let mut rep = EstimateReport::new(
        EstimateId::LinfBound,
        u.norm(Norm::Linf),
        bound,
        Tolerance::LINF,
    );
    if rep.verdict == Verdict::Fail {
        rep.verdict = Verdict::Warn;
        rep.note = Some(format!("sup bound exceeded by {:.3e}", -rep.slack));
    }
    rep
}

/// `α ∫|∇u|²/(1+b|u|)² ≤ ½∫|f|²`.
pub fn audit_primastima(u: &DiscreteField, spec: &ProblemSpec, f_used: &Datum) -> EstimateReport {
    let lhs = spec.integrand.alpha * u.weighted_grad_l2(&spec.b);
    EstimateReport::new(
        EstimateId::Primastima,
        lhs,
        0.5 * spec.f.l2_norm_sq(),
        Tolerance::ESTIMATE,
    )
    .tight(0.5 * f_used.l2_norm_sq())
}

/// `∫|∇T_k u|² ≤ (1+Bk)²/(2α) ∫|f|²`.
pub fn audit_tk(
    u: &DiscreteField,
    spec: &ProblemSpec,
    f_used: &Datum,
    k: f64,
) -> Result<EstimateReport> {
    let lhs = u.truncate(k)?.norm(Norm::H1Semi).powi(2);
    let factor = (1.0 + spec.b.upper_bound * k).powi(2) / (2.0 * spec.integrand.alpha);
    Ok(EstimateReport::new(
        EstimateId::TkBound,
        lhs,
        factor * spec.f.l2_norm_sq(),
        Tolerance::ESTIMATE,
    )
    .tight(factor * f_used.l2_norm_sq())
    .param("k", k))
}

/// `∫|u|² ≤ 4∫|f|²`.
pub fn audit_secondastima(u: &DiscreteField, spec: &ProblemSpec, f_used: &Datum) -> EstimateReport {
    let lhs = u.norm(Norm::L2).powi(2);
    EstimateReport::new(
        EstimateId::Secondastima,
        lhs,
        4.0 * spec.f.l2_norm_sq(),
        Tolerance::ESTIMATE,
    )
    .tight(4.0 * f_used.l2_norm_sq())
}

/// Tolerance on the intermediate Cauchy–Schwarz step of the `W^{1,1}` bound.
pub const HOLDER_STEP_TOL: f64 = 1e-10;

/// `∫|∇u| ≤ √(∫|f|²/2α)·(√|Ω| + 2B√∫|f|²)`, plus the intermediate step
/// `∫|∇u| ≤ (∫|∇u|²/(1+b|u|)²)^½ (∫(1+b|u|)²)^½`, which must hold for
/// every field.
pub fn audit_terzastima(u: &DiscreteField, spec: &ProblemSpec, f_used: &Datum) -> EstimateReport {
    let lhs = u.norm(Norm::W11Semi);
    let bound = |f2: f64| {
        (f2 / (2.0 * spec.integrand.alpha)).sqrt()
            * (spec.grid.measure().sqrt() + 2.0 * spec.b.upper_bound * f2.sqrt())
    };
    let (mid_lhs, mid_rhs) = holder_step(u, &spec.b);
    let mut rep = EstimateReport::new(
        EstimateId::Terzastima,
        lhs,
        bound(spec.f.l2_norm_sq()),
        Tolerance::ESTIMATE,
    )
    .tight(bound(f_used.l2_norm_sq()))
    .param("holder_lhs", mid_lhs)
    .param("holder_rhs", mid_rhs);
    if mid_lhs > mid_rhs * (1.0 + HOLDER_STEP_TOL) + 1e-300 {
        rep.verdict = Verdict::Fail;
        rep.note = Some("intermediate Cauchy-Schwarz step violated".into());
    }
    rep
}

/// Both sides of the intermediate Cauchy–Schwarz step.
pub fn holder_step(u: &DiscreteField, b: &CoefficientField) -> (f64, f64) {
    let grid = u.grid();
    let mut weight_sq = 0.0;
    for q in grid.quad_points() {
        let w = 1.0 + b.eval(q.coords) * u.value_at_qp(q).abs();
        weight_sq += q.weight * w * w;
    }
    (
        u.norm(Norm::W11Semi),
        u.weighted_grad_l2(b).sqrt() * weight_sq.sqrt(),
    )
}

/// `∫|G_k u|² ≤ 4∫_{|u|≥k}|f|²`, the region taken at quadrature points.
pub fn audit_gk(
    u: &DiscreteField,
    spec: &ProblemSpec,
    f_used: &Datum,
    k: f64,
) -> Result<EstimateReport> {
    let lhs = u.tail(k)?.norm(Norm::L2).powi(2);
    let (mut full, mut tight) = (0.0, 0.0);
    for ((q, &f), &fu) in spec
        .grid
        .quad_points()
        .iter()
        .zip(spec.f.values())
        .zip(f_used.values())
    {
        if u.value_at_qp(q).abs() >= k {
            full += q.weight * f * f;
            tight += q.weight * fu * fu;
        }
    }
    Ok(
        EstimateReport::new(EstimateId::GkBound, lhs, 4.0 * full, Tolerance::ESTIMATE)
            .tight(4.0 * tight)
            .param("k", k),
    )
}

/// `∫|∇v| ≤ ½∫|∇v|²/(1+b|v|)² + ½∫(1+b|v|)²` (Young's inequality per
/// quadrature point); holds for every field.
pub fn audit_coercivity_chain(v: &DiscreteField, b: &CoefficientField) -> EstimateReport {
    let grid = v.grid();
    let mut weight_sq = 0.0;
    for q in grid.quad_points() {
        let w = 1.0 + b.eval(q.coords) * v.value_at_qp(q).abs();
        weight_sq += q.weight * w * w;
    }
    let rhs = 0.5 * v.weighted_grad_l2(b) + 0.5 * weight_sq;
    EstimateReport::new(
        EstimateId::CoercivityChain,
        v.norm(Norm::W11Semi),
        rhs,
        Tolerance::ESTIMATE,
    )
}

/// Coercivity chain on `count` random fields with zero trace; returns the
/// report with the smallest relative slack.
pub fn audit_coercivity_random(
    grid: &std::sync::Arc<Grid>,
    b: &CoefficientField,
    count: usize,
    seed: u64,
) -> Result<EstimateReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: Option<(f64, EstimateReport)> = None;
    let mut failures = 0;
    for _ in 0..count {
        let scale = 10f64.powf(rng.gen_range(-2.0..2.0));
        let values: Vec<f64> = (0..grid.num_nodes())
            .map(|i| {
                if grid.is_boundary(i) {
                    0.0
                } else {
                    scale * rng.gen_range(-1.0..1.0)
                }
            })
            .collect();
        let v = DiscreteField::from_values(grid, values)?;
        let rep = audit_coercivity_chain(&v, b);
        if rep.is_failure() {
            failures += 1;
        }
        let rel = rep.slack / rep.rhs.abs().max(f64::MIN_POSITIVE);
        if worst.as_ref().is_none_or(|(r, _)| rel < *r) {
            worst = Some((rel, rep));
        }
    }
    let rep = match worst {
        Some((_, rep)) => rep,
        None => audit_coercivity_chain(&DiscreteField::zeros(grid), b),
    };
    let mut rep = rep
        .param("random_fields", count as f64)
        .param("failures", failures as f64);
    if failures > 0 {
        rep.verdict = Verdict::Fail;
    }
    Ok(rep)
}

/// One candidate of the extended comparison class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestClassEntry {
    pub candidate: String,
    pub k: f64,
    pub j_truncate: f64,
    pub h1_truncate: f64,
    pub h1_log: f64,
    pub l2: f64,
}

/// Relative tolerance for `J(u) ≤ J(T_k w)`.
pub const TESTCLASS_TOL: f64 = 1e-9;

/// `J(u) ≤ J(T_k w)` for `w ∈ {u, 2u, spike}` and a ladder of levels `k`,
/// after checking finite surrogates of the membership conditions. Needs
/// `b ≥ A > 0`.
pub fn audit_testclass(
    u: &DiscreteField,
    spec: &ProblemSpec,
) -> Result<(EstimateReport, Vec<TestClassEntry>)> {
    let a = spec.b.lower_bound;
    if !(a > 0.0) {
        return Ok((
            EstimateReport::inapplicable(
                EstimateId::Testclass,
                "needs a coefficient bounded below by a positive constant",
            ),
            Vec::new(),
        ));
    }
    let j_u = eval_j(spec, u)?;
    let grid = &spec.grid;
    let top = u.norm(Norm::Linf).max(1.0);
    let spike = spike_field(grid, 20.0 * top)?;
    let candidates = [("u", u.clone()), ("2u", u.scaled(2.0)), ("spike", spike)];
    let mut entries = Vec::new();
    let mut best = f64::INFINITY;
    let mut membership_ok = true;
    for (name, w) in &candidates {
        let w_top = w.norm(Norm::Linf).max(f64::MIN_POSITIVE);
        let h1_log = w.map(|s| (a * s.abs()).ln_1p()).norm(Norm::H1Semi);
        let l2 = w.norm(Norm::L2);
        for frac in [0.125, 0.25, 0.5, 1.0, 2.0] {
            let k = frac * w_top;
            let t = w.truncate(k)?;
            let j_t = eval_j(spec, &t)?;
            let h1 = t.norm(Norm::H1Semi);
            membership_ok &= h1.is_finite() && h1_log.is_finite() && l2.is_finite();
            best = best.min(j_t);
            entries.push(TestClassEntry {
                candidate: name.to_string(),
                k,
                j_truncate: j_t,
                h1_truncate: h1,
                h1_log,
                l2,
            });
        }
    }
    let tol = Tolerance {
        rel: 0.0,
        abs: TESTCLASS_TOL * (1.0 + j_u.abs()),
    };
    let mut rep = EstimateReport::new(EstimateId::Testclass, j_u, best, tol)
        .param("A", a)
        .param("comparisons", entries.len() as f64);
    if !membership_ok {
        rep.verdict = Verdict::Fail;
        rep.note = Some("a candidate failed the finite-norm surrogates".into());
    }
    Ok((rep, entries))
}

/// Tent of the given height centred in the domain, two cells wide.
fn spike_field(grid: &std::sync::Arc<Grid>, height: f64) -> Result<DiscreteField> {
    let (center, width) = match grid.layout() {
        Layout::Interval { a, b, cells } => ([0.5 * (a + b), 0.0], 2.0 * (b - a) / cells as f64),
        Layout::Rect {
            x_cells, lx, ly, ..
        } => ([0.5 * lx, 0.5 * ly], 2.0 * lx / x_cells as f64),
    };
    let dim = grid.dim();
    DiscreteField::interpolate(grid, |p| {
        let mut r = (p[0] - center[0]).abs();
        if dim == 2 {
            r = r.max((p[1] - center[1]).abs());
        }
        height * (1.0 - r / width).max(0.0)
    })
}

/// Number of fixed smooth test fields for the weak pairings.
pub const WEAK_PAIRINGS: usize = 10;
/// Differences at or below this level count as settled.
pub const STABILIZATION_FLOOR: f64 = 1e-12;

/// `Φ_m` with `m = 0..WEAK_PAIRINGS`: `cos(mπx̂)` in 1D and
/// `(cos mπx̂, cos mπŷ)` in 2D, `x̂`, `ŷ` rescaled to `[0, 1]`.
pub fn test_vector_field(layout: Layout, m: usize, p: Point) -> [f64; 2] {
    let mf = m as f64 * PI;
    match layout {
        Layout::Interval { a, b, .. } => [(mf * (p[0] - a) / (b - a)).cos(), 0.0],
        Layout::Rect { lx, ly, .. } => [(mf * p[0] / lx).cos(), (mf * p[1] / ly).cos()],
    }
}

/// `∫ Φ_m · ∇u/(1+b|u|)` for every test field.
pub fn weak_pairings(u: &DiscreteField, b: &CoefficientField) -> Vec<f64> {
    let grid = u.grid();
    let layout = grid.layout();
    (0..WEAK_PAIRINGS)
        .map(|m| {
            grid.quad_points()
                .iter()
                .map(|q| {
                    let g = u.gradient(q.element);
                    let phi = test_vector_field(layout, m, q.coords);
                    let w = 1.0 + b.eval(q.coords) * u.value_at_qp(q).abs();
                    q.weight * (phi[0] * g[0] + phi[1] * g[1]) / w
                })
                .sum()
        })
        .collect()
}

/// Largest increment `d_{i+1} − d_i` over the last three differences.
fn worst_increment(d: &[f64]) -> Option<f64> {
    let tail = &d[d.len().saturating_sub(3)..];
    tail.windows(2).map(|w| w[1] - w[0]).reduce(f64::max)
}

/// Cauchy surrogates across outer stages: `(STRONG_L2_STAB, WEAK_GRAD_STAB)`.
/// Each reports `lhs` = largest increment among the last three successive
/// differences against `rhs = 0`; `lhs ≤ 0` means the differences decrease.
pub fn audit_stabilization(
    trace: &SolveTrace,
    spec: &ProblemSpec,
) -> (EstimateReport, EstimateReport) {
    let tol = Tolerance {
        rel: 0.0,
        abs: STABILIZATION_FLOOR,
    };
    let strong = match worst_increment(&trace.stabilization_history) {
        Some(inc) => {
            let last = *trace.stabilization_history.last().unwrap();
            EstimateReport::new(EstimateId::StrongL2Stab, inc, 0.0, tol)
                .param("last_difference", last)
                .param("stages", trace.outer.len() as f64)
        }
        None => {
            EstimateReport::inapplicable(EstimateId::StrongL2Stab, "fewer than three outer stages")
        }
    };
    let pairings: Vec<Vec<f64>> = trace
        .outer
        .iter()
        .map(|o| weak_pairings(&o.field, &spec.b))
        .collect();
    let weak = if pairings.len() < 3 {
        EstimateReport::inapplicable(EstimateId::WeakGradStab, "fewer than three outer stages")
    } else {
        let mut worst = f64::NEG_INFINITY;
        let mut last_max: f64 = 0.0;
        for m in 0..WEAK_PAIRINGS {
            let diffs: Vec<f64> = pairings
                .windows(2)
                .map(|w| (w[1][m] - w[0][m]).abs())
                .collect();
            last_max = last_max.max(*diffs.last().unwrap());
            if let Some(inc) = worst_increment(&diffs) {
                worst = worst.max(inc);
            }
        }
        EstimateReport::new(EstimateId::WeakGradStab, worst, 0.0, tol)
            .param("last_difference", last_max)
            .param("pairings", WEAK_PAIRINGS as f64)
    };
    (strong, weak)
}

/// The `k` levels of the truncation sweeps, as multiples of `‖u‖∞`.
pub const K_FRACTIONS: [f64; 6] = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0];

/// Reports tagged with the outer stage they belong to.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageAudit {
    pub stage_index: usize,
    pub n_level: f64,
    pub reports: Vec<EstimateReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub seed: u64,
    pub stages: Vec<StageAudit>,
    /// Reports on the final field and the whole trace.
    pub global: Vec<EstimateReport>,
    pub testclass: Vec<TestClassEntry>,
}

impl AuditReport {
    pub fn all(&self) -> impl Iterator<Item = &EstimateReport> {
        self.stages
            .iter()
            .flat_map(|s| s.reports.iter())
            .chain(self.global.iter())
    }

    pub fn hard_failures(&self) -> usize {
        self.all().filter(|r| r.is_failure()).count()
    }

    pub fn warnings(&self) -> usize {
        self.all().filter(|r| r.verdict == Verdict::Warn).count()
    }
}

/// Random fields in the coercivity chain property check.
pub const COERCIVITY_RANDOM_FIELDS: usize = 200;

/// Full battery over a solved trace.
pub fn audit_all(spec: &ProblemSpec, trace: &SolveTrace, seed: u64) -> Result<AuditReport> {
    let mut stages = Vec::with_capacity(trace.outer.len());
    for (i, outer) in trace.outer.iter().enumerate() {
        let u = &outer.field;
        let f_used = make_jn_datum(&spec.f, outer.n_level)?;
        let m_fix = outer
            .m_fixpoint_index
            .map_or(f64::NAN, |ix| outer.stages[ix].m_level);
        let tag = |r: EstimateReport| r.param("n", outer.n_level).param("M", m_fix);
        let mut reports = vec![
            tag(audit_linf(u, &f_used)),
            tag(audit_primastima(u, spec, &f_used)),
        ];
        let top = u.norm(Norm::Linf);
        for frac in K_FRACTIONS {
            reports.push(tag(audit_tk(u, spec, &f_used, frac * top)?));
        }
        reports.push(tag(audit_secondastima(u, spec, &f_used)));
        reports.push(tag(audit_terzastima(u, spec, &f_used)));
        for frac in K_FRACTIONS {
            reports.push(tag(audit_gk(u, spec, &f_used, frac * top)?));
        }
        reports.push(tag(audit_coercivity_chain(u, &spec.b)));
        stages.push(StageAudit {
            stage_index: i,
            n_level: outer.n_level,
            reports,
        });
    }
    let mut global = Vec::new();
    global.push(audit_coercivity_random(
        &spec.grid,
        &spec.b,
        COERCIVITY_RANDOM_FIELDS,
        seed,
    )?);
    let final_field = trace
        .outer
        .last()
        .map(|o| o.field.clone())
        .unwrap_or_else(|| DiscreteField::zeros(&spec.grid));
    let (tc, entries) = audit_testclass(&final_field, spec)?;
    global.push(tc);
    let (strong, weak) = audit_stabilization(trace, spec);
    global.push(weak);
    global.push(strong);
    Ok(AuditReport {
        seed,
        stages,
        global,
        testclass: entries,
    })
}
