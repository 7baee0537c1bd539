//! Descent on the discrete `J_M`, the inner `M`-schedule and the outer
//! data-truncation loop.
//!
//! Each inner step solves with a positive semidefinite surrogate of the
//! Hessian (per-quadrature-point eigenvalue clamping, banded Cholesky) and
//! falls back to the negative gradient when that fails. Every accepted step
//! satisfies the Armijo condition, so stage energies never increase.

mod banded;
mod checks;

use std::sync::Arc;

use nalgebra::{Matrix2, Matrix3};
use serde::Serialize;

use crate::functional::{energy_with_scale, make_jn_datum, residual, weight, Datum, ProblemSpec};
use crate::grid::{DiscreteField, Grid, Norm};
use crate::{Error, Result};

use banded::BandedSym;
pub use checks::{
    minimality_check, refinement_study, Comparison, MinimalityReport, RefinementReport,
    MINIMALITY_COMPARISONS,
};

/// Line-search and schedule knobs; tolerances live in [`ProblemSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub armijo_c: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Consecutive `M`-stages count as coinciding within `fixpoint_factor · solver_tol`.
    pub fixpoint_factor: f64,
    /// Plain gradient descent when false.
    pub newton: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            armijo_c: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
            fixpoint_factor: 10.0,
            newton: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Converged,
    IterationCap,
    LineSearchFailed,
    /// Truncation active and no energy or residual progress over
    /// [`STALL_WINDOW`] steps: the minimizer of `J_M` can sit on the set
    /// `|v| = M`, where `J_M` is not differentiable.
    Stalled,
}

/// Steps per progress window of a stage with active truncation.
pub const STALL_WINDOW: usize = 50;
/// Energy decrease per window, relative to the energy scale, that counts as progress.
const STALL_ENERGY_REL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Newton,
    Gradient,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: f64,
    pub energy_before: f64,
    pub energy_after: f64,
    /// Directional derivative `∇J_M · d` of the search direction (negative).
    pub slope: f64,
    pub direction: Direction,
    /// False when the step was taken under the rounding rule: the predicted
    /// decrease is below the floating-point resolution of the energy sum and
    /// the residual went down.
    pub armijo: bool,
}

/// One inner minimization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InnerTrace {
    pub m_level: f64,
    /// Energy at the start and after every accepted step.
    pub energies: Vec<f64>,
    pub steps: Vec<StepRecord>,
    pub iterations: usize,
    pub residual_inf: f64,
    pub status: StageStatus,
}

impl InnerTrace {
    pub fn final_energy(&self) -> f64 {
        *self
            .energies
            .last()
            .expect("energies start with the initial value")
    }
}

/// Output of one `(n, M)` stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub n_level: f64,
    pub m_level: f64,
    pub field: DiscreteField,
    pub trace: InnerTrace,
}

/// All `M`-stages run for one datum.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterStage {
    pub n_level: f64,
    /// Known sup bound of the datum the stage was solved with.
    pub datum_bound: f64,
    pub stages: Vec<StageRecord>,
    /// First `M`-stage at which truncation is inactive and all later stages
    /// coincide with it.
    pub m_fixpoint_index: Option<usize>,
    pub field: DiscreteField,
}

impl OuterStage {
    /// A fixpoint exists and every stage before it either converged or
    /// stalled with its truncation active.
    pub fn converged(&self) -> bool {
        let Some(fix) = self.m_fixpoint_index else {
            return false;
        };
        self.stages[..fix].iter().all(|s| match s.trace.status {
            StageStatus::Converged => true,
            StageStatus::Stalled => s.field.norm(Norm::Linf) >= s.m_level,
            _ => false,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    pub outer: Vec<OuterStage>,
    /// `‖u_{n_{k+1}} − u_{n_k}‖_{L²}` for consecutive outer stages.
    pub stabilization_history: Vec<f64>,
}

impl SolveTrace {
    pub fn converged(&self) -> bool {
        self.outer.iter().all(OuterStage::converged)
    }

    pub fn stages(&self) -> impl Iterator<Item = &StageRecord> {
        self.outer.iter().flat_map(|o| o.stages.iter())
    }
}

const ROUNDING: f64 = 64.0 * f64::EPSILON;

/// Minimizes `J_M` from `start` with default options.
pub fn minimize_inner(
    spec: &ProblemSpec,
    m: f64,
    start: &DiscreteField,
) -> Result<(DiscreteField, InnerTrace)> {
    SolverOptions::default().minimize_inner(spec, m, start)
}

/// Runs the `M`-schedule for `datum` from a zero start with default options.
pub fn solve_m_schedule(spec: &ProblemSpec, datum: &Datum) -> Result<(DiscreteField, OuterStage)> {
    let start = DiscreteField::zeros(&spec.grid);
    SolverOptions::default().solve_m_schedule(spec, datum, &start)
}

/// Runs the full `(n, M)` scheme with default options.
pub fn solve_outer(spec: &ProblemSpec) -> Result<(DiscreteField, SolveTrace)> {
    SolverOptions::default().solve_outer(spec)
}

impl SolverOptions {
    pub fn minimize_inner(
        &self,
        spec: &ProblemSpec,
        m: f64,
        start: &DiscreteField,
    ) -> Result<(DiscreteField, InnerTrace)> {
        if !(m > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "denominator truncation level must be positive (got {m})"
            )));
        }
        if !Arc::ptr_eq(&spec.grid, start.grid()) {
            return Err(Error::GridMismatch);
        }
        if !start.is_zero_trace() {
            return Err(Error::InvalidArgument(
                "start field must vanish on the boundary".into(),
            ));
        }
        let mut v = start.clone();
        let (mut energy, mut scale) = energy_with_scale(spec, &v, m);
        let mut r = residual(spec, &v, m)?;
        let mut rinf = inf_norm(&r);
        let mut trace = InnerTrace {
            m_level: m,
            energies: vec![energy],
            steps: Vec::new(),
            iterations: 0,
            residual_inf: rinf,
            status: StageStatus::Converged,
        };
        let mut t_newton: f64 = 1.0;
        let mut t_grad: f64 = 1.0;
        let (mut window_energy, mut window_residual) = (energy, rinf);
        while rinf > spec.solver_tol {
            if trace.iterations >= spec.max_iter {
                trace.status = StageStatus::IterationCap;
                break;
            }
            if trace.iterations > 0 && trace.iterations.is_multiple_of(STALL_WINDOW) {
                let active = v.norm(Norm::Linf) >= m;
                let progress = window_energy - energy > STALL_ENERGY_REL * scale
                    || rinf < 0.99 * window_residual;
                if active && !progress {
                    trace.status = StageStatus::Stalled;
                    break;
                }
                (window_energy, window_residual) = (energy, rinf);
            }
            let newton = if self.newton {
                newton_direction(spec, &v, m, &r)
            } else {
                None
            };
            let mut accepted = None;
            if let Some(d) = newton {
                let t0 = (2.0 * t_newton).min(1.0);
                accepted =
                    self.line_search(spec, &v, m, &d, t0, energy, scale, &r, Direction::Newton);
            }
            if accepted.is_none() {
                let d: Vec<f64> = r.iter().map(|x| -x).collect();
                let t0 = 2.0 * t_grad;
                accepted =
                    self.line_search(spec, &v, m, &d, t0, energy, scale, &r, Direction::Gradient);
            }
            let Some(step) = accepted else {
                trace.status = StageStatus::LineSearchFailed;
                break;
            };
            match step.record.direction {
                Direction::Newton => t_newton = step.record.step,
                Direction::Gradient => t_grad = step.record.step,
            }
            v = step.field;
            energy = step.record.energy_after;
            r = step.residual;
            rinf = inf_norm(&r);
            trace.energies.push(energy);
            trace.steps.push(step.record);
            trace.iterations += 1;
            scale = step.scale;
        }
        trace.residual_inf = rinf;
        Ok((v, trace))
    }

    #[allow(clippy::too_many_arguments)]
    fn line_search(
        &self,
        spec: &ProblemSpec,
        v: &DiscreteField,
        m: f64,
        d: &[f64],
        t0: f64,
        energy: f64,
        scale: f64,
        r: &[f64],
        direction: Direction,
    ) -> Option<Accepted> {
        let slope: f64 = r.iter().zip(d).map(|(a, b)| a * b).sum();
        let rinf = inf_norm(r);
        if !(slope < 0.0) {
            return None;
        }
        let mut t = t0;
        for _ in 0..self.max_backtracks {
            let values: Vec<f64> = v.values().iter().zip(d).map(|(a, b)| a + t * b).collect();
            let Ok(trial) = DiscreteField::from_values(&spec.grid, values) else {
                t *= self.backtrack;
                continue;
            };
            let (e_new, s_new) = energy_with_scale(spec, &trial, m);
            let armijo = e_new <= energy + self.armijo_c * t * slope;
            let rounding = !armijo
                && self.armijo_c * t * slope.abs() <= ROUNDING * scale
                && e_new <= energy + ROUNDING * scale;
            if armijo || rounding {
                let r_new = residual(spec, &trial, m).ok()?;
                if armijo || inf_norm(&r_new) < rinf {
                    return Some(Accepted {
                        field: trial,
                        scale: s_new,
                        residual: r_new,
                        record: StepRecord {
                            step: t,
                            energy_before: energy,
                            energy_after: e_new,
                            slope,
                            direction,
                            armijo,
                        },
                    });
                }
            }
            t *= self.backtrack;
        }
        None
    }

    /// Runs `minimize_inner` for every level of the `M`-schedule with warm
    /// starts and returns the fixpoint field (or the last field when no
    /// fixpoint was detected).
    pub fn solve_m_schedule(
        &self,
        spec: &ProblemSpec,
        datum: &Datum,
        start: &DiscreteField,
    ) -> Result<(DiscreteField, OuterStage)> {
        let bound = datum.linf_bound().ok_or_else(|| {
            Error::InvalidArgument(format!(
                "the M-schedule needs a datum with a known sup bound ('{}' has none)",
                datum.label
            ))
        })?;
        self.run_m_schedule(spec, datum, start, bound, bound)
    }

    fn run_m_schedule(
        &self,
        spec: &ProblemSpec,
        datum: &Datum,
        start: &DiscreteField,
        n_level: f64,
        bound: f64,
    ) -> Result<(DiscreteField, OuterStage)> {
        let sub = spec.with_datum(datum.clone())?;
        let levels = spec.m_schedule.levels(bound);
        let mut stages: Vec<StageRecord> = Vec::with_capacity(levels.len());
        let mut current = start.clone();
        for &m in &levels {
            let (field, trace) = self.minimize_inner(&sub, m, &current)?;
            current = field.clone();
            stages.push(StageRecord {
                n_level,
                m_level: m,
                field,
                trace,
            });
        }
        let threshold = self.fixpoint_factor * spec.solver_tol;
        let fixpoint = (0..stages.len()).find(|&i| {
            let w = &stages[i].field;
            w.norm(Norm::Linf) <= stages[i].m_level
                && stages[i..]
                    .iter()
                    .all(|s| s.trace.status == StageStatus::Converged)
                && stages[i + 1..]
                    .iter()
                    .all(|s| linf_distance(&s.field, w) <= threshold)
        });
        let field = match fixpoint {
            Some(i) => stages[i].field.clone(),
            None => current,
        };
        Ok((
            field.clone(),
            OuterStage {
                n_level,
                datum_bound: bound,
                stages,
                m_fixpoint_index: fixpoint,
                field,
            },
        ))
    }

    /// For each `n` of the schedule: truncate the datum, run the `M`-schedule
    /// warm-started from the previous outer stage.
    pub fn solve_outer(&self, spec: &ProblemSpec) -> Result<(DiscreteField, SolveTrace)> {
        let mut current = DiscreteField::zeros(&spec.grid);
        let mut outer: Vec<OuterStage> = Vec::with_capacity(spec.n_schedule.len());
        let mut history = Vec::new();
        for &n in &spec.n_schedule {
            let f_n = make_jn_datum(&spec.f, n)?;
            let bound = f_n.linf_bound().unwrap_or(n);
            let (field, stage) = self.run_m_schedule(spec, &f_n, &current, n, bound)?;
            if let Some(prev) = outer.last() {
                history.push(field.difference(&prev.field)?.norm(Norm::L2));
            }
            current = field;
            outer.push(stage);
        }
        Ok((
            current,
            SolveTrace {
                outer,
                stabilization_history: history,
            },
        ))
    }
}

struct Accepted {
    field: DiscreteField,
    scale: f64,
    residual: Vec<f64>,
    record: StepRecord,
}

fn inf_norm(r: &[f64]) -> f64 {
    r.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub(crate) fn linf_distance(a: &DiscreteField, b: &DiscreteField) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn bandwidth(grid: &Grid) -> usize {
    let mut bw = 0;
    for e in 0..grid.num_elements() {
        let idx: Vec<usize> = grid
            .element_nodes(e)
            .iter()
            .filter_map(|&i| grid.reduced_index(i))
            .collect();
        for &a in &idx {
            for &b in &idx {
                bw = bw.max(a.abs_diff(b));
            }
        }
    }
    bw
}

/// Clamps the eigenvalues of a symmetric matrix at zero, in place.
fn project_psd(local: &mut [f64], k: usize) {
    match k {
        2 => {
            let eig = Matrix2::from_row_slice(local).symmetric_eigen();
            let mut vals = eig.eigenvalues;
            vals.iter_mut().for_each(|x| *x = x.max(0.0));
            let p = eig.eigenvectors * Matrix2::from_diagonal(&vals) * eig.eigenvectors.transpose();
            for r in 0..2 {
                for c in 0..2 {
                    local[r * 2 + c] = p[(r, c)];
                }
            }
        }
        3 => {
            let eig = Matrix3::from_row_slice(local).symmetric_eigen();
            let mut vals = eig.eigenvalues;
            vals.iter_mut().for_each(|x| *x = x.max(0.0));
            let p = eig.eigenvectors * Matrix3::from_diagonal(&vals) * eig.eigenvectors.transpose();
            for r in 0..3 {
                for c in 0..3 {
                    local[r * 3 + c] = p[(r, c)];
                }
            }
        }
        _ => unreachable!("local matrices are 2x2 or 3x3"),
    }
}

/// Newton-type direction `−H⁺⁻¹ r` on the interior nodes, where `H⁺` is the
/// assembled Hessian of the quadrature sum with every pointwise
/// `(ξ, s)`-Hessian projected onto the positive semidefinite cone.
fn newton_direction(spec: &ProblemSpec, v: &DiscreteField, m: f64, r: &[f64]) -> Option<Vec<f64>> {
    let grid = &spec.grid;
    let nint = grid.interior_nodes().len();
    if nint == 0 {
        return None;
    }
    let d = grid.dim();
    let k = d + 1;
    let nq = grid.quadrature_rule().len();
    let b = spec.b_values();
    let mut mat = BandedSym::new(nint, bandwidth(grid));
    let mut hess = [0.0; 4];
    let mut jg = [0.0; 2];
    let mut local = [0.0; 9];
    let mut phi = [[0.0; 3]; 3];
    for e in 0..grid.num_elements() {
        let g = v.gradient(e);
        let nodes = grid.element_nodes(e);
        let grads = grid.basis_gradients(e);
        for (iq, q) in grid.quad_points_of(e).iter().enumerate() {
            let s = v.value_at_qp(q);
            let w = weight(b[e * nq + iq], s, m);
            let jv = spec.integrand.value(q.coords, &g[..d]);
            spec.integrand.gradient(q.coords, &g[..d], &mut jg[..d]);
            spec.integrand
                .hessian(q.coords, &g[..d], &mut hess[..d * d]);
            for r_ in 0..d {
                for c in 0..d {
                    local[r_ * k + c] = w.d * hess[r_ * d + c];
                }
                local[r_ * k + d] = w.d1 * jg[r_];
                local[d * k + r_] = w.d1 * jg[r_];
            }
            local[d * k + d] = w.d2 * jv + 1.0;
            project_psd(&mut local[..k * k], k);
            for (a, row) in phi.iter_mut().enumerate().take(nodes.len()) {
                row[..d].copy_from_slice(&grads[a][..d]);
                row[d] = q.bary[a];
            }
            for (a, &na) in nodes.iter().enumerate() {
                let Some(ra) = grid.reduced_index(na) else {
                    continue;
                };
                for (bb, &nb) in nodes.iter().enumerate() {
                    let Some(rb) = grid.reduced_index(nb) else {
                        continue;
                    };
                    if rb > ra {
                        continue;
                    }
                    let mut val = 0.0;
                    for p in 0..k {
                        for c in 0..k {
                            val += phi[a][p] * local[p * k + c] * phi[bb][c];
                        }
                    }
                    mat.add(ra, rb, q.weight * val);
                }
            }
        }
    }
    let rhs: Vec<f64> = grid.interior_nodes().iter().map(|&i| -r[i]).collect();
    let top = mat.max_diagonal().max(f64::MIN_POSITIVE);
    let mut factor = mat.cholesky();
    let mut shift = 1e-12 * top;
    for _ in 0..6 {
        if factor.is_some() {
            break;
        }
        let mut shifted = mat.clone();
        shifted.shift_diagonal(shift);
        factor = shifted.cholesky();
        shift *= 100.0;
    }
    let sol = factor?.solve_factored(&rhs);
    if sol.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let mut dir = vec![0.0; grid.num_nodes()];
    for (&i, x) in grid.interior_nodes().iter().zip(sol) {
        dir[i] = x;
    }
    debug_assert_eq!(mat.len(), nint);
    Some(dir)
}
