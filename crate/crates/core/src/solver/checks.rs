//! Random-comparison minimality check and grid refinement study.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::SolverOptions;
use crate::functional::{eval_j, ProblemSpec};
use crate::grid::{DiscreteField, Layout, Norm, Point};
use crate::{Error, Result};

pub const MINIMALITY_COMPARISONS: usize = 50;
const MINIMALITY_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub kind: String,
    pub j_v: f64,
    /// `J(v) − J(u)`.
    pub slack: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimalityReport {
    pub seed: u64,
    pub j_u: f64,
    pub comparisons: Vec<Comparison>,
    pub failures: usize,
}

impl MinimalityReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Compares `J(u)` (with the untruncated datum of `spec`) against
/// [`MINIMALITY_COMPARISONS`] admissible fields: scalings `c·u` with
/// `c ∈ [0, 2)`, nodal truncates `T_k(u)`, small and moderate perturbations
/// of `u`, random smooth fields and localized bumps added to `u`.
pub fn minimality_check(
    spec: &ProblemSpec,
    u: &DiscreteField,
    seed: u64,
) -> Result<MinimalityReport> {
    let j_u = eval_j(spec, u)?;
    let grid = &spec.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = u.norm(Norm::Linf).max(1.0);
    let (lo, hi) = bounding_box(grid.layout());
    let mut fields: Vec<(String, DiscreteField)> = Vec::with_capacity(MINIMALITY_COMPARISONS);

    for c in [
        0.0, 0.25, 0.5, 0.75, 0.9, 0.99, 1.01, 1.1, 1.25, 1.5, 1.75, 1.99,
    ] {
        fields.push((format!("scale({c})"), u.scaled(c)));
    }
    let linf = u.norm(Norm::Linf);
    for frac in [0.1, 0.25, 0.5, 0.75, 0.9, 0.99] {
        fields.push((format!("truncate({frac}*linf)"), u.truncate(frac * linf)?));
    }
    for eps in [1e-3, 1e-2, 1e-1] {
        for _ in 0..4 {
            let phi = smooth_field(grid, &mut rng, lo, hi)?;
            fields.push((format!("perturb({eps})"), u.axpy(eps * amp, &phi)?));
        }
    }
    for _ in 0..10 {
        let a = rng.gen_range(0.0..2.0) * amp;
        let phi = smooth_field(grid, &mut rng, lo, hi)?;
        fields.push(("smooth".to_string(), phi.scaled(a)));
    }
    for _ in 0..10 {
        let center: Point = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..=hi[1])];
        let width = rng.gen_range(0.05..0.2) * (hi[0] - lo[0]);
        let height = rng.gen_range(-2.0..2.0) * amp;
        let dim = grid.dim();
        let bump = DiscreteField::interpolate(grid, |p| {
            let mut r2 = ((p[0] - center[0]) / width).powi(2);
            if dim == 2 {
                r2 += ((p[1] - center[1]) / width).powi(2);
            }
            height * (1.0 - r2).max(0.0).powi(2)
        })?;
        fields.push(("bump".to_string(), u.axpy(1.0, &bump)?));
    }
    debug_assert_eq!(fields.len(), MINIMALITY_COMPARISONS);

    let mut comparisons = Vec::with_capacity(fields.len());
    for (kind, v) in fields {
        let j_v = eval_j(spec, &v)?;
        let slack = j_v - j_u;
        let tolerance = MINIMALITY_REL_TOL * (1.0 + j_v.abs());
        comparisons.push(Comparison {
            kind,
            j_v,
            slack,
            tolerance,
            pass: slack >= -tolerance,
        });
    }
    let failures = comparisons.iter().filter(|c| !c.pass).count();
    Ok(MinimalityReport {
        seed,
        j_u,
        comparisons,
        failures,
    })
}

fn bounding_box(layout: Layout) -> (Point, Point) {
    match layout {
        Layout::Interval { a, b, .. } => ([a, 0.0], [b, 0.0]),
        Layout::Rect { lx, ly, .. } => ([0.0, 0.0], [lx, ly]),
    }
}

/// Random combination of low sine modes vanishing on the boundary, scaled
/// to unit sup norm at the nodes.
fn smooth_field(
    grid: &std::sync::Arc<crate::grid::Grid>,
    rng: &mut ChaCha8Rng,
    lo: Point,
    hi: Point,
) -> Result<DiscreteField> {
    let dim = grid.dim();
    let coef: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let field = DiscreteField::interpolate(grid, |p| {
        let sx = |m: usize| (m as f64 * PI * (p[0] - lo[0]) / (hi[0] - lo[0])).sin();
        if dim == 1 {
            (0..4).map(|m| coef[m] * sx(m + 1)).sum()
        } else {
            let sy = |m: usize| (m as f64 * PI * (p[1] - lo[1]) / (hi[1] - lo[1])).sin();
            (0..9)
                .map(|k| coef[k] * sx(k / 3 + 1) * sy(k % 3 + 1))
                .sum()
        }
    })?;
    let top = field.norm(Norm::Linf);
    Ok(if top > 0.0 {
        field.scaled(1.0 / top)
    } else {
        field
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementReport {
    pub cells: Vec<usize>,
    pub h: Vec<f64>,
    /// `‖u_fine − I(u_coarse)‖_{L²}` on the finer grid of each consecutive pair.
    pub successive_distances: Vec<f64>,
    pub successive_orders: Vec<f64>,
    /// `‖u_h − u‖_{L²}` by quadrature when a reference solution is supplied.
    pub exact_errors: Option<Vec<f64>>,
    pub exact_orders: Option<Vec<f64>>,
    pub converged: bool,
}

/// Solves the problem produced by `build(cells)` for every entry of
/// `cell_counts` and compares the solutions across grids.
pub fn refinement_study<F>(
    build: F,
    cell_counts: &[usize],
    exact: Option<&dyn Fn(Point) -> f64>,
    options: &SolverOptions,
) -> Result<RefinementReport>
where
    F: Fn(usize) -> Result<ProblemSpec>,
{
    if cell_counts.len() < 2 {
        return Err(Error::InvalidArgument(
            "a refinement study needs at least two grids".into(),
        ));
    }
    let mut solutions = Vec::with_capacity(cell_counts.len());
    let mut h = Vec::with_capacity(cell_counts.len());
    let mut converged = true;
    for &cells in cell_counts {
        let spec = build(cells)?;
        let width = match spec.grid.layout() {
            Layout::Interval { a, b, cells } => (b - a) / cells as f64,
            Layout::Rect { x_cells, lx, .. } => lx / x_cells as f64,
        };
        let (u, trace) = options.solve_outer(&spec)?;
        converged &= trace.converged();
        h.push(width);
        solutions.push(u);
    }
    let mut distances = Vec::new();
    for pair in solutions.windows(2) {
        let (coarse, fine) = (&pair[0], &pair[1]);
        let lifted =
            DiscreteField::interpolate(fine.grid(), |p| coarse.value_at(p).unwrap_or(0.0))?;
        distances.push(fine.difference(&lifted)?.norm(Norm::L2));
    }
    let orders = |d: &[f64]| -> Vec<f64> {
        d.windows(2)
            .zip(h.windows(2).skip(if d.len() < h.len() { 1 } else { 0 }))
            .map(|(e, hh)| (e[0] / e[1]).ln() / (hh[0] / hh[1]).ln())
            .collect()
    };
    let successive_orders = orders(&distances);
    let (exact_errors, exact_orders) = match exact {
        Some(ex) => {
            let errs: Vec<f64> = solutions
                .iter()
                .map(|u| {
                    u.grid()
                        .quad_points()
                        .iter()
                        .map(|q| q.weight * (u.value_at_qp(q) - ex(q.coords)).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            let ord = orders(&errs);
            (Some(errs), Some(ord))
        }
        None => (None, None),
    };
    Ok(RefinementReport {
        cells: cell_counts.to_vec(),
        h,
        successive_distances: distances,
        successive_orders,
        exact_errors,
        exact_orders,
        converged,
    })
}
