//! Problem fixtures shared by the benchmarks.

use noncoercive_core::functional::{CoefficientField, Datum, Integrand, Params};
use noncoercive_core::grid::{build_interval_grid, build_rect_grid};
use noncoercive_core::{ProblemSpec, Result};

/// Log-augmented integrand, `b ≡ b_value`, `f ≡ 1` on `(0, 1)`.
pub fn interval_problem(cells: usize, b_value: f64) -> Result<ProblemSpec> {
    let grid = build_interval_grid(0.0, 1.0, cells)?;
    let f = Datum::constant(&grid, 1.0)?;
    ProblemSpec::new(
        &grid,
        Integrand::logaug(0.5)?,
        CoefficientField::constant(b_value),
        f,
    )
}

/// Anisotropic integrand, smooth-bump coefficient, sine datum on the unit square.
pub fn square_problem(cells: usize) -> Result<ProblemSpec> {
    let grid = build_rect_grid(cells, cells, 1.0, 1.0)?;
    let f = Datum::builtin("sine", &Params::new(), &grid)?;
    ProblemSpec::new(
        &grid,
        Integrand::anisotropic(1.0, 2.0, 1.0)?,
        CoefficientField::builtin("smooth-bump", &Params::new())?,
        f,
    )
}

/// Power-singularity datum on `(0, 1)` with the default data levels.
pub fn singular_problem(cells: usize) -> Result<ProblemSpec> {
    let grid = build_interval_grid(0.0, 1.0, cells)?;
    let f = Datum::builtin("power-singularity", &Params::new(), &grid)?;
    ProblemSpec::new(
        &grid,
        Integrand::quadratic(1.0, 0.0)?,
        CoefficientField::constant(1.0),
        f,
    )
}
