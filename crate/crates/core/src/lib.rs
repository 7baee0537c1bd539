//! Discrete minimizers of non-coercive integral functionals of the form
//!
//! ```text
//! J(v) = ∫ j(x, ∇v) / (1 + b(x)|v|)² + ½ ∫ |v|² − ∫ f v
//! ```
//!
//! computed by a two-level truncation scheme (truncation of the denominator
//! at level `M`, truncation of the datum at level `n`) on P1 finite elements,
//! together with an auditor that evaluates both sides of every a priori
//! estimate the scheme relies on, and a radial engine for the
//! coercivity/non-coercivity counterexample in `W^{1,1}_0`.
//!
//! Module map:
//!
//! * [`grid`]: meshes, P1 fields, quadrature, truncation operators and norms.
//! * [`functional`]: integrands, coefficients, data, energies and residuals.
//! * [`solver`]: Armijo-safeguarded Newton descent, `M`/`n` schedules, traces.
//! * [`auditor`]: estimate reports with pass/fail verdicts.
//! * [`counterexample`]: radial quadrature on the unit ball.
// Range checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod auditor;
pub mod counterexample;
mod error;
pub mod functional;
pub mod grid;
pub mod quadrature;
pub mod solver;

pub use error::{Error, Result};
pub use functional::{CoefficientField, Datum, Integrand, MSchedule, ProblemSpec};
pub use grid::{DiscreteField, Grid, Norm, Point};
pub use solver::{SolveTrace, SolverOptions};
