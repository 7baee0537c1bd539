//! Integrands, coefficients and data; the energies `J`, `J_M` and the exact
//! gradient of their quadrature discretization.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{truncate_scalar, DiscreteField, Grid, Point};
use crate::{Error, Result};

pub type ScalarMap = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type DensityMap = Arc<dyn Fn(Point, &[f64]) -> f64 + Send + Sync>;
/// Writes `dim` components into the output slice.
pub type GradientMap = Arc<dyn Fn(Point, &[f64], &mut [f64]) + Send + Sync>;
/// Writes a row-major `dim × dim` matrix into the output slice.
pub type HessianMap = Arc<dyn Fn(Point, &[f64], &mut [f64]) + Send + Sync>;

pub type Params = BTreeMap<String, f64>;

/// Convex density `j(x, ξ)` with its ξ-gradient and growth constants
/// `α|ξ|² ≤ j ≤ β|ξ|²`, `|j_ξ| ≤ γ|ξ|`.
#[derive(Clone)]
pub struct Integrand {
    j: DensityMap,
    j_grad: GradientMap,
    j_hess: Option<HessianMap>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub label: String,
}

impl fmt::Debug for Integrand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Integrand")
            .field("label", &self.label)
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .field("gamma", &self.gamma)
            .finish_non_exhaustive()
    }
}

pub const INTEGRAND_NAMES: &[&str] = &["quadratic", "anisotropic", "logaug"];
pub const COEFFICIENT_NAMES: &[&str] = &["constant", "step", "smooth-bump", "zero"];
pub const DATUM_NAMES: &[&str] = &["constant", "sine", "power-singularity", "step"];

impl Integrand {
    pub fn new(
        label: impl Into<String>,
        alpha: f64,
        beta: f64,
        gamma: f64,
        j: DensityMap,
        j_grad: GradientMap,
    ) -> Self {
        Self {
            j,
            j_grad,
            j_hess: None,
            alpha,
            beta,
            gamma,
            label: label.into(),
        }
    }

    pub fn with_hessian(mut self, j_hess: HessianMap) -> Self {
        self.j_hess = Some(j_hess);
        self
    }

    #[inline]
    pub fn value(&self, x: Point, xi: &[f64]) -> f64 {
        (self.j)(x, xi)
    }

    #[inline]
    pub fn gradient(&self, x: Point, xi: &[f64], out: &mut [f64]) {
        (self.j_grad)(x, xi, out)
    }

    /// ξ-Hessian; central differences of `j_ξ` when no closed form was given.
    pub fn hessian(&self, x: Point, xi: &[f64], out: &mut [f64]) {
        if let Some(h) = &self.j_hess {
            return h(x, xi, out);
        }
        let d = xi.len();
        let mut xp = xi.to_vec();
        let mut gp = vec![0.0; d];
        let mut gm = vec![0.0; d];
        for k in 0..d {
            let step = 1e-6 * (1.0 + xi[k].abs());
            xp[k] = xi[k] + step;
            self.gradient(x, &xp, &mut gp);
            xp[k] = xi[k] - step;
            self.gradient(x, &xp, &mut gm);
            xp[k] = xi[k];
            for r in 0..d {
                out[r * d + k] = (gp[r] - gm[r]) / (2.0 * step);
            }
        }
        for r in 0..d {
            for c in 0..r {
                let m = 0.5 * (out[r * d + c] + out[c * d + r]);
                out[r * d + c] = m;
                out[c * d + r] = m;
            }
        }
    }

    /// `j = a(x)|ξ|²` with `a(x) = a·(1 + oscillation·sin 2πx₁)`.
    pub fn quadratic(a: f64, oscillation: f64) -> Result<Self> {
        if !(a > 0.0) || !(0.0..1.0).contains(&oscillation) {
            return Err(Error::InvalidArgument(format!(
                "quadratic integrand needs a > 0 and 0 <= oscillation < 1 (got a = {a}, oscillation = {oscillation})"
            )));
        }
        let coef = move |x: Point| a * (1.0 + oscillation * (2.0 * PI * x[0]).sin());
        let (lo, hi) = (a * (1.0 - oscillation), a * (1.0 + oscillation));
        Ok(Self::new(
            "quadratic",
            lo,
            hi,
            2.0 * hi,
            Arc::new(move |x, xi| coef(x) * dot(xi, xi)),
            Arc::new(move |x, xi, out| {
                let c = 2.0 * coef(x);
                for (o, &z) in out.iter_mut().zip(xi) {
                    *o = c * z;
                }
            }),
        )
        .with_hessian(Arc::new(move |x, xi, out| {
            let d = xi.len();
            let c = 2.0 * coef(x);
            out.iter_mut().for_each(|o| *o = 0.0);
            for k in 0..d {
                out[k * d + k] = c;
            }
        })))
    }

    /// `j = ξᵀA(x)ξ` with the spectrum of `A(x)` inside
    /// `[lambda_min, lambda_max]`. In 2D `A` has eigenvalues exactly
    /// `lambda_min`, `lambda_max` along axes rotated by `θ = twist·π·(x₁+x₂)`;
    /// in 1D it is the scalar `lambda_min + (lambda_max − lambda_min)(1 + sin 2π·twist·x)/2`.
    pub fn anisotropic(lambda_min: f64, lambda_max: f64, twist: f64) -> Result<Self> {
        if !(lambda_min > 0.0) || !(lambda_max >= lambda_min) || !twist.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "anisotropic integrand needs 0 < lambda_min <= lambda_max (got {lambda_min}, {lambda_max})"
            )));
        }
        let matrix = move |x: Point, d: usize| -> [f64; 4] {
            if d == 1 {
                let s = 0.5 * (1.0 + (2.0 * PI * twist * x[0]).sin());
                [lambda_min + (lambda_max - lambda_min) * s, 0.0, 0.0, 0.0]
            } else {
                let th = twist * PI * (x[0] + x[1]);
                let (s, c) = th.sin_cos();
                let a11 = lambda_min * c * c + lambda_max * s * s;
                let a22 = lambda_min * s * s + lambda_max * c * c;
                let a12 = (lambda_min - lambda_max) * s * c;
                [a11, a12, a12, a22]
            }
        };
        Ok(Self::new(
            "anisotropic",
            lambda_min,
            lambda_max,
            2.0 * lambda_max,
            Arc::new(move |x, xi| {
                let m = matrix(x, xi.len());
                if xi.len() == 1 {
                    m[0] * xi[0] * xi[0]
                } else {
                    m[0] * xi[0] * xi[0] + 2.0 * m[1] * xi[0] * xi[1] + m[3] * xi[1] * xi[1]
                }
            }),
            Arc::new(move |x, xi, out| {
                let m = matrix(x, xi.len());
                if xi.len() == 1 {
                    out[0] = 2.0 * m[0] * xi[0];
                } else {
                    out[0] = 2.0 * (m[0] * xi[0] + m[1] * xi[1]);
                    out[1] = 2.0 * (m[2] * xi[0] + m[3] * xi[1]);
                }
            }),
        )
        .with_hessian(Arc::new(move |x, xi, out| {
            let m = matrix(x, xi.len());
            if xi.len() == 1 {
                out[0] = 2.0 * m[0];
            } else {
                out.copy_from_slice(&[2.0 * m[0], 2.0 * m[1], 2.0 * m[2], 2.0 * m[3]]);
            }
        })))
    }

    /// `j = |ξ|² + weight·log(1 + |ξ|²)`: `α = 1`, `β = 1 + weight`,
    /// `γ = 2 + 2·weight`.
    pub fn logaug(weight: f64) -> Result<Self> {
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "logaug integrand needs weight >= 0 (got {weight})"
            )));
        }
        Ok(Self::new(
            "logaug",
            1.0,
            1.0 + weight,
            2.0 + 2.0 * weight,
            Arc::new(move |_, xi| {
                let t2 = dot(xi, xi);
                t2 + weight * t2.ln_1p()
            }),
            Arc::new(move |_, xi, out| {
                let c = 2.0 + 2.0 * weight / (1.0 + dot(xi, xi));
                for (o, &z) in out.iter_mut().zip(xi) {
                    *o = c * z;
                }
            }),
        )
        .with_hessian(Arc::new(move |_, xi, out| {
            let d = xi.len();
            let q = 1.0 + dot(xi, xi);
            let c = 2.0 + 2.0 * weight / q;
            let r = 4.0 * weight / (q * q);
            for a in 0..d {
                for b in 0..d {
                    out[a * d + b] = if a == b { c } else { 0.0 } - r * xi[a] * xi[b];
                }
            }
        })))
    }

    /// Built-in integrand by name, with parameter overrides.
    pub fn builtin(name: &str, params: &Params) -> Result<Self> {
        match name {
            "quadratic" => {
                let p = ParamReader::new("quadratic", params, &[("a", 1.0), ("oscillation", 0.0)])?;
                Self::quadratic(p.get("a"), p.get("oscillation"))
            }
            "anisotropic" => {
                let p = ParamReader::new(
                    "anisotropic",
                    params,
                    &[("lambda_min", 1.0), ("lambda_max", 2.0), ("twist", 1.0)],
                )?;
                Self::anisotropic(p.get("lambda_min"), p.get("lambda_max"), p.get("twist"))
            }
            "logaug" => {
                let p = ParamReader::new("logaug", params, &[("weight", 0.5)])?;
                Self::logaug(p.get("weight"))
            }
            other => Err(unknown("integrand", other, INTEGRAND_NAMES)),
        }
    }
}

/// The coefficient `b(x)` with certified bounds `A ≤ b ≤ B`.
#[derive(Clone)]
pub struct CoefficientField {
    map: ScalarMap,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub label: String,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("label", &self.label)
            .field("lower_bound", &self.lower_bound)
            .field("upper_bound", &self.upper_bound)
            .finish_non_exhaustive()
    }
}

impl CoefficientField {
    pub fn new(label: impl Into<String>, lower: f64, upper: f64, map: ScalarMap) -> Result<Self> {
        if !(lower >= 0.0) || !(upper >= lower) || !upper.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "coefficient bounds must satisfy 0 <= A <= B < inf (got A = {lower}, B = {upper})"
            )));
        }
        Ok(Self {
            map,
            lower_bound: lower,
            upper_bound: upper,
            label: label.into(),
        })
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(value: f64) -> Self {
        Self::new("constant", value, value, Arc::new(move |_| value))
            .expect("constant coefficient must be nonnegative")
    }

    /// `low` for `x₁ < location`, `high` otherwise.
    pub fn step(low: f64, high: f64, location: f64) -> Result<Self> {
        Self::new(
            "step",
            low.min(high),
            low.max(high),
            Arc::new(move |x| if x[0] < location { low } else { high }),
        )
    }

    /// `base + height·exp(−|x − c|²/width²)`.
    pub fn smooth_bump(base: f64, height: f64, center: Point, width: f64) -> Result<Self> {
        if !(width > 0.0) || !(height >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "smooth-bump needs width > 0 and height >= 0 (got width = {width}, height = {height})"
            )));
        }
        Self::new(
            "smooth-bump",
            base,
            base + height,
            Arc::new(move |x| {
                let r2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
                base + height * (-r2 / (width * width)).exp()
            }),
        )
    }

    /// `scale · b`, bounds scaled accordingly.
    pub fn scaled(&self, scale: f64) -> Result<Self> {
        let map = Arc::clone(&self.map);
        Self::new(
            self.label.clone(),
            scale * self.lower_bound,
            scale * self.upper_bound,
            Arc::new(move |x| scale * map(x)),
        )
    }

    #[inline]
    pub fn eval(&self, x: Point) -> f64 {
        (self.map)(x)
    }

    /// Verifies `A ≤ b ≤ B` at every node and quadrature point of `grid`.
    pub fn check_bounds(&self, grid: &Grid) -> Result<()> {
        let pts = grid
            .nodes()
            .iter()
            .copied()
            .chain(grid.quad_points().iter().map(|q| q.coords));
        for p in pts {
            let v = self.eval(p);
            if !(v >= self.lower_bound && v <= self.upper_bound) {
                return Err(Error::InvalidArgument(format!(
                    "coefficient '{}' takes value {v} at {p:?}, outside [{}, {}]",
                    self.label, self.lower_bound, self.upper_bound
                )));
            }
        }
        Ok(())
    }

    pub fn builtin(name: &str, params: &Params) -> Result<Self> {
        match name {
            "zero" => {
                ParamReader::new("zero", params, &[])?;
                Ok(Self::zero())
            }
            "constant" => {
                let p = ParamReader::new("constant", params, &[("value", 1.0)])?;
                let v = p.get("value");
                Self::new("constant", v, v, Arc::new(move |_| v))
            }
            "step" => {
                let p = ParamReader::new(
                    "step",
                    params,
                    &[("low", 0.0), ("high", 4.0), ("location", 0.5)],
                )?;
                Self::step(p.get("low"), p.get("high"), p.get("location"))
            }
            "smooth-bump" => {
                let p = ParamReader::new(
                    "smooth-bump",
                    params,
                    &[
                        ("base", 0.5),
                        ("height", 9.5),
                        ("center_x", 0.5),
                        ("center_y", 0.5),
                        ("width", 0.15),
                    ],
                )?;
                Self::smooth_bump(
                    p.get("base"),
                    p.get("height"),
                    [p.get("center_x"), p.get("center_y")],
                    p.get("width"),
                )
            }
            other => Err(unknown("coefficient", other, COEFFICIENT_NAMES)),
        }
    }
}

/// The datum `f`, sampled at the quadrature points of one grid.
#[derive(Clone)]
pub struct Datum {
    map: ScalarMap,
    grid: Arc<Grid>,
    values: Vec<f64>,
    l2_norm_sq: f64,
    linf_bound: Option<f64>,
    pub label: String,
}

impl fmt::Debug for Datum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Datum")
            .field("label", &self.label)
            .field("l2_norm_sq", &self.l2_norm_sq)
            .field("linf_bound", &self.linf_bound)
            .finish_non_exhaustive()
    }
}

impl Datum {
    pub fn new(
        grid: &Arc<Grid>,
        label: impl Into<String>,
        map: ScalarMap,
        linf_bound: Option<f64>,
    ) -> Result<Self> {
        let label = label.into();
        let values: Vec<f64> = grid.quad_points().iter().map(|q| map(q.coords)).collect();
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "datum '{label}' is not finite at a quadrature point ({v})"
            )));
        }
        if let Some(bound) = linf_bound {
            if !(bound >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "datum bound must be nonnegative (got {bound})"
                )));
            }
        }
        let l2_norm_sq = grid
            .quad_points()
            .iter()
            .zip(&values)
            .map(|(q, v)| q.weight * v * v)
            .sum();
        Ok(Self {
            map,
            grid: Arc::clone(grid),
            values,
            l2_norm_sq,
            linf_bound,
            label,
        })
    }

    pub fn zero(grid: &Arc<Grid>) -> Self {
        Self::new(grid, "zero", Arc::new(|_| 0.0), Some(0.0)).expect("zero datum")
    }

    pub fn constant(grid: &Arc<Grid>, value: f64) -> Result<Self> {
        Self::new(
            grid,
            "constant",
            Arc::new(move |_| value),
            Some(value.abs()),
        )
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    #[inline]
    pub fn eval(&self, x: Point) -> f64 {
        (self.map)(x)
    }

    /// Values at the grid's quadrature points, in grid order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `∫|f|²` by quadrature.
    pub fn l2_norm_sq(&self) -> f64 {
        self.l2_norm_sq
    }

    pub fn linf_bound(&self) -> Option<f64> {
        self.linf_bound
    }

    /// Largest `|f|` over the quadrature points.
    pub fn sampled_linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn builtin(name: &str, params: &Params, grid: &Arc<Grid>) -> Result<Self> {
        let dim = grid.dim();
        match name {
            "constant" => {
                let p = ParamReader::new("constant", params, &[("value", 1.0)])?;
                Self::constant(grid, p.get("value"))
            }
            "sine" => {
                let p =
                    ParamReader::new("sine", params, &[("amplitude", 1.0), ("frequency", 2.0)])?;
                let (amp, freq) = (p.get("amplitude"), p.get("frequency"));
                Self::new(
                    grid,
                    "sine",
                    Arc::new(move |x| {
                        let s = (freq * PI * x[0]).sin();
                        if dim == 1 {
                            amp * s
                        } else {
                            amp * s * (freq * PI * x[1]).sin()
                        }
                    }),
                    Some(amp.abs()),
                )
            }
            "power-singularity" => {
                let p = ParamReader::new(
                    "power-singularity",
                    params,
                    &[("exponent", 0.4), ("scale", 1.0)],
                )?;
                let (s, c) = (p.get("exponent"), p.get("scale"));
                if !(s > 0.0 && 2.0 * s < dim as f64) {
                    return Err(Error::InvalidArgument(format!(
                        "power-singularity exponent must lie in (0, {}) for f to be square integrable (got {s})",
                        dim as f64 / 2.0
                    )));
                }
                Self::new(
                    grid,
                    "power-singularity",
                    Arc::new(move |x| {
                        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                        c * r.powf(-s)
                    }),
                    None,
                )
            }
            "step" => {
                let p = ParamReader::new(
                    "step",
                    params,
                    &[("value", 1.0), ("low", 0.0), ("location", 0.5)],
                )?;
                let (hi, lo, loc) = (p.get("value"), p.get("low"), p.get("location"));
                Self::new(
                    grid,
                    "step",
                    Arc::new(move |x| if x[0] < loc { lo } else { hi }),
                    Some(hi.abs().max(lo.abs())),
                )
            }
            other => Err(unknown("datum", other, DATUM_NAMES)),
        }
    }
}

/// `f_n = T_n ∘ f`.
pub fn make_jn_datum(f: &Datum, n: f64) -> Result<Datum> {
    if !(n > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "data truncation level must be positive (got {n})"
        )));
    }
    let inner = Arc::clone(&f.map);
    let bound = Some(f.linf_bound.map_or(n, |b| b.min(n)));
    Datum::new(
        &f.grid,
        format!("T_{n}({})", f.label),
        Arc::new(move |x| truncate_scalar(inner(x), n)),
        bound,
    )
}

/// Levels of the denominator truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MSchedule {
    Explicit(Vec<f64>),
    /// `1, 2, 4, …` up to the first power of two `≥ 2n` for data level `n`.
    Doubling,
}

impl MSchedule {
    pub fn levels(&self, n: f64) -> Vec<f64> {
        match self {
            MSchedule::Explicit(v) => v.clone(),
            MSchedule::Doubling => {
                let mut out = vec![1.0];
                while *out.last().unwrap() < 2.0 * n {
                    out.push(2.0 * out.last().unwrap());
                }
                out
            }
        }
    }
}

/// Everything needed to run the truncation scheme on one grid.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub grid: Arc<Grid>,
    pub integrand: Integrand,
    pub b: CoefficientField,
    pub f: Datum,
    pub m_schedule: MSchedule,
    pub n_schedule: Vec<f64>,
    pub solver_tol: f64,
    pub max_iter: usize,
    b_values: Vec<f64>,
}

pub const DEFAULT_SOLVER_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 50_000;
pub const DEFAULT_UNBOUNDED_N_SCHEDULE: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];

/// Default data levels: the five doublings for unbounded data, or a single
/// level at the first power of two `≥ ‖f‖∞` (so that `T_n f = f`).
pub fn default_n_schedule(f: &Datum) -> Vec<f64> {
    match f.linf_bound() {
        None => DEFAULT_UNBOUNDED_N_SCHEDULE.to_vec(),
        Some(c) => {
            let mut n = 1.0;
            while n < c {
                n *= 2.0;
            }
            vec![n]
        }
    }
}

impl ProblemSpec {
    pub fn new(
        grid: &Arc<Grid>,
        integrand: Integrand,
        b: CoefficientField,
        f: Datum,
    ) -> Result<Self> {
        if !Arc::ptr_eq(grid, f.grid()) {
            return Err(Error::GridMismatch);
        }
        b.check_bounds(grid)?;
        let b_values = grid
            .quad_points()
            .iter()
            .map(|q| b.eval(q.coords))
            .collect();
        let n_schedule = default_n_schedule(&f);
        Ok(Self {
            grid: Arc::clone(grid),
            integrand,
            b,
            f,
            m_schedule: MSchedule::Doubling,
            n_schedule,
            solver_tol: DEFAULT_SOLVER_TOL,
            max_iter: DEFAULT_MAX_ITER,
            b_values,
        })
    }

    pub fn with_m_schedule(mut self, schedule: MSchedule) -> Result<Self> {
        if let MSchedule::Explicit(levels) = &schedule {
            check_schedule("m_schedule", levels)?;
        }
        self.m_schedule = schedule;
        Ok(self)
    }

    pub fn with_n_schedule(mut self, levels: Vec<f64>) -> Result<Self> {
        check_schedule("n_schedule", &levels)?;
        self.n_schedule = levels;
        Ok(self)
    }

    pub fn with_tolerance(mut self, solver_tol: f64, max_iter: usize) -> Result<Self> {
        if !(solver_tol > 0.0) || max_iter == 0 {
            return Err(Error::InvalidArgument(format!(
                "solver_tol must be positive and max_iter at least 1 (got {solver_tol}, {max_iter})"
            )));
        }
        self.solver_tol = solver_tol;
        self.max_iter = max_iter;
        Ok(self)
    }

    /// Same problem with a different datum installed.
    pub fn with_datum(&self, f: Datum) -> Result<Self> {
        if !Arc::ptr_eq(&self.grid, f.grid()) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { f, ..self.clone() })
    }

    /// `b` at the quadrature points, in grid order.
    pub fn b_values(&self) -> &[f64] {
        &self.b_values
    }

    fn check_field(&self, v: &DiscreteField) -> Result<()> {
        if Arc::ptr_eq(&self.grid, v.grid()) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

pub(crate) fn check_schedule(name: &str, levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::InvalidArgument(format!("{name} must be nonempty")));
    }
    if levels.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "{name} entries must be positive and finite"
        )));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!(
            "{name} must be strictly increasing (got {levels:?})"
        )));
    }
    Ok(())
}

/// Pieces of the truncated denominator weight at one quadrature point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Weight {
    /// `(1 + b|T_M s|)⁻²`
    pub d: f64,
    /// derivative in `s`
    pub d1: f64,
    /// second derivative in `s` away from the kinks
    pub d2: f64,
}

/// `s ↦ (1 + b·|T_M(s)|)⁻²` with `sign(0) = 0` and derivative 0 for `|s| > M`.
#[inline]
pub(crate) fn weight(b: f64, s: f64, m: f64) -> Weight {
    let t = s.abs().min(m);
    let dt = if s.abs() > m { 0.0 } else { sign(s) };
    let denom = 1.0 + b * t;
    let inv = 1.0 / denom;
    let d = inv * inv;
    Weight {
        d,
        d1: -2.0 * b * d * inv * dt,
        d2: 6.0 * b * b * d * d * dt * dt,
    }
}

#[inline]
fn sign(s: f64) -> f64 {
    if s > 0.0 {
        1.0
    } else if s < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Discrete `J_M(v)` together with `Σ w(|j·D| + ½s² + |f·s|)`, the scale
/// against which rounding in the sum is judged.
pub(crate) fn energy_with_scale(spec: &ProblemSpec, v: &DiscreteField, m: f64) -> (f64, f64) {
    let grid = &spec.grid;
    let d = grid.dim();
    let nq = grid.quadrature_rule().len();
    let f = spec.f.values();
    let b = spec.b_values();
    let mut total = 0.0;
    let mut scale = 0.0;
    for e in 0..grid.num_elements() {
        let g = v.gradient(e);
        for (iq, q) in grid.quad_points_of(e).iter().enumerate() {
            let idx = e * nq + iq;
            let s = v.value_at_qp(q);
            let w = weight(b[idx], s, m);
            let jv = spec.integrand.value(q.coords, &g[..d]);
            let (a, c, l) = (jv * w.d, 0.5 * s * s, f[idx] * s);
            total += q.weight * (a + c - l);
            scale += q.weight * (a.abs() + c + l.abs());
        }
    }
    (total, scale)
}

/// `J(v) = ∫ j(x,∇v)/(1+b|v|)² + ½∫v² − ∫fv` by quadrature.
pub fn eval_j(spec: &ProblemSpec, v: &DiscreteField) -> Result<f64> {
    spec.check_field(v)?;
    Ok(energy_with_scale(spec, v, f64::INFINITY).0)
}

/// `J_M(v)`: as [`eval_j`] with `|v|` replaced by `|T_M(v)|` in the
/// denominator. `M = ∞` is accepted and gives `J`.
pub fn eval_jm(spec: &ProblemSpec, v: &DiscreteField, m: f64) -> Result<f64> {
    check_m(m)?;
    spec.check_field(v)?;
    Ok(energy_with_scale(spec, v, m).0)
}

fn check_m(m: f64) -> Result<()> {
    if m > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "denominator truncation level must be positive (got {m})"
        )))
    }
}

/// Exact gradient of the discrete `J_M` with respect to the nodal values;
/// boundary entries are zero.
pub fn residual(spec: &ProblemSpec, v: &DiscreteField, m: f64) -> Result<Vec<f64>> {
    check_m(m)?;
    spec.check_field(v)?;
    let grid = &spec.grid;
    let d = grid.dim();
    let nq = grid.quadrature_rule().len();
    let f = spec.f.values();
    let b = spec.b_values();
    let mut r = vec![0.0; grid.num_nodes()];
    let mut jg = [0.0; 2];
    for e in 0..grid.num_elements() {
        let g = v.gradient(e);
        let nodes = grid.element_nodes(e);
        let grads = grid.basis_gradients(e);
        for (iq, q) in grid.quad_points_of(e).iter().enumerate() {
            let idx = e * nq + iq;
            let s = v.value_at_qp(q);
            let w = weight(b[idx], s, m);
            let jv = spec.integrand.value(q.coords, &g[..d]);
            spec.integrand.gradient(q.coords, &g[..d], &mut jg[..d]);
            let scalar = jv * w.d1 + s - f[idx];
            for (a, &i) in nodes.iter().enumerate() {
                let flux = jg[0] * grads[a][0] + if d == 2 { jg[1] * grads[a][1] } else { 0.0 };
                r[i] += q.weight * (w.d * flux + scalar * q.bary[a]);
            }
        }
    }
    for (ri, &on) in r.iter_mut().zip(grid.boundary_mask()) {
        if on {
            *ri = 0.0;
        }
    }
    Ok(r)
}

/// Which sampled property a certification violation concerns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertifyCheck {
    LowerBound,
    UpperBound,
    GradientBound,
    ZeroAtOrigin,
    MidpointConvexity,
    GradientConsistency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub check: CertifyCheck,
    pub x: Point,
    pub xi: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub label: String,
    pub dim: usize,
    pub samples: usize,
    pub seed: u64,
    pub passed: bool,
    /// Smallest relative margin `(rhs − lhs)/scale` seen per check.
    pub worst_margin: BTreeMap<CertifyCheck, f64>,
    pub violation_count: usize,
    /// First violations, capped at [`MAX_REPORTED_VIOLATIONS`].
    pub violations: Vec<Violation>,
}

pub const MAX_REPORTED_VIOLATIONS: usize = 20;
const CERTIFY_REL_TOL: f64 = 1e-10;
const CERTIFY_FD_TOL: f64 = 1e-5;

/// Randomized check of the growth bounds, `j(x,0) = 0`, midpoint convexity
/// and consistency of `j_ξ` with central differences of `j`. Points `x` are
/// drawn from the unit box, `|ξ|` log-uniformly in `[1e-3, 1e3]`.
pub fn certify(
    integrand: &Integrand,
    dim: usize,
    samples: usize,
    seed: u64,
) -> Result<CertifyReport> {
    if samples == 0 {
        return Err(Error::InvalidArgument(
            "certify needs at least one sample".into(),
        ));
    }
    if !(dim == 1 || dim == 2) {
        return Err(Error::InvalidArgument(format!(
            "dimension must be 1 or 2 (got {dim})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::default();
    let draw_xi = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mag = 10f64.powf(rng.gen_range(-3.0..3.0));
        let mut dir: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = dot(&dir, &dir).sqrt().max(1e-12);
        dir.iter_mut().for_each(|c| *c *= mag / n);
        dir
    };
    let mut grad = vec![0.0; dim];
    for _ in 0..samples {
        let x: Point = [
            rng.gen_range(0.0..1.0),
            if dim == 2 {
                rng.gen_range(0.0..1.0)
            } else {
                0.0
            },
        ];
        let xi = draw_xi(&mut rng);
        let t2 = dot(&xi, &xi);
        let jv = integrand.value(x, &xi);
        tally.record(
            CertifyCheck::LowerBound,
            x,
            &xi,
            integrand.alpha * t2,
            jv,
            CERTIFY_REL_TOL,
        );
        tally.record(
            CertifyCheck::UpperBound,
            x,
            &xi,
            jv,
            integrand.beta * t2,
            CERTIFY_REL_TOL,
        );
        integrand.gradient(x, &xi, &mut grad);
        tally.record(
            CertifyCheck::GradientBound,
            x,
            &xi,
            dot(&grad, &grad).sqrt(),
            integrand.gamma * t2.sqrt(),
            CERTIFY_REL_TOL,
        );
        let zero = vec![0.0; dim];
        let j0 = integrand.value(x, &zero);
        if j0 != 0.0 {
            tally.push(Violation {
                check: CertifyCheck::ZeroAtOrigin,
                x,
                xi: zero,
                lhs: j0,
                rhs: 0.0,
            });
        }
        let other = draw_xi(&mut rng);
        let mid: Vec<f64> = xi.iter().zip(&other).map(|(a, b)| 0.5 * (a + b)).collect();
        tally.record(
            CertifyCheck::MidpointConvexity,
            x,
            &xi,
            integrand.value(x, &mid),
            0.5 * (jv + integrand.value(x, &other)),
            CERTIFY_REL_TOL,
        );
        // central differences along a random unit direction
        let dir = {
            let mut d: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = dot(&d, &d).sqrt().max(1e-12);
            d.iter_mut().for_each(|c| *c /= n);
            d
        };
        let h = 1e-6 * (1.0 + t2.sqrt());
        let plus: Vec<f64> = xi.iter().zip(&dir).map(|(a, b)| a + h * b).collect();
        let minus: Vec<f64> = xi.iter().zip(&dir).map(|(a, b)| a - h * b).collect();
        let fd = (integrand.value(x, &plus) - integrand.value(x, &minus)) / (2.0 * h);
        let an = dot(&grad, &dir);
        let err = (fd - an).abs();
        let scale = fd
            .abs()
            .max(an.abs())
            .max(1e-8 * (1.0 + dot(&grad, &grad).sqrt()));
        tally.record(
            CertifyCheck::GradientConsistency,
            x,
            &xi,
            err / scale,
            CERTIFY_FD_TOL,
            0.0,
        );
    }
    Ok(CertifyReport {
        label: integrand.label.clone(),
        dim,
        samples,
        seed,
        passed: tally.count == 0,
        worst_margin: tally.worst,
        violation_count: tally.count,
        violations: tally.violations,
    })
}

#[derive(Default)]
struct Tally {
    worst: BTreeMap<CertifyCheck, f64>,
    violations: Vec<Violation>,
    count: usize,
}

impl Tally {
    fn push(&mut self, v: Violation) {
        self.count += 1;
        if self.violations.len() < MAX_REPORTED_VIOLATIONS {
            self.violations.push(v);
        }
    }

    /// Records the relative margin `(rhs − lhs)/scale`; below `−tol` is a violation.
    fn record(&mut self, check: CertifyCheck, x: Point, xi: &[f64], lhs: f64, rhs: f64, tol: f64) {
        let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
        let margin = (rhs - lhs) / scale;
        let e = self.worst.entry(check).or_insert(f64::INFINITY);
        *e = e.min(margin);
        if !(margin >= -tol) {
            self.push(Violation {
                check,
                x,
                xi: xi.to_vec(),
                lhs,
                rhs,
            });
        }
    }
}

/// Reads a parameter map against a list of known names with defaults.
struct ParamReader {
    values: BTreeMap<&'static str, f64>,
}

impl ParamReader {
    fn new(kind: &str, given: &Params, known: &[(&'static str, f64)]) -> Result<Self> {
        for (k, v) in given {
            if !known.iter().any(|(name, _)| name == k) {
                let names: Vec<&str> = known.iter().map(|(n, _)| *n).collect();
                return Err(Error::InvalidArgument(format!(
                    "unknown parameter '{k}' for '{kind}'; known: [{}]",
                    names.join(", ")
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "parameter '{k}' for '{kind}' must be finite"
                )));
            }
        }
        let values = known
            .iter()
            .map(|&(name, default)| (name, given.get(name).copied().unwrap_or(default)))
            .collect();
        Ok(Self { values })
    }

    fn get(&self, name: &str) -> f64 {
        self.values[name]
    }
}

/// Default parameters of a built-in, for echoing configurations.
pub fn builtin_defaults(kind: &str, name: &str) -> Option<Params> {
    let list: &[(&str, f64)] = match (kind, name) {
        ("integrand", "quadratic") => &[("a", 1.0), ("oscillation", 0.0)],
        ("integrand", "anisotropic") => &[("lambda_min", 1.0), ("lambda_max", 2.0), ("twist", 1.0)],
        ("integrand", "logaug") => &[("weight", 0.5)],
        ("coefficient", "zero") => &[],
        ("coefficient", "constant") => &[("value", 1.0)],
        ("coefficient", "step") => &[("low", 0.0), ("high", 4.0), ("location", 0.5)],
        ("coefficient", "smooth-bump") => &[
            ("base", 0.5),
            ("height", 9.5),
            ("center_x", 0.5),
            ("center_y", 0.5),
            ("width", 0.15),
        ],
        ("datum", "constant") => &[("value", 1.0)],
        ("datum", "sine") => &[("amplitude", 1.0), ("frequency", 2.0)],
        ("datum", "power-singularity") => &[("exponent", 0.4), ("scale", 1.0)],
        ("datum", "step") => &[("value", 1.0), ("low", 0.0), ("location", 0.5)],
        _ => return None,
    };
    Some(list.iter().map(|&(k, v)| (k.to_string(), v)).collect())
}

fn unknown(kind: &'static str, name: &str, known: &[&str]) -> Error {
    Error::UnknownName {
        kind,
        name: name.to_string(),
        known: known.join(", "),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_interval_grid, build_rect_grid, Norm};
    use approx::assert_relative_eq;

    fn unit(cells: usize) -> Arc<Grid> {
        build_interval_grid(0.0, 1.0, cells).unwrap()
    }

    fn spec_1d(cells: usize, integrand: Integrand, b: CoefficientField, f: f64) -> ProblemSpec {
        let g = unit(cells);
        let datum = Datum::constant(&g, f).unwrap();
        ProblemSpec::new(&g, integrand, b, datum).unwrap()
    }

    #[test]
    fn energy_of_zero_is_zero() {
        let spec = spec_1d(
            16,
            Integrand::logaug(0.5).unwrap(),
            CoefficientField::constant(3.0),
            2.0,
        );
        let z = DiscreteField::zeros(&spec.grid);
        assert_eq!(eval_j(&spec, &z).unwrap(), 0.0);
        assert_eq!(eval_jm(&spec, &z, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn quadratic_energy_reduces_to_quadratic_form() {
        let spec = spec_1d(
            32,
            Integrand::quadratic(1.0, 0.0).unwrap(),
            CoefficientField::zero(),
            0.0,
        );
        let v = DiscreteField::interpolate(&spec.grid, |p| p[0]).unwrap();
        let expect = v.norm(Norm::H1Semi).powi(2) + 0.5 * v.norm(Norm::L2).powi(2);
        assert_relative_eq!(eval_j(&spec, &v).unwrap(), expect, max_relative = 1e-13);
    }

    #[test]
    fn jm_matches_j_when_truncation_inactive() {
        let spec = spec_1d(
            32,
            Integrand::quadratic(1.0, 0.3).unwrap(),
            CoefficientField::constant(2.0),
            1.0,
        );
        let v = DiscreteField::interpolate(&spec.grid, |p| (PI * p[0]).sin()).unwrap();
        let linf = v.norm(Norm::Linf);
        assert_eq!(
            eval_jm(&spec, &v, linf).unwrap(),
            eval_j(&spec, &v).unwrap()
        );
        assert_eq!(
            eval_jm(&spec, &v, 10.0 * linf).unwrap(),
            eval_j(&spec, &v).unwrap()
        );
        assert!(eval_jm(&spec, &v, 0.0).is_err());
        assert!(eval_jm(&spec, &v, -1.0).is_err());
    }

    #[test]
    fn gradient_term_non_increasing_in_m() {
        let g = unit(32);
        let f = Datum::zero(&g);
        let spec = ProblemSpec::new(
            &g,
            Integrand::quadratic(1.0, 0.0).unwrap(),
            CoefficientField::constant(1.0),
            f,
        )
        .unwrap();
        let v = DiscreteField::interpolate(&g, |p| 4.0 * (PI * p[0]).sin()).unwrap();
        // with f = 0 the lower-order terms do not depend on M
        let mut prev = f64::INFINITY;
        for m in [0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 8.0] {
            let e = eval_jm(&spec, &v, m).unwrap();
            assert!(e <= prev);
            prev = e;
        }
    }

    #[test]
    fn datum_truncation() {
        let g = unit(64);
        let one = Datum::constant(&g, 1.0).unwrap();
        let t = make_jn_datum(&one, 10.0).unwrap();
        assert_eq!(t.values(), one.values());
        assert_eq!(t.linf_bound(), Some(1.0));
        assert!(make_jn_datum(&one, 0.0).is_err());

        let p = Datum::builtin("power-singularity", &Params::new(), &g).unwrap();
        assert_eq!(p.linf_bound(), None);
        let t2 = make_jn_datum(&p, 2.0).unwrap();
        assert_eq!(t2.linf_bound(), Some(2.0));
        let cut = 2f64.powf(-2.5);
        for (q, (&a, &b)) in g
            .quad_points()
            .iter()
            .zip(t2.values().iter().zip(p.values()))
        {
            if q.coords[0] < cut {
                assert_eq!(a, 2.0);
            } else {
                assert_eq!(a, b);
            }
            assert!(a.abs() <= b.abs());
        }
        let mut prev = 0.0;
        for n in [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0] {
            let l2 = make_jn_datum(&p, n).unwrap().l2_norm_sq();
            assert!(l2 >= prev);
            assert!(l2 <= p.l2_norm_sq());
            prev = l2;
        }
    }

    #[test]
    fn residual_at_zero_is_minus_load() {
        let spec = spec_1d(
            8,
            Integrand::logaug(0.5).unwrap(),
            CoefficientField::constant(1.0),
            1.0,
        );
        let z = DiscreteField::zeros(&spec.grid);
        let r = residual(&spec, &z, 4.0).unwrap();
        // ∫ φ_i = h for interior hat functions
        for (i, ri) in r.iter().enumerate() {
            if spec.grid.is_boundary(i) {
                assert_eq!(*ri, 0.0);
            } else {
                assert_relative_eq!(*ri, -0.125, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn quadratic_residual_matches_assembled_system() {
        // 2·K·v + Mass·v − F with K = (1/h)tridiag(-1,2,-1),
        // Mass = (h/6)tridiag(1,4,1), F_i = h·f.
        let cells = 10;
        let h = 1.0 / cells as f64;
        let spec = spec_1d(
            cells,
            Integrand::quadratic(1.0, 0.0).unwrap(),
            CoefficientField::zero(),
            1.5,
        );
        let v =
            DiscreteField::interpolate(&spec.grid, |p| p[0] * (1.0 - p[0]) * (3.0 + p[0])).unwrap();
        let r = residual(&spec, &v, 1.0).unwrap();
        let u = v.values();
        for i in 1..cells {
            let k = (2.0 * u[i] - u[i - 1] - u[i + 1]) / h;
            let m = h / 6.0 * (4.0 * u[i] + u[i - 1] + u[i + 1]);
            assert_relative_eq!(r[i], 2.0 * k + m - h * 1.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn certify_builtins_pass() {
        for integrand in [
            Integrand::quadratic(1.0, 0.0).unwrap(),
            Integrand::quadratic(2.0, 0.5).unwrap(),
            Integrand::anisotropic(1.0, 3.0, 1.0).unwrap(),
            Integrand::logaug(0.5).unwrap(),
        ] {
            for dim in [1, 2] {
                let rep = certify(&integrand, dim, 2000, 7).unwrap();
                assert!(
                    rep.passed,
                    "{} in {dim}D: {:?}",
                    integrand.label, rep.violations
                );
            }
        }
        let q = Integrand::quadratic(1.0, 0.0).unwrap();
        assert_eq!((q.alpha, q.beta, q.gamma), (1.0, 1.0, 2.0));
        let l = Integrand::logaug(0.5).unwrap();
        assert_eq!((l.alpha, l.beta, l.gamma), (1.0, 1.5, 3.0));
    }

    #[test]
    fn certify_rejects_linear_growth() {
        let lin = Integrand::new(
            "abs",
            0.1,
            1.0,
            1.0,
            Arc::new(|_, xi| dot(xi, xi).sqrt()),
            Arc::new(|_, xi, out| {
                let n = dot(xi, xi).sqrt();
                for (o, &z) in out.iter_mut().zip(xi) {
                    *o = if n > 0.0 { z / n } else { 0.0 };
                }
            }),
        );
        let rep = certify(&lin, 1, 500, 1).unwrap();
        assert!(!rep.passed);
        assert!(rep
            .violations
            .iter()
            .any(|v| v.check == CertifyCheck::LowerBound));
        assert!(certify(&lin, 1, 0, 1).is_err());
    }

    #[test]
    fn certify_is_deterministic() {
        let l = Integrand::logaug(0.5).unwrap();
        assert_eq!(
            certify(&l, 2, 300, 99).unwrap(),
            certify(&l, 2, 300, 99).unwrap()
        );
    }

    #[test]
    fn fd_hessian_fallback_matches_closed_form() {
        let l = Integrand::logaug(0.5).unwrap();
        let mut bare = l.clone();
        bare.j_hess = None;
        let xi = [0.7, -1.3];
        let (mut a, mut b) = ([0.0; 4], [0.0; 4]);
        l.hessian([0.2, 0.3], &xi, &mut a);
        bare.hessian([0.2, 0.3], &xi, &mut b);
        for k in 0..4 {
            assert_relative_eq!(a[k], b[k], epsilon = 1e-7);
        }
    }

    #[test]
    fn unknown_names_and_params_are_listed() {
        let err = Integrand::builtin("cubic", &Params::new()).unwrap_err();
        assert!(err.to_string().contains("quadratic, anisotropic, logaug"));
        let mut p = Params::new();
        p.insert("alpha".into(), 1.0);
        let err = Integrand::builtin("quadratic", &p).unwrap_err();
        assert!(err.to_string().contains("known: [a, oscillation]"));
        let g = unit(4);
        assert!(Datum::builtin("cosine", &Params::new(), &g).is_err());
        assert!(CoefficientField::builtin("ramp", &Params::new()).is_err());
    }

    #[test]
    fn builtin_coefficients_respect_bounds() {
        let g = build_rect_grid(8, 8, 1.0, 1.0).unwrap();
        for name in COEFFICIENT_NAMES {
            let b = CoefficientField::builtin(name, &Params::new()).unwrap();
            b.check_bounds(&g).unwrap();
            assert!(builtin_defaults("coefficient", name).is_some());
        }
        let bad = CoefficientField::new("bad", 0.0, 1.0, Arc::new(|_| 2.0)).unwrap();
        assert!(bad.check_bounds(&g).is_err());
        assert!(CoefficientField::new("neg", -1.0, 1.0, Arc::new(|_| 0.0)).is_err());
    }

    #[test]
    fn power_singularity_exponent_gate() {
        let g = unit(8);
        let mut p = Params::new();
        p.insert("exponent".into(), 0.5);
        assert!(Datum::builtin("power-singularity", &p, &g).is_err());
        let g2 = build_rect_grid(4, 4, 1.0, 1.0).unwrap();
        p.insert("exponent".into(), 0.9);
        assert!(Datum::builtin("power-singularity", &p, &g2).is_ok());
    }

    #[test]
    fn schedules() {
        assert_eq!(MSchedule::Doubling.levels(1.0), vec![1.0, 2.0]);
        assert_eq!(
            MSchedule::Doubling.levels(16.0),
            vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0]
        );
        assert_eq!(MSchedule::Doubling.levels(0.25), vec![1.0]);
        let spec = spec_1d(
            4,
            Integrand::quadratic(1.0, 0.0).unwrap(),
            CoefficientField::zero(),
            3.0,
        );
        assert_eq!(spec.n_schedule, vec![4.0]);
        assert!(spec.clone().with_n_schedule(vec![2.0, 1.0]).is_err());
        assert!(spec.clone().with_n_schedule(vec![]).is_err());
        assert!(spec
            .clone()
            .with_m_schedule(MSchedule::Explicit(vec![1.0, 1.0]))
            .is_err());
        assert!(spec.clone().with_tolerance(0.0, 10).is_err());
    }
}
