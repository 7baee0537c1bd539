//! Radial sequence `v_n = exp(T_n(|x|^{-ρ} − 1)) − 1` on the unit ball of
//! `R^N`: bounded `∫|∇v|²/(1+|v|)²`, unbounded `∫|∇v|`.
//!
//! All integrals are one-dimensional in `r` with the `r^{N−1}` Jacobian and
//! the surface measure of the unit sphere in front.

use std::f64::consts::PI;

use serde::Serialize;

use crate::quadrature::{geometric_edges, GaussLegendre};
use crate::{Error, Result};

/// Largest truncation level accepted; `e^{2n}` must stay finite.
pub const MAX_LEVEL: f64 = 350.0;
pub const DEFAULT_PANELS: usize = 64;
pub const POINTS_PER_PANEL: usize = 8;
/// Panel doubling stops once two successive values agree to this.
pub const REFINE_TOL: f64 = 1e-8;
const MAX_DOUBLINGS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadialProfile {
    pub dim: u32,
    pub rho: f64,
    pub n: f64,
}

/// Surface measure of the unit sphere in `R^N`.
pub fn sphere_measure(dim: u32) -> f64 {
    match dim {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        d => 2.0 * PI / (d as f64 - 2.0) * sphere_measure(d - 2),
    }
}

/// Rejects `(N, ρ)` outside `N > 2`, `0 < ρ < (N − 2)/2`.
pub fn check_exponent(dim: u32, rho: f64) -> Result<()> {
    if dim <= 2 {
        return Err(Error::InvalidArgument(format!(
            "dimension must exceed 2 (got {dim})"
        )));
    }
    let top = (dim as f64 - 2.0) / 2.0;
    if !(rho > 0.0 && rho < top) {
        return Err(Error::InvalidArgument(format!(
            "rho must lie in (0, {top}) for N = {dim} (got {rho})"
        )));
    }
    Ok(())
}

impl RadialProfile {
    pub fn new(dim: u32, rho: f64, n: f64) -> Result<Self> {
        check_exponent(dim, rho)?;
        if !(0.0..=MAX_LEVEL).contains(&n) {
            return Err(Error::InvalidArgument(format!(
                "truncation level must lie in [0, {MAX_LEVEL}] (got {n})"
            )));
        }
        Ok(Self { dim, rho, n })
    }

    /// Radius where `r^{-ρ} − 1 = n`.
    pub fn cutoff_radius(&self) -> f64 {
        (1.0 + self.n).powf(-1.0 / self.rho)
    }

    fn omega(&self) -> f64 {
        sphere_measure(self.dim)
    }

    fn jacobian(&self, r: f64) -> f64 {
        r.powi(self.dim as i32 - 1)
    }

    /// `v_n'(r)` in magnitude on the shell `r > r_n`.
    fn shell_slope(&self, r: f64) -> f64 {
        self.rho * r.powf(-self.rho - 1.0) * (r.powf(-self.rho) - 1.0).exp()
    }

    /// Shell integral `ω ∫_{r_n}^1 g(r) r^{N−1} dr`, refined by panel doubling.
    fn shell_integral<F: Fn(f64) -> f64>(&self, g: F, panels: usize) -> f64 {
        let rn = self.cutoff_radius();
        if rn >= 1.0 {
            return 0.0;
        }
        let rule = GaussLegendre::new(POINTS_PER_PANEL);
        let eval = |p: usize| {
            rule.integrate_panels(|r| g(r) * self.jacobian(r), &geometric_edges(rn, 1.0, p))
        };
        let mut p = panels.max(1);
        let mut prev = eval(p);
        for _ in 0..MAX_DOUBLINGS {
            p *= 2;
            let next = eval(p);
            let done = (next - prev).abs() <= REFINE_TOL * next.abs().max(f64::MIN_POSITIVE);
            prev = next;
            if done {
                break;
            }
        }
        self.omega() * prev
    }
}

/// `exp(T_n(r^{-ρ} − 1)) − 1` for `0 < r ≤ 1`.
pub fn vn_value(p: &RadialProfile, r: f64) -> Result<f64> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "radius must lie in (0, 1] (got {r})"
        )));
    }
    Ok(((r.powf(-p.rho) - 1.0).min(p.n)).exp_m1())
}

/// `∫_{B_1} |∇v_n|` by composite Gauss–Legendre with panels clustered at
/// `r_n`, starting from `quad_points / 8` panels.
pub fn w11_seminorm(p: &RadialProfile, quad_points: usize) -> Result<f64> {
    if quad_points < 100 {
        return Err(Error::InvalidArgument(format!(
            "at least 100 quadrature points are needed (got {quad_points})"
        )));
    }
    let panels = quad_points.div_ceil(POINTS_PER_PANEL);
    Ok(p.shell_integral(|r| p.shell_slope(r), panels))
}

/// `∫_{B_1} |∇ log(1 + v_n)|²` in closed form.
pub fn log_h1_seminorm(p: &RadialProfile) -> f64 {
    let e = p.dim as f64 - 2.0 - 2.0 * p.rho;
    p.omega() * p.rho * p.rho * (1.0 - p.cutoff_radius().powf(e)) / e
}

/// Limit of [`log_h1_seminorm`] as `n → ∞`.
pub fn log_h1_limit(dim: u32, rho: f64) -> f64 {
    sphere_measure(dim) * rho * rho / (dim as f64 - 2.0 - 2.0 * rho)
}

/// `(∫|∇v_n|²/(1+v_n)², ∫v_n²)` by radial quadrature; the first from the
/// quotient of `v_n'` and `1 + v_n`, the plateau part of the second in
/// closed form.
pub fn coercive_functional_value(p: &RadialProfile) -> (f64, f64) {
    if p.n == 0.0 {
        return (0.0, 0.0);
    }
    let first = p.shell_integral(
        |r| {
            let one_plus_v = (r.powf(-p.rho) - 1.0).exp();
            (p.shell_slope(r) / one_plus_v).powi(2)
        },
        DEFAULT_PANELS,
    );
    let plateau =
        p.omega() * p.n.exp_m1().powi(2) * p.cutoff_radius().powi(p.dim as i32) / p.dim as f64;
    let shell = p.shell_integral(|r| (r.powf(-p.rho) - 1.0).exp_m1().powi(2), DEFAULT_PANELS);
    (first, plateau + shell)
}

/// `∫(1 + v_n)²`.
pub fn one_plus_v_sq(p: &RadialProfile) -> f64 {
    let plateau =
        p.omega() * (2.0 * p.n).exp() * p.cutoff_radius().powi(p.dim as i32) / p.dim as f64;
    let shell = p.shell_integral(|r| (2.0 * (r.powf(-p.rho) - 1.0)).exp(), DEFAULT_PANELS);
    plateau + shell
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceRow {
    pub n: f64,
    pub cutoff_radius: f64,
    pub w11: f64,
    pub log_h1: f64,
    pub weighted_grad: f64,
    pub l2_sq: f64,
    /// `½∫|∇v|²/(1+v)² + ½∫(1+v)²`.
    pub chain_rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceReport {
    pub dim: u32,
    pub rho: f64,
    pub n_max: u32,
    pub log_h1_limit: f64,
    pub rows: Vec<DivergenceRow>,
    /// Every `log_h1` is at most the closed-form limit.
    pub log_h1_bounded: bool,
    pub log_h1_monotone: bool,
    /// `w11` strictly increasing for `n ≥ 1`.
    pub w11_increasing: bool,
    /// `w11(n_max) / w11(1)`, when `n_max ≥ 1`.
    pub w11_growth: Option<f64>,
    pub chain_holds: bool,
    /// Largest relative gap between the two evaluations of
    /// `∫|∇v|²/(1+v)²`.
    pub identity_gap: f64,
}

impl DivergenceReport {
    pub fn passed(&self) -> bool {
        self.log_h1_bounded
            && self.log_h1_monotone
            && self.w11_increasing
            && self.chain_holds
            && self.identity_gap <= IDENTITY_TOL
    }
}

pub const IDENTITY_TOL: f64 = 1e-8;

/// Tabulates `n = 0..=n_max`.
pub fn divergence_report(dim: u32, rho: f64, n_max: u32) -> Result<DivergenceReport> {
    check_exponent(dim, rho)?;
    let mut rows = Vec::with_capacity(n_max as usize + 1);
    for n in 0..=n_max {
        let p = RadialProfile::new(dim, rho, n as f64)?;
        let (weighted_grad, l2_sq) = coercive_functional_value(&p);
        let w11 = w11_seminorm(&p, DEFAULT_PANELS * POINTS_PER_PANEL)?;
        rows.push(DivergenceRow {
            n: n as f64,
            cutoff_radius: p.cutoff_radius(),
            w11,
            log_h1: log_h1_seminorm(&p),
            weighted_grad,
            l2_sq,
            chain_rhs: 0.5 * weighted_grad + 0.5 * one_plus_v_sq(&p),
        });
    }
    let limit = log_h1_limit(dim, rho);
    let identity_gap = rows
        .iter()
        .filter(|r| r.log_h1 > 0.0)
        .map(|r| (r.weighted_grad - r.log_h1).abs() / r.log_h1)
        .fold(0.0, f64::max);
    let after_one = &rows[rows.len().min(1)..];
    Ok(DivergenceReport {
        dim,
        rho,
        n_max,
        log_h1_limit: limit,
        log_h1_bounded: rows.iter().all(|r| r.log_h1 <= limit),
        log_h1_monotone: rows.windows(2).all(|w| w[1].log_h1 > w[0].log_h1),
        w11_increasing: after_one.windows(2).all(|w| w[1].w11 > w[0].w11),
        w11_growth: (n_max >= 1).then(|| rows[n_max as usize].w11 / rows[1].w11),
        chain_holds: rows.iter().all(|r| r.w11 <= r.chain_rhs),
        identity_gap,
        rows,
    })
}
