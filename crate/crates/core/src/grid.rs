//! Simplicial meshes, continuous piecewise-linear fields with zero trace,
//! element quadrature, nodal truncation and the norms used by the estimates.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::functional::CoefficientField;
use crate::{Error, Result};

/// Node coordinates. 1D grids store `[x, 0.0]`.
pub type Point = [f64; 2];

const MEASURE_REL_TOL: f64 = 1e-12;

/// How a grid was generated. Used for point location and for reproducing the
/// grid from a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Layout {
    Interval {
        a: f64,
        b: f64,
        cells: usize,
    },
    Rect {
        x_cells: usize,
        y_cells: usize,
        lx: f64,
        ly: f64,
    },
}

/// Barycentric quadrature points and weights; weights are fractions of the
/// element measure and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Two-point Gauss rule on a segment (exact to degree 3).
    pub fn segment() -> Self {
        let d = 0.5 / 3f64.sqrt();
        Self {
            points: vec![[0.5 + d, 0.5 - d, 0.0], [0.5 - d, 0.5 + d, 0.0]],
            weights: vec![0.5, 0.5],
        }
    }

    /// Edge-midpoint rule on a triangle (exact to degree 2).
    pub fn triangle() -> Self {
        Self {
            points: vec![[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
            weights: vec![1.0 / 3.0; 3],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// A quadrature point in physical space. `weight` already includes the
/// element measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadPoint {
    pub element: usize,
    pub coords: Point,
    pub weight: f64,
    pub bary: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct Grid {
    dim: usize,
    layout: Layout,
    nodes: Vec<Point>,
    elements: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    measures: Vec<f64>,
    basis_grads: Vec<[[f64; 2]; 3]>,
    rule: QuadratureRule,
    qps: Vec<QuadPoint>,
    interior: Vec<usize>,
    reduced: Vec<Option<usize>>,
    measure: f64,
}

/// Equispaced grid on `(a, b)` with `cells` segments.
pub fn build_interval_grid(a: f64, b: f64, cells: usize) -> Result<Arc<Grid>> {
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return Err(Error::InvalidGrid(format!(
            "interval endpoints must satisfy a < b (got a = {a}, b = {b})"
        )));
    }
    if cells == 0 {
        return Err(Error::InvalidGrid("cells must be at least 1".into()));
    }
    let h = (b - a) / cells as f64;
    let nodes: Vec<Point> = (0..=cells)
        .map(|i| {
            if i == cells {
                [b, 0.0]
            } else {
                [a + h * i as f64, 0.0]
            }
        })
        .collect();
    let elements = (0..cells).map(|i| [i, i + 1, usize::MAX]).collect();
    let boundary = (0..=cells).map(|i| i == 0 || i == cells).collect();
    Grid::assemble(
        1,
        Layout::Interval { a, b, cells },
        nodes,
        elements,
        boundary,
    )
    .map(Arc::new)
}

/// Rectangle `(0, lx) × (0, ly)`; every cell is split along its
/// lower-left/upper-right diagonal into two counter-clockwise right triangles.
pub fn build_rect_grid(x_cells: usize, y_cells: usize, lx: f64, ly: f64) -> Result<Arc<Grid>> {
    if x_cells == 0 || y_cells == 0 {
        return Err(Error::InvalidGrid("cell counts must be positive".into()));
    }
    if !(lx.is_finite() && ly.is_finite()) || lx <= 0.0 || ly <= 0.0 {
        return Err(Error::InvalidGrid(format!(
            "side lengths must be positive (got lx = {lx}, ly = {ly})"
        )));
    }
    let hx = lx / x_cells as f64;
    let hy = ly / y_cells as f64;
    let id = |i: usize, j: usize| j * (x_cells + 1) + i;
    let mut nodes = Vec::with_capacity((x_cells + 1) * (y_cells + 1));
    let mut boundary = Vec::with_capacity(nodes.capacity());
    for j in 0..=y_cells {
        for i in 0..=x_cells {
            let x = if i == x_cells { lx } else { hx * i as f64 };
            let y = if j == y_cells { ly } else { hy * j as f64 };
            nodes.push([x, y]);
            boundary.push(i == 0 || j == 0 || i == x_cells || j == y_cells);
        }
    }
    let mut elements = Vec::with_capacity(2 * x_cells * y_cells);
    for j in 0..y_cells {
        for i in 0..x_cells {
            let (n00, n10, n01, n11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            elements.push([n00, n10, n11]);
            elements.push([n00, n11, n01]);
        }
    }
    Grid::assemble(
        2,
        Layout::Rect {
            x_cells,
            y_cells,
            lx,
            ly,
        },
        nodes,
        elements,
        boundary,
    )
    .map(Arc::new)
}

impl Grid {
    fn assemble(
        dim: usize,
        layout: Layout,
        nodes: Vec<Point>,
        elements: Vec<[usize; 3]>,
        boundary: Vec<bool>,
    ) -> Result<Self> {
        let npe = dim + 1;
        let mut measures = Vec::with_capacity(elements.len());
        let mut basis_grads = Vec::with_capacity(elements.len());
        for (e, el) in elements.iter().enumerate() {
            let idx = &el[..npe];
            for (a, &i) in idx.iter().enumerate() {
                if i >= nodes.len() {
                    return Err(Error::InvalidGrid(format!(
                        "element {e} references node {i} out of range"
                    )));
                }
                if idx[..a].contains(&i) {
                    return Err(Error::InvalidGrid(format!("element {e} repeats node {i}")));
                }
            }
            let (m, g) = if dim == 1 {
                let h = nodes[idx[1]][0] - nodes[idx[0]][0];
                (h, [[-1.0 / h, 0.0], [1.0 / h, 0.0], [0.0, 0.0]])
            } else {
                let [x0, y0] = nodes[idx[0]];
                let [x1, y1] = nodes[idx[1]];
                let [x2, y2] = nodes[idx[2]];
                let det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
                (
                    0.5 * det,
                    [
                        [(y1 - y2) / det, (x2 - x1) / det],
                        [(y2 - y0) / det, (x0 - x2) / det],
                        [(y0 - y1) / det, (x1 - x0) / det],
                    ],
                )
            };
            if !(m > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "element {e} has non-positive measure {m}"
                )));
            }
            measures.push(m);
            basis_grads.push(g);
        }
        let measure: f64 = measures.iter().sum();
        let expected = match layout {
            Layout::Interval { a, b, .. } => b - a,
            Layout::Rect { lx, ly, .. } => lx * ly,
        };
        if ((measure - expected) / expected).abs() > MEASURE_REL_TOL {
            return Err(Error::InvalidGrid(format!(
                "element measures sum to {measure}, expected {expected}"
            )));
        }
        let rule = if dim == 1 {
            QuadratureRule::segment()
        } else {
            QuadratureRule::triangle()
        };
        let mut qps = Vec::with_capacity(elements.len() * rule.len());
        for (e, el) in elements.iter().enumerate() {
            for (bary, w) in rule.points.iter().zip(&rule.weights) {
                let mut coords = [0.0; 2];
                for a in 0..npe {
                    coords[0] += bary[a] * nodes[el[a]][0];
                    coords[1] += bary[a] * nodes[el[a]][1];
                }
                qps.push(QuadPoint {
                    element: e,
                    coords,
                    weight: w * measures[e],
                    bary: *bary,
                });
            }
        }
        let mut reduced = vec![None; nodes.len()];
        let mut interior = Vec::new();
        for (i, &on_boundary) in boundary.iter().enumerate() {
            if !on_boundary {
                reduced[i] = Some(interior.len());
                interior.push(i);
            }
        }
        Ok(Self {
            dim,
            layout,
            nodes,
            elements,
            boundary,
            measures,
            basis_grads,
            rule,
            qps,
            interior,
            reduced,
            measure: expected,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    /// Node indices of element `e` (two in 1D, three in 2D).
    pub fn element_nodes(&self, e: usize) -> &[usize] {
        &self.elements[e][..self.dim + 1]
    }

    pub fn element_measure(&self, e: usize) -> f64 {
        self.measures[e]
    }

    /// Constant gradients of the local basis functions on element `e`.
    pub fn basis_gradients(&self, e: usize) -> &[[f64; 2]] {
        &self.basis_grads[e][..self.dim + 1]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    /// Total measure of the domain.
    pub fn measure(&self) -> f64 {
        self.measure
    }

    pub fn quadrature_rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn quad_points(&self) -> &[QuadPoint] {
        &self.qps
    }

    pub fn quad_points_of(&self, e: usize) -> &[QuadPoint] {
        let nq = self.rule.len();
        &self.qps[e * nq..(e + 1) * nq]
    }

    /// Global indices of the non-boundary nodes, increasing.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    /// Position of `node` among the interior nodes, if it is interior.
    pub fn reduced_index(&self, node: usize) -> Option<usize> {
        self.reduced[node]
    }

    /// Locates the element containing `p` and the barycentric coordinates of
    /// `p` in it. Points outside the closed domain give `None`.
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        const SLACK: f64 = 1e-12;
        match self.layout {
            Layout::Interval { a, b, cells } => {
                let x = p[0];
                if x < a - SLACK * (b - a) || x > b + SLACK * (b - a) {
                    return None;
                }
                let h = (b - a) / cells as f64;
                let e = (((x - a) / h).floor().max(0.0) as usize).min(cells - 1);
                let [x0, _] = self.nodes[e];
                let [x1, _] = self.nodes[e + 1];
                let t = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
                Some((e, [1.0 - t, t, 0.0]))
            }
            Layout::Rect {
                x_cells,
                y_cells,
                lx,
                ly,
            } => {
                let [x, y] = p;
                if x < -SLACK * lx
                    || x > lx * (1.0 + SLACK)
                    || y < -SLACK * ly
                    || y > ly * (1.0 + SLACK)
                {
                    return None;
                }
                let i = ((x / (lx / x_cells as f64)).floor().max(0.0) as usize).min(x_cells - 1);
                let j = ((y / (ly / y_cells as f64)).floor().max(0.0) as usize).min(y_cells - 1);
                let base = 2 * (j * x_cells + i);
                let mut best = (base, [0.0; 3], f64::NEG_INFINITY);
                for e in [base, base + 1] {
                    let bary = self.barycentric(e, p);
                    let worst = bary.iter().copied().fold(f64::INFINITY, f64::min);
                    if worst > best.2 {
                        best = (e, bary, worst);
                    }
                }
                Some((best.0, best.1))
            }
        }
    }

    fn barycentric(&self, e: usize, p: Point) -> [f64; 3] {
        let idx = self.element_nodes(e);
        let g = self.basis_gradients(e);
        let x0 = self.nodes[idx[0]];
        let d = [p[0] - x0[0], p[1] - x0[1]];
        let l1 = g[1][0] * d[0] + g[1][1] * d[1];
        let l2 = g[2][0] * d[0] + g[2][1] * d[1];
        [1.0 - l1 - l2, l1, l2]
    }
}

/// The norms and seminorms used by the estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Norm {
    L1,
    L2,
    Linf,
    W11Semi,
    H1Semi,
}

/// A continuous piecewise-linear function given by its nodal values.
///
/// Fields built through [`DiscreteField::from_values`] and
/// [`DiscreteField::interpolate`] vanish on the boundary; only
/// [`DiscreteField::with_trace`] produces fields with boundary values, and
/// those are meant for norm evaluations, not for the solver.
#[derive(Debug, Clone)]
pub struct DiscreteField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for DiscreteField {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) && self.values == other.values
    }
}

impl DiscreteField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self {
            grid: Arc::clone(grid),
            values: vec![0.0; grid.num_nodes()],
        }
    }

    /// Zero-trace field from nodal values.
    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        let field = Self::with_trace(grid, values)?;
        for (i, &v) in field.values.iter().enumerate() {
            if grid.is_boundary(i) && v != 0.0 {
                return Err(Error::NonzeroTrace { node: i, value: v });
            }
        }
        Ok(field)
    }

    /// General P1 function, boundary values allowed.
    pub fn with_trace(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_nodes() {
            return Err(Error::LengthMismatch {
                expected: grid.num_nodes(),
                got: values.len(),
            });
        }
        if let Some((node, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { node, value });
        }
        Ok(Self {
            grid: Arc::clone(grid),
            values,
        })
    }

    /// Nodal interpolation of `f` at interior nodes, zero on the boundary.
    pub fn interpolate<F: Fn(Point) -> f64>(grid: &Arc<Grid>, f: F) -> Result<Self> {
        let mut values = vec![0.0; grid.num_nodes()];
        for &i in grid.interior_nodes() {
            let v = f(grid.nodes()[i]);
            if !v.is_finite() {
                return Err(Error::NonFinite { node: i, value: v });
            }
            values[i] = v;
        }
        Ok(Self {
            grid: Arc::clone(grid),
            values,
        })
    }

    /// Nodal interpolation at every node, boundary included.
    pub fn interpolate_with_trace<F: Fn(Point) -> f64>(grid: &Arc<Grid>, f: F) -> Result<Self> {
        let values = grid.nodes().iter().map(|&p| f(p)).collect();
        Self::with_trace(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_zero_trace(&self) -> bool {
        self.values
            .iter()
            .zip(self.grid.boundary_mask())
            .all(|(&v, &b)| !b || v == 0.0)
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid)
    }

    /// Interpolated value at a quadrature point of this grid.
    #[inline]
    pub fn value_at_qp(&self, q: &QuadPoint) -> f64 {
        self.grid
            .element_nodes(q.element)
            .iter()
            .zip(&q.bary)
            .map(|(&i, &l)| l * self.values[i])
            .sum()
    }

    /// Interpolated values at every quadrature point, in grid order.
    pub fn qp_values(&self) -> Vec<f64> {
        self.grid
            .quad_points()
            .iter()
            .map(|q| self.value_at_qp(q))
            .collect()
    }

    /// Gradient on element `e`, padded to two components.
    #[inline]
    pub fn gradient(&self, e: usize) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (&i, gb) in self
            .grid
            .element_nodes(e)
            .iter()
            .zip(self.grid.basis_gradients(e))
        {
            g[0] += self.values[i] * gb[0];
            g[1] += self.values[i] * gb[1];
        }
        g
    }

    /// Gradient on element `index` with `dim` components.
    pub fn element_gradient(&self, index: usize) -> Result<Vec<f64>> {
        if index >= self.grid.num_elements() {
            return Err(Error::ElementOutOfRange {
                index,
                count: self.grid.num_elements(),
            });
        }
        Ok(self.gradient(index)[..self.grid.dim()].to_vec())
    }

    /// Value of the interpolant at an arbitrary point of the closed domain.
    pub fn value_at(&self, p: Point) -> Option<f64> {
        let (e, bary) = self.grid.locate(p)?;
        Some(
            self.grid
                .element_nodes(e)
                .iter()
                .zip(&bary)
                .map(|(&i, &l)| l * self.values[i])
                .sum(),
        )
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// `self + c · other`.
    pub fn axpy(&self, c: f64, other: &Self) -> Result<Self> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid: Arc::clone(&self.grid),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
        })
    }

    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.axpy(-1.0, other)
    }

    /// Nodal truncation `T_k(v_i) = max(-k, min(v_i, k))`.
    pub fn truncate(&self, k: f64) -> Result<Self> {
        check_level(k)?;
        Ok(self.map(|v| truncate_scalar(v, k)))
    }

    /// Nodal tail `G_k(v_i) = v_i - T_k(v_i)`.
    pub fn tail(&self, k: f64) -> Result<Self> {
        check_level(k)?;
        Ok(self.map(|v| tail_scalar(v, k)))
    }

    pub fn norm(&self, which: Norm) -> f64 {
        let grid = &self.grid;
        match which {
            Norm::L1 => grid
                .quad_points()
                .iter()
                .map(|q| q.weight * self.value_at_qp(q).abs())
                .sum(),
            Norm::L2 => grid
                .quad_points()
                .iter()
                .map(|q| q.weight * self.value_at_qp(q).powi(2))
                .sum::<f64>()
                .sqrt(),
            Norm::Linf => self.values.iter().fold(0.0, |m, v| m.max(v.abs())),
            Norm::W11Semi => (0..grid.num_elements())
                .map(|e| grid.element_measure(e) * norm2(self.gradient(e)))
                .sum(),
            Norm::H1Semi => (0..grid.num_elements())
                .map(|e| grid.element_measure(e) * norm2_sq(self.gradient(e)))
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// `∫ |∇v|² / (1 + b|v|)²` with `|v|` and `b` taken at quadrature points.
    pub fn weighted_grad_l2(&self, b: &CoefficientField) -> f64 {
        self.grid
            .quad_points()
            .iter()
            .map(|q| {
                let g = norm2_sq(self.gradient(q.element));
                let w = 1.0 + b.eval(q.coords) * self.value_at_qp(q).abs();
                q.weight * g / (w * w)
            })
            .sum()
    }
}

fn check_level(k: f64) -> Result<()> {
    if k >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "truncation level must be nonnegative (got {k})"
        )))
    }
}

#[inline]
pub fn truncate_scalar(s: f64, k: f64) -> f64 {
    s.clamp(-k, k)
}

#[inline]
pub fn tail_scalar(s: f64, k: f64) -> f64 {
    s - truncate_scalar(s, k)
}

#[inline]
pub(crate) fn norm2_sq(g: [f64; 2]) -> f64 {
    g[0] * g[0] + g[1] * g[1]
}

#[inline]
pub(crate) fn norm2(g: [f64; 2]) -> f64 {
    norm2_sq(g).sqrt()
}
