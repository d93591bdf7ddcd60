//! Tabulated one-dimensional log-densities.
//!
//! A [`Grid`] lays nodes out as `x = φ(u)` for a reference coordinate `u`
//! that is evenly spaced (or equal to `x` for raw node lists). Quadrature runs
//! in `u` with the analytic Jacobian `φ'(u)`, so endpoint singularities and
//! unbounded domains are absorbed by the layout instead of the integrand.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Smallest number of nodes a grid may have.
pub const MIN_NODES: usize = 16;

/// Relative offset of the outermost nodes from a singular finite endpoint.
pub const ENDPOINT_OFFSET: f64 = 1e-10;

/// How the nodes of a grid are laid out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridSpec {
    /// Closed interval `[lo, hi]`, evenly spaced nodes including both ends.
    Uniform { lo: f64, hi: f64, nodes: usize },
    /// Open interval `(lo, hi)` with tanh-sinh spacing; the outermost nodes
    /// sit [`ENDPOINT_OFFSET`] of the width inside each endpoint.
    OpenInterval { lo: f64, hi: f64, nodes: usize },
    /// Half-line `(origin, ∞)` with nodes log-spaced at distances
    /// `near..=far` from the origin.
    HalfLine {
        origin: f64,
        near: f64,
        far: f64,
        nodes: usize,
    },
    /// Real line through `x = center + scale·tan(u)`, `u` evenly spaced in
    /// `(-π/2, π/2)`.
    RealLine { center: f64, scale: f64, nodes: usize },
}

impl GridSpec {
    pub fn nodes(&self) -> usize {
        match *self {
            GridSpec::Uniform { nodes, .. }
            | GridSpec::OpenInterval { nodes, .. }
            | GridSpec::HalfLine { nodes, .. }
            | GridSpec::RealLine { nodes, .. } => nodes,
        }
    }

    pub fn domain(&self) -> (f64, f64) {
        match *self {
            GridSpec::Uniform { lo, hi, .. } | GridSpec::OpenInterval { lo, hi, .. } => (lo, hi),
            GridSpec::HalfLine { origin, .. } => (origin, f64::INFINITY),
            GridSpec::RealLine { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Default layout for `(0, 1)`.
    pub fn unit_interval(nodes: usize) -> Self {
        GridSpec::OpenInterval {
            lo: 0.0,
            hi: 1.0,
            nodes,
        }
    }

    /// Default layout for `(0, ∞)`.
    pub fn positive_half_line(nodes: usize) -> Self {
        GridSpec::HalfLine {
            origin: 0.0,
            near: 1e-10,
            far: 1e10,
            nodes,
        }
    }

    /// Default layout for the real line.
    pub fn real_line(nodes: usize) -> Self {
        GridSpec::RealLine {
            center: 0.0,
            scale: 1.0,
            nodes,
        }
    }
}

/// Which way the tail variable `s` runs near an open boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum TailKind {
    /// Finite endpoint; `s → 0` at the boundary.
    Endpoint,
    /// Infinite boundary; `s → ∞`.
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Tail {
    pub kind: TailKind,
    pub origin: f64,
}

impl Tail {
    #[inline]
    pub fn distance(&self, x: f64) -> f64 {
        (x - self.origin).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    spec: Option<GridSpec>,
    domain_lo: f64,
    domain_hi: f64,
    nodes: Vec<f64>,
    u: Vec<f64>,
    jacobian: Vec<f64>,
    /// Composite-cubic weights per cell, Jacobian included; cell `i` spans
    /// nodes `i..=i+1` and reads the stencil starting at `stencil_start(i)`.
    cells: Vec<[f64; 4]>,
    weights: Vec<f64>,
    coarse: Vec<(usize, f64)>,
    lower_tail: Option<Tail>,
    upper_tail: Option<Tail>,
}

#[inline]
pub(crate) fn stencil_start(cell: usize, n: usize) -> usize {
    cell.saturating_sub(1).min(n - 4)
}

/// Weights integrating the cubic through `u[s..s+4]` over each cell.
/// Two-point Gauss–Legendre is exact for cubics.
fn cubic_cell_coefficients(u: &[f64]) -> Vec<[f64; 4]> {
    let n = u.len();
    let g = 0.5 / 3.0_f64.sqrt();
    (0..n - 1)
        .map(|i| {
            let s = stencil_start(i, n);
            let stencil = [u[s], u[s + 1], u[s + 2], u[s + 3]];
            let half = u[i + 1] - u[i];
            let mid = 0.5 * (u[i] + u[i + 1]);
            let points = [mid - g * half, mid + g * half];
            let mut coef = [0.0; 4];
            for (j, c) in coef.iter_mut().enumerate() {
                for &t in &points {
                    let mut basis = 1.0;
                    for k in 0..4 {
                        if k != j {
                            basis *= (t - stencil[k]) / (stencil[j] - stencil[k]);
                        }
                    }
                    *c += 0.5 * half * basis;
                }
            }
            coef
        })
        .collect()
}

fn total_weights(u: &[f64], jacobian: &[f64]) -> (Vec<[f64; 4]>, Vec<f64>) {
    let n = u.len();
    let mut cells = cubic_cell_coefficients(u);
    let mut weights = alloc::vec![0.0; n];
    for (i, cell) in cells.iter_mut().enumerate() {
        let s = stencil_start(i, n);
        for j in 0..4 {
            cell[j] *= jacobian[s + j];
            weights[s + j] += cell[j];
        }
    }
    (cells, weights)
}

fn coarse_weights(u: &[f64], jacobian: &[f64]) -> Vec<(usize, f64)> {
    let n = u.len();
    let mut idx: Vec<usize> = (0..n).step_by(2).collect();
    if *idx.last().unwrap() != n - 1 {
        idx.push(n - 1);
    }
    let cu: Vec<f64> = idx.iter().map(|&i| u[i]).collect();
    let cj: Vec<f64> = idx.iter().map(|&i| jacobian[i]).collect();
    let (_, w) = total_weights(&cu, &cj);
    idx.into_iter().zip(w).collect()
}

impl Grid {
    /// Builds the grid described by `spec`.
    pub fn from_spec(spec: GridSpec) -> Result<Arc<Grid>> {
        let n = spec.nodes();
        if n < MIN_NODES {
            return Err(Error::InvalidInput(alloc::format!(
                "a grid needs at least {MIN_NODES} nodes, got {n}"
            )));
        }
        let (nodes, u, jacobian, lower_tail, upper_tail) = match spec {
            GridSpec::Uniform { lo, hi, .. } => {
                check_interval(lo, hi)?;
                let width = hi - lo;
                let step = 1.0 / (n - 1) as f64;
                let u: Vec<f64> = (0..n).map(|k| k as f64 * step).collect();
                let mut nodes: Vec<f64> = u.iter().map(|&t| lo + width * t).collect();
                nodes[n - 1] = hi;
                (nodes, u, alloc::vec![width; n], None, None)
            }
            GridSpec::OpenInterval { lo, hi, .. } => {
                check_interval(lo, hi)?;
                let width = hi - lo;
                let edge = ENDPOINT_OFFSET / (1.0 - ENDPOINT_OFFSET);
                let y_max = -0.5 * edge.ln();
                let t_max = (y_max / FRAC_PI_2).asinh();
                let step = 2.0 * t_max / (n - 1) as f64;
                let centre = (n - 1) as f64 / 2.0;
                let mut nodes = Vec::with_capacity(n);
                let mut u = Vec::with_capacity(n);
                let mut jacobian = Vec::with_capacity(n);
                for k in 0..n {
                    let t = (k as f64 - centre) * step;
                    let y = FRAC_PI_2 * t.sinh();
                    let e = (-2.0 * y.abs()).exp();
                    let d = width * e / (1.0 + e);
                    let x = if t < 0.0 {
                        lo + d
                    } else if t > 0.0 {
                        hi - d
                    } else {
                        0.5 * (lo + hi)
                    };
                    nodes.push(x);
                    u.push(t);
                    jacobian.push(width * PI * t.cosh() * e / ((1.0 + e) * (1.0 + e)));
                }
                let tails = (
                    Some(Tail {
                        kind: TailKind::Endpoint,
                        origin: lo,
                    }),
                    Some(Tail {
                        kind: TailKind::Endpoint,
                        origin: hi,
                    }),
                );
                (nodes, u, jacobian, tails.0, tails.1)
            }
            GridSpec::HalfLine { origin, near, far, .. } => {
                if !(origin.is_finite() && near > 0.0 && far > near && far.is_finite()) {
                    return Err(Error::InvalidInput(alloc::format!(
                        "half-line grid needs finite origin and 0 < near < far < ∞, got origin={origin} near={near} far={far}"
                    )));
                }
                let (a, b) = (near.ln(), far.ln());
                let step = (b - a) / (n - 1) as f64;
                let u: Vec<f64> = (0..n)
                    .map(|k| if k == n - 1 { b } else { a + k as f64 * step })
                    .collect();
                let jacobian: Vec<f64> = u.iter().map(|t| t.exp()).collect();
                let nodes: Vec<f64> = jacobian.iter().map(|d| origin + d).collect();
                (
                    nodes,
                    u,
                    jacobian,
                    Some(Tail {
                        kind: TailKind::Endpoint,
                        origin,
                    }),
                    Some(Tail {
                        kind: TailKind::Infinite,
                        origin,
                    }),
                )
            }
            GridSpec::RealLine { center, scale, .. } => {
                if !(center.is_finite() && scale.is_finite() && scale > 0.0) {
                    return Err(Error::InvalidInput(alloc::format!(
                        "real-line grid needs finite center and scale > 0, got center={center} scale={scale}"
                    )));
                }
                let step = PI / n as f64;
                let centre = (n - 1) as f64 / 2.0;
                let u: Vec<f64> = (0..n).map(|k| (k as f64 - centre) * step).collect();
                let nodes: Vec<f64> = u.iter().map(|t| center + scale * t.tan()).collect();
                let jacobian: Vec<f64> = u
                    .iter()
                    .map(|t| {
                        let c = t.cos();
                        scale / (c * c)
                    })
                    .collect();
                let tail = |kind| Tail { kind, origin: center };
                (
                    nodes,
                    u,
                    jacobian,
                    Some(tail(TailKind::Infinite)),
                    Some(tail(TailKind::Infinite)),
                )
            }
        };
        let (domain_lo, domain_hi) = spec.domain();
        Self::assemble(
            Some(spec),
            domain_lo,
            domain_hi,
            nodes,
            u,
            jacobian,
            lower_tail,
            upper_tail,
        )
    }

    /// Grid over explicit nodes; quadrature runs directly in `x`.
    ///
    /// A boundary that lies beyond the outermost node (or is infinite) is
    /// treated as open and gets a tail extrapolation.
    pub fn from_nodes(domain_lo: f64, domain_hi: f64, nodes: Vec<f64>) -> Result<Arc<Grid>> {
        let n = nodes.len();
        if n < MIN_NODES {
            return Err(Error::InvalidInput(alloc::format!(
                "a grid needs at least {MIN_NODES} nodes, got {n}"
            )));
        }
        if nodes.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("grid nodes must be finite".into()));
        }
        if let Some(k) = nodes.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(alloc::format!(
                "grid nodes must be strictly increasing (node {} = {} follows {})",
                k + 1,
                nodes[k + 1],
                nodes[k]
            )));
        }
        if domain_lo.is_nan() || domain_hi.is_nan() || nodes[0] < domain_lo || nodes[n - 1] > domain_hi {
            return Err(Error::InvalidInput(alloc::format!(
                "nodes [{}, {}] fall outside the domain ({domain_lo}, {domain_hi})",
                nodes[0],
                nodes[n - 1]
            )));
        }
        let lower_tail = if domain_lo == f64::NEG_INFINITY {
            Some(Tail {
                kind: TailKind::Infinite,
                origin: nodes[n - 1],
            })
        } else if nodes[0] > domain_lo {
            Some(Tail {
                kind: TailKind::Endpoint,
                origin: domain_lo,
            })
        } else {
            None
        };
        let upper_tail = if domain_hi == f64::INFINITY {
            Some(Tail {
                kind: TailKind::Infinite,
                origin: nodes[0],
            })
        } else if nodes[n - 1] < domain_hi {
            Some(Tail {
                kind: TailKind::Endpoint,
                origin: domain_hi,
            })
        } else {
            None
        };
        let u = nodes.clone();
        Self::assemble(
            None,
            domain_lo,
            domain_hi,
            nodes,
            u,
            alloc::vec![1.0; n],
            lower_tail,
            upper_tail,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        spec: Option<GridSpec>,
        domain_lo: f64,
        domain_hi: f64,
        nodes: Vec<f64>,
        u: Vec<f64>,
        jacobian: Vec<f64>,
        lower_tail: Option<Tail>,
        upper_tail: Option<Tail>,
    ) -> Result<Arc<Grid>> {
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "grid layout produced non-increasing nodes; use fewer nodes or a wider domain".into(),
            ));
        }
        let (cells, weights) = total_weights(&u, &jacobian);
        let coarse = coarse_weights(&u, &jacobian);
        Ok(Arc::new(Grid {
            spec,
            domain_lo,
            domain_hi,
            nodes,
            u,
            jacobian,
            cells,
            weights,
            coarse,
            lower_tail,
            upper_tail,
        }))
    }

    pub fn spec(&self) -> Option<GridSpec> {
        self.spec
    }

    pub fn domain_lo(&self) -> f64 {
        self.domain_lo
    }

    pub fn domain_hi(&self) -> f64 {
        self.domain_hi
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Quadrature weights: `Σ weights[k]·f(nodes[k]) ≈ ∫ f` over the node span.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn reference(&self) -> &[f64] {
        &self.u
    }

    pub(crate) fn jacobian(&self) -> &[f64] {
        &self.jacobian
    }

    pub(crate) fn cells(&self) -> &[[f64; 4]] {
        &self.cells
    }

    pub(crate) fn coarse(&self) -> &[(usize, f64)] {
        &self.coarse
    }

    pub(crate) fn lower_tail(&self) -> Option<Tail> {
        self.lower_tail
    }

    pub(crate) fn upper_tail(&self) -> Option<Tail> {
        self.upper_tail
    }

    /// Whether two grids have identical nodes and domain.
    pub fn same_as(&self, other: &Grid) -> bool {
        core::ptr::eq(self, other)
            || (self.domain_lo == other.domain_lo && self.domain_hi == other.domain_hi && self.nodes == other.nodes)
    }
}

fn check_interval(lo: f64, hi: f64) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && hi > lo {
        Ok(())
    } else {
        Err(Error::InvalidInput(alloc::format!(
            "interval needs finite lo < hi, got ({lo}, {hi})"
        )))
    }
}

/// A log-density tabulated on a [`Grid`], possibly unnormalized or improper.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: Arc<Grid>,
    log_values: Vec<f64>,
    normalized: bool,
}

impl GridDensity {
    /// Wraps tabulated log-values. `-∞` marks a zero density; NaN and `+∞`
    /// are rejected.
    pub fn new(grid: Arc<Grid>, log_values: Vec<f64>, normalized: bool) -> Result<Self> {
        if log_values.len() != grid.len() {
            return Err(Error::InvalidInput(alloc::format!(
                "{} log-values for {} nodes",
                log_values.len(),
                grid.len()
            )));
        }
        if let Some(k) = log_values.iter().position(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::InvalidInput(alloc::format!(
                "log-density at node {} (x = {}) is {}",
                k,
                grid.nodes()[k],
                log_values[k]
            )));
        }
        Ok(GridDensity {
            grid,
            log_values,
            normalized,
        })
    }

    /// Tabulates `log_density` at every node of `grid`.
    pub fn from_log_fn(grid: Arc<Grid>, log_density: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(|&x| log_density(x)).collect();
        Self::new(grid, values, false)
    }

    /// Same grid, new log-values, flagged unnormalized.
    pub fn with_log_values(&self, log_values: Vec<f64>) -> Result<Self> {
        Self::new(self.grid.clone(), log_values, false)
    }

    pub(crate) fn from_parts_unchecked(grid: Arc<Grid>, log_values: Vec<f64>, normalized: bool) -> Self {
        GridDensity {
            grid,
            log_values,
            normalized,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn domain_lo(&self) -> f64 {
        self.grid.domain_lo
    }

    pub fn domain_hi(&self) -> f64 {
        self.grid.domain_hi
    }

    pub fn nodes(&self) -> &[f64] {
        &self.grid.nodes
    }

    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.log_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_values.is_empty()
    }

    /// Density values `exp(log_values)`.
    pub fn values(&self) -> Vec<f64> {
        self.log_values.iter().map(|l| l.exp()).collect()
    }

    pub fn shares_grid(&self, other: &GridDensity) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same_as(&other.grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_weights_reproduce_the_composite_cubic_rule() {
        let grid = Grid::from_spec(GridSpec::Uniform {
            lo: 0.0,
            hi: 1.0,
            nodes: 17,
        })
        .unwrap();
        let h = 1.0 / 16.0;
        let w = grid.weights();
        // first two cells share the stencil 0..4: (9, 19, -5, 1)/24 and
        // (-1, 13, 13, -1)/24; cell 2 adds -1/24 to node 1
        assert!((w[0] - h * 8.0 / 24.0).abs() < 1e-15);
        assert!((w[1] - h * 31.0 / 24.0).abs() < 1e-15);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn open_interval_nodes_hug_the_endpoints() {
        let grid = Grid::from_spec(GridSpec::unit_interval(2049)).unwrap();
        let nodes = grid.nodes();
        assert!((nodes[0] - ENDPOINT_OFFSET).abs() < 1e-20);
        assert!(((1.0 - nodes[2048]) - ENDPOINT_OFFSET).abs() < 1e-16);
        assert_eq!(nodes[1024], 0.5);
    }

    #[test]
    fn real_line_grid_is_symmetric() {
        let grid = Grid::from_spec(GridSpec::real_line(2049)).unwrap();
        let nodes = grid.nodes();
        assert_eq!(nodes[1024], 0.0);
        for k in 0..1024 {
            assert_eq!(nodes[k], -nodes[2048 - k]);
        }
        assert!(nodes[2048] > 1000.0);
    }

    #[test]
    fn rejects_bad_node_lists() {
        let mut nodes: Vec<f64> = (0..20).map(|k| k as f64).collect();
        assert!(Grid::from_nodes(0.0, 19.0, nodes.clone()).is_ok());
        nodes.swap(3, 4);
        assert!(Grid::from_nodes(0.0, 19.0, nodes).is_err());
        let short: Vec<f64> = (0..8).map(|k| k as f64).collect();
        assert!(Grid::from_nodes(0.0, 7.0, short).is_err());
    }

    #[test]
    fn density_rejects_nan_and_positive_infinity() {
        let grid = Grid::from_spec(GridSpec::Uniform {
            lo: 0.0,
            hi: 1.0,
            nodes: 16,
        })
        .unwrap();
        let mut values = alloc::vec![0.0; 16];
        values[0] = f64::NEG_INFINITY;
        assert!(GridDensity::new(grid.clone(), values.clone(), false).is_ok());
        values[3] = f64::NAN;
        assert!(GridDensity::new(grid.clone(), values.clone(), false).is_err());
        values[3] = f64::INFINITY;
        assert!(GridDensity::new(grid.clone(), values, false).is_err());
        assert!(GridDensity::new(grid, alloc::vec![0.0; 15], false).is_err());
    }
}
