//! Uniform periodic 1D grids, cell-averaged solution fields, discrete
//! norms/seminorms, and transfer between nested grids.
//!
//! All boundary treatment in this crate is periodic: a field represents one
//! period of a periodically extended function, and every norm is taken over
//! exactly one period.

use crate::numeric::{gauss_legendre, pairwise_sum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("domain must satisfy x_max > x_min, got [{0}, {1}]")]
    InvalidDomain(f64, f64),
    #[error("grid needs at least 2 cells, got {0}")]
    TooFewCells(usize),
    #[error("grids do not cover the same domain")]
    DomainMismatch,
    #[error("cell counts {0} and {1} are not related by an integer ratio")]
    NotNested(usize, usize),
    #[error("cell average produced a non-finite value in cell {0}")]
    NonFiniteAverage(usize),
}

/// A uniform grid of cells on the periodic interval [x_min, x_max].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    x_min: f64,
    x_max: f64,
    n_cells: usize,
    dx: f64,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, n_cells: usize) -> Result<Self, GridError> {
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(GridError::InvalidDomain(x_min, x_max));
        }
        if n_cells < 2 {
            return Err(GridError::TooFewCells(n_cells));
        }
        let dx = (x_max - x_min) / n_cells as f64;
        Ok(GridSpec {
            x_min,
            x_max,
            n_cells,
            dx,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn cell_center(&self, j: usize) -> f64 {
        self.x_min + (j as f64 + 0.5) * self.dx
    }

    pub fn cell_left(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx
    }

    /// The same domain with `factor` times as many cells.
    pub fn refined(&self, factor: usize) -> GridSpec {
        GridSpec::new(self.x_min, self.x_max, self.n_cells * factor)
            .expect("refinement of a valid grid is valid")
    }

    pub fn same_domain(&self, other: &GridSpec) -> bool {
        self.x_min == other.x_min && self.x_max == other.x_max
    }
}

/// Cell averages of a quantity on a [`GridSpec`] at a fixed time.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub time: f64,
}

impl SolutionField {
    pub fn new(grid: GridSpec, values: Vec<f64>, time: f64) -> Self {
        assert_eq!(values.len(), grid.n_cells(), "one value per cell");
        SolutionField { grid, values, time }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        SolutionField {
            values: vec![0.0; grid.n_cells()],
            grid,
            time: 0.0,
        }
    }

    /// Discrete L1 norm over one period: sum |u_j| dx.
    pub fn l1_norm(&self) -> f64 {
        let terms: Vec<f64> = self.values.iter().map(|v| v.abs()).collect();
        pairwise_sum(&terms) * self.grid.dx()
    }

    /// Max norm over the cells.
    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Total variation over one period, with periodic wraparound.
    pub fn bv_seminorm(&self) -> f64 {
        let n = self.values.len();
        let terms: Vec<f64> = (0..n)
            .map(|j| (self.values[(j + 1) % n] - self.values[j]).abs())
            .collect();
        pairwise_sum(&terms)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |a, &v| a.min(v))
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v))
    }

    /// Pointwise map of the cell values, keeping grid and time.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SolutionField {
        SolutionField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
            time: self.time,
        }
    }
}

/// Cell averages of `u0` by a fixed-order composite rule: 5-point
/// Gauss-Legendre on each cell.
pub fn cell_average<F: Fn(f64) -> f64>(u0: F, grid: GridSpec) -> Result<SolutionField, GridError> {
    cell_average_piecewise(u0, &[], grid)
}

/// Cell averages of `u0` where the integrand is known to be smooth except at
/// the given breakpoints: each cell is split into panels at the breakpoints
/// it contains and a 5-point Gauss-Legendre rule is applied per panel. For
/// piecewise-constant data with listed jumps this is exact.
pub fn cell_average_piecewise<F: Fn(f64) -> f64>(
    u0: F,
    breakpoints: &[f64],
    grid: GridSpec,
) -> Result<SolutionField, GridError> {
    let (nodes, weights) = gauss_legendre(5);
    let mut values = Vec::with_capacity(grid.n_cells());
    let mut breaks: Vec<f64> = breakpoints.to_vec();
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for j in 0..grid.n_cells() {
        let a = grid.cell_left(j);
        let b = grid.cell_left(j + 1);
        let mut panel_edges = vec![a];
        panel_edges.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
        panel_edges.push(b);
        let mut integral = 0.0;
        for panel in panel_edges.windows(2) {
            let (pa, pb) = (panel[0], panel[1]);
            let mid = 0.5 * (pa + pb);
            let half = 0.5 * (pb - pa);
            for (x, w) in nodes.iter().zip(&weights) {
                integral += w * half * u0(mid + half * x);
            }
        }
        let avg = integral / grid.dx();
        if !avg.is_finite() {
            return Err(GridError::NonFiniteAverage(j));
        }
        values.push(avg);
    }
    Ok(SolutionField {
        grid,
        values,
        time: 0.0,
    })
}

/// Piecewise-constant injection of a field onto a nested finer grid: every
/// coarse value is copied to its child cells, so the L1, max and BV norms are
/// preserved.
pub fn prolong(u: &SolutionField, fine: GridSpec) -> Result<SolutionField, GridError> {
    if !u.grid.same_domain(&fine) {
        return Err(GridError::DomainMismatch);
    }
    let (nc, nf) = (u.grid.n_cells(), fine.n_cells());
    if nf % nc != 0 {
        return Err(GridError::NotNested(nc, nf));
    }
    let r = nf / nc;
    let mut values = Vec::with_capacity(nf);
    for &v in &u.values {
        values.extend(std::iter::repeat_n(v, r));
    }
    Ok(SolutionField {
        grid: fine,
        values,
        time: u.time,
    })
}

/// Cell-averaging restriction onto a nested coarser grid; the right inverse
/// of [`prolong`].
pub fn restrict(u: &SolutionField, coarse: GridSpec) -> Result<SolutionField, GridError> {
    if !u.grid.same_domain(&coarse) {
        return Err(GridError::DomainMismatch);
    }
    let (nc, nf) = (coarse.n_cells(), u.grid.n_cells());
    if nf % nc != 0 {
        return Err(GridError::NotNested(nc, nf));
    }
    let r = nf / nc;
    let inv = 1.0 / r as f64;
    let values = (0..nc)
        .map(|j| u.values[j * r..(j + 1) * r].iter().sum::<f64>() * inv)
        .collect();
    Ok(SolutionField {
        grid: coarse,
        values,
        time: u.time,
    })
}

/// Discrete L1 distance of two fields on (possibly different) nested grids:
/// both are prolonged to the finer grid, then the L1 norm of the difference
/// is taken.
pub fn l1_distance(u: &SolutionField, v: &SolutionField) -> Result<f64, GridError> {
    if !u.grid.same_domain(&v.grid) {
        return Err(GridError::DomainMismatch);
    }
    let (a, b) = if u.grid.n_cells() >= v.grid.n_cells() {
        (u, v)
    } else {
        (v, u)
    };
    let bp = prolong(b, a.grid)?;
    let terms: Vec<f64> = a
        .values
        .iter()
        .zip(&bp.values)
        .map(|(x, y)| (x - y).abs())
        .collect();
    Ok(pairwise_sum(&terms) * a.grid.dx())
}
