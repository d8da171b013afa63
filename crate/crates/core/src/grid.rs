//! Uniform one-dimensional grids and complex functions sampled on them.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::numlin::CMat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    /// `[-R, R]` with `N + 1` nodes.
    Interval,
    /// The circle of length `2R` with `N` nodes.
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    kind: GridKind,
    half_width: f64,
    intervals: usize,
}

impl Grid {
    /// Panics unless `half_width > 0` and `intervals >= 1`.
    pub fn new(kind: GridKind, half_width: f64, intervals: usize) -> Self {
        assert!(
            half_width > 0.0 && half_width.is_finite(),
            "half width must be positive"
        );
        assert!(intervals >= 1, "need at least one interval");
        Grid {
            kind,
            half_width,
            intervals,
        }
    }

    pub fn interval(half_width: f64, intervals: usize) -> Self {
        Grid::new(GridKind::Interval, half_width, intervals)
    }

    pub fn periodic(half_width: f64, intervals: usize) -> Self {
        Grid::new(GridKind::Periodic, half_width, intervals)
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_width / self.intervals as f64
    }

    pub fn len(&self) -> usize {
        match self.kind {
            GridKind::Interval => self.intervals + 1,
            GridKind::Periodic => self.intervals,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x(&self, j: usize) -> f64 {
        if self.kind == GridKind::Interval && j == self.intervals {
            return self.half_width;
        }
        -self.half_width + j as f64 * self.h()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.x(j)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<Complex64>,
}

impl GridFunction {
    /// Panics if the value count does not match the grid or a value is not finite.
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Self {
        assert_eq!(values.len(), grid.len(), "one value per node");
        assert!(
            values.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
            "grid function values must be finite"
        );
        GridFunction { grid, values }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> Complex64) -> Self {
        GridFunction::new(grid, grid.nodes().into_iter().map(f).collect())
    }

    pub fn from_real_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        GridFunction::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    pub fn constant(grid: Grid, c: Complex64) -> Self {
        GridFunction::new(grid, vec![c; grid.len()])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn conj(&self) -> Self {
        GridFunction {
            grid: self.grid,
            values: self.values.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn mul(&self, other: &GridFunction) -> Self {
        assert_eq!(self.len(), other.len());
        GridFunction {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        }
    }

    pub fn sub(&self, other: &GridFunction) -> Self {
        assert_eq!(self.len(), other.len());
        GridFunction {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }

    /// Diagonal multiplication operator.
    pub fn diag(&self) -> CMat {
        CMat::from_diagonal(&nalgebra::DVector::from_column_slice(&self.values))
    }

    /// `max_j |f_{j+1} - f_{j-1}| / 2h`, wrapping on periodic grids and
    /// one-sided at interval ends.
    pub fn max_central_difference(&self) -> f64 {
        let n = self.len();
        let h = self.grid.h();
        let periodic = self.grid.kind == GridKind::Periodic;
        (0..n)
            .map(|j| {
                let (lo, hi) = if periodic {
                    ((j + n - 1) % n, (j + 1) % n)
                } else {
                    (j.saturating_sub(1), (j + 1).min(n - 1))
                };
                let span = if periodic { 2.0 } else { (hi - lo) as f64 };
                (self.values[hi] - self.values[lo]).norm() / (span * h)
            })
            .fold(0.0, f64::max)
    }
}
