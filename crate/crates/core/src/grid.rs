//! Uniform one-dimensional grids and functions sampled on them.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::report::fmt_g;

/// Uniform grid `x_i = x_min + i*h`, `h = (x_max - x_min)/(n - 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n: usize,
}

impl Grid {
    pub const MIN_NODES: usize = 8;

    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_min >= x_max {
            return Err(Error::InvalidGrid(format!(
                "need finite x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if n < Self::MIN_NODES {
            return Err(Error::InvalidGrid(format!(
                "need at least {} nodes, got {n}",
                Self::MIN_NODES
            )));
        }
        Ok(Grid { x_min, x_max, n })
    }

    /// Grid of `n` nodes with spacing `h` whose node `origin_index` sits at 0.
    pub fn with_node_at_zero(h: f64, n: usize, origin_index: usize) -> Result<Self> {
        let x_min = -(origin_index as f64) * h;
        Grid::new(x_min, x_min + (n - 1) as f64 * h, n)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn h(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.n - 1 {
            self.x_max
        } else {
            self.x_min + i as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Cell `i` and fractional offset `s in [0, 1]` with `x = x_i + s*h`,
    /// or `None` when `x` lies outside the grid.
    pub fn locate(&self, x: f64) -> Option<(usize, f64)> {
        if !(self.x_min..=self.x_max).contains(&x) {
            return None;
        }
        let pos = (x - self.x_min) / self.h();
        let i = (pos.floor() as usize).min(self.n - 2);
        Some((i, (pos - i as f64).clamp(0.0, 1.0)))
    }

    pub fn nearest(&self, x: f64) -> usize {
        let pos = ((x - self.x_min) / self.h()).round();
        pos.clamp(0.0, (self.n - 1) as f64) as usize
    }

    /// Indices at distance at least `margin` (a fraction of the domain
    /// length) from both edges.
    pub fn window(&self, margin: f64) -> Range<usize> {
        let cells = (margin * (self.n - 1) as f64).ceil() as usize;
        let lo = cells.min(self.n / 2);
        let hi = (self.n - cells).max(lo);
        lo..hi
    }

    /// The default interior window used for duality assertions: 10% of the
    /// domain length from each edge.
    pub fn interior(&self) -> Range<usize> {
        self.window(0.1)
    }

    /// Same spacing, padded on each side by `pad` (a fraction of the domain
    /// length, rounded to whole cells). Returns the padded grid and the index
    /// of this grid's first node inside it.
    pub fn enlarged(&self, pad: f64) -> (Grid, usize) {
        let cells = (pad * (self.n - 1) as f64).round() as usize;
        let h = self.h();
        let g = Grid {
            x_min: self.x_min - cells as f64 * h,
            x_max: self.x_max + cells as f64 * h,
            n: self.n + 2 * cells,
        };
        (g, cells)
    }

    pub fn with_n(&self, n: usize) -> Result<Grid> {
        Grid::new(self.x_min, self.x_max, n)
    }

    /// Sample `f` at every node.
    pub fn sample(&self, mut f: impl FnMut(f64) -> f64) -> Vec<f64> {
        (0..self.n).map(|i| f(self.node(i))).collect()
    }

    /// Linear interpolation of nodal values at `x`.
    pub fn interpolate(&self, values: &[f64], x: f64) -> Option<f64> {
        let (i, s) = self.locate(x)?;
        Some(values[i] * (1.0 - s) + values[i + 1] * s)
    }
}

/// How the values of a [`GridFn`] are to be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// Point values `f(x_i)`.
    Point,
    /// Cell-averaged density of a measure: cell `i` carries mass `h * v_i`.
    Density,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFn {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub sampling: Sampling,
}

impl GridFn {
    pub fn new(grid: Grid, values: Vec<f64>, sampling: Sampling) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::Invalid(format!(
                "grid function has {} values for {} nodes",
                values.len(),
                grid.n()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite value at node {i}")));
        }
        Ok(GridFn {
            grid,
            values,
            sampling,
        })
    }

    pub fn point(grid: Grid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, values, Sampling::Point)
    }

    pub fn density(grid: Grid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, values, Sampling::Density)
    }

    pub fn from_fn(grid: Grid, f: impl FnMut(f64) -> f64) -> Self {
        GridFn {
            grid,
            values: grid.sample(f),
            sampling: Sampling::Point,
        }
    }

    /// Unit point mass placed in the cell whose left node is nearest to `a`.
    pub fn point_mass(grid: Grid, a: f64) -> Self {
        let mut values = vec![0.0; grid.n()];
        values[grid.nearest(a)] = 1.0 / grid.h();
        GridFn {
            grid,
            values,
            sampling: Sampling::Density,
        }
    }

    /// Total mass when read as a density.
    pub fn mass(&self) -> f64 {
        self.grid.h() * self.values.iter().sum::<f64>()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Two-column CSV `x,value` with a header row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,value\n");
        for (i, v) in self.values.iter().enumerate() {
            s.push_str(&fmt_g(self.grid.node(i)));
            s.push(',');
            s.push_str(&fmt_g(*v));
            s.push('\n');
        }
        s
    }
}
