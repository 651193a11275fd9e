use std::ops::Range;

use nalgebra::DMatrix;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::evolution::transition;
use crate::fractional::{derivative_matrix, integral_weights, FracOrder, Scheme};
use crate::grid::Grid;
use crate::model::{discretize, GeneratorMatrix, GeneratorSpec};

/// Outcome of the order-`k` stochastic monotonicity check.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneReport {
    pub k: f64,
    pub t: f64,
    /// `min ∂_x^k E (X_t^x - y)_+^{k-1} / Γ(k)` over interior `(x, y)`.
    pub min_derivative: f64,
    pub tol: f64,
    pub monotone: bool,
    /// `max_y |∂_x^{k-1} E(...)/Γ(k) - 1|` at the right edge.
    pub right_edge_error: f64,
    /// `max_y |∂_x^{k-1} E(...)/Γ(k)|` at the left edge.
    pub left_edge_error: f64,
}

/// Check on the matrix's own grid; edge values are read two nodes inside the
/// boundary.
pub fn check_monotone_order_k(
    l: &GeneratorMatrix,
    k: f64,
    t: f64,
    tol: Option<f64>,
) -> Result<MonotoneReport> {
    let n = l.grid.n();
    let win = l.grid.interior();
    monotone_on(l, k, t, tol, win.clone(), win, (2, n - 3))
}

/// Check for a generator spec: the transition is computed on a grid enlarged
/// by 50% so that `(x, y)` in the interior of `grid` are far from the
/// truncation, and edge values are read at the ends of `grid`.
pub fn check_monotone_spec(
    spec: &GeneratorSpec,
    grid: &Grid,
    k: f64,
    t: f64,
    tol: Option<f64>,
) -> Result<MonotoneReport> {
    let (big, off) = grid.enlarged(0.5);
    let l = discretize(spec, &big)?;
    let win = grid.interior();
    let shifted = win.start + off..win.end + off;
    monotone_on(
        &l,
        k,
        t,
        tol,
        shifted.clone(),
        shifted,
        (off, off + grid.n() - 1),
    )
}

fn monotone_on(
    l: &GeneratorMatrix,
    k: f64,
    t: f64,
    tol: Option<f64>,
    xs: Range<usize>,
    ys: Range<usize>,
    edges: (usize, usize),
) -> Result<MonotoneReport> {
    if !(t > 0.0) {
        return Err(Error::BadInterval { s: 0.0, t });
    }
    if !(k > 0.0) {
        return Err(Error::OrderNonPositive(k));
    }
    let grid = l.grid;
    let n = grid.n();
    let h = grid.h();
    let p = transition(l, t)?;

    // K[z, y] = (z - y)_+^{k-1} / Γ(k), cell averaged when singular
    let pw = integral_weights(k, h, n);
    let rg = 1.0 / gamma(k);
    let ycols: Vec<usize> = ys.clone().collect();
    let kern = DMatrix::from_fn(n, ycols.len(), |z, c| {
        let iy = ycols[c];
        if z < iy {
            0.0
        } else if k < 1.0 {
            pw[z - iy] / h
        } else if k == 1.0 {
            1.0
        } else {
            ((z - iy) as f64 * h).powf(k - 1.0) * rg
        }
    });
    let g = &p * &kern;
    let scheme = if k == k.round() {
        Scheme::Weighted
    } else {
        Scheme::Grunwald
    };
    let dk = derivative_matrix(FracOrder::plus(k)?, &grid, scheme)?;
    let deriv = &dk * &g;
    let lower = if (k - 1.0).abs() < 1e-12 {
        g.clone()
    } else if k > 1.0 {
        &derivative_matrix(FracOrder::plus(k - 1.0)?, &grid, scheme)? * &g
    } else {
        &crate::fractional::integral_matrix(FracOrder::minus(1.0 - k)?, &grid)? * &g
    };

    let tol = tol.unwrap_or(1e-6 * g.amax());
    let mut min_derivative = f64::INFINITY;
    for x in xs {
        for c in 0..ycols.len() {
            min_derivative = min_derivative.min(deriv[(x, c)]);
        }
    }
    let (le, re) = edges;
    let mut left_edge_error = 0.0f64;
    let mut right_edge_error = 0.0f64;
    for c in 0..ycols.len() {
        left_edge_error = left_edge_error.max(lower[(le, c)].abs());
        right_edge_error = right_edge_error.max((lower[(re, c)] - 1.0).abs());
    }
    Ok(MonotoneReport {
        k,
        t,
        min_derivative,
        tol,
        monotone: min_derivative >= -tol,
        right_edge_error,
        left_edge_error,
    })
}
