//! Order-k duality: the pairing operator `F`, matrix duals `F L' F⁻¹`, the
//! closed-form duals of diffusions and jump processes, and the monotonicity
//! and self-duality checks.

mod analytic;
mod monotone;
mod selfdual;

pub use analytic::{
    analytic_dual, diffusion_coefficients, dual_diffusion_analytic, dual_jump_analytic,
    AnalyticDual, DualDiagnostics, DualGeneratorResult,
};
pub use monotone::{check_monotone_order_k, check_monotone_spec, MonotoneReport};
pub use selfdual::{check_self_dual, SelfDualOrder};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fractional::{integral_weights, solve_lower_toeplitz, solve_upper_toeplitz};
use crate::grid::Grid;
use crate::model::GeneratorMatrix;

/// `F Q(y) = ∫ (x - y)_+^{k-1}/Γ(k) Q(dx)` on the grid, mapping cell densities
/// in `x` to nodal values in `y`.
///
/// For `k ≤ 2` this is the product-integration matrix of `I_k^+`: upper
/// triangular Toeplitz with diagonal `h^k/Γ(k+1)`. For `k > 2` the direct
/// weights have an unstable inverse, so `F` is built as `S^m W_r` with `S`
/// the step-sum matrix (`k = 1`), `m = ⌈k⌉ - 2` and `r = k - m ∈ (1, 2]`;
/// the factors commute and each inverts stably.
#[derive(Debug, Clone, PartialEq)]
pub struct FOperator {
    k: f64,
    grid: Grid,
    steps: usize,
    base: Vec<f64>,
}

impl FOperator {
    pub fn new(k: f64, grid: &Grid) -> Result<Self> {
        if !k.is_finite() || k <= 0.0 {
            return Err(Error::OrderNonPositive(k));
        }
        let steps = if k > 2.0 { k.ceil() as usize - 2 } else { 0 };
        let r = k - steps as f64;
        let base = integral_weights(r, grid.h(), grid.n());
        if !(base[0] > 0.0) {
            return Err(Error::SingularF);
        }
        Ok(FOperator {
            k,
            grid: *grid,
            steps,
            base,
        })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `F q`.
    pub fn apply(&self, q: &[f64]) -> Vec<f64> {
        let n = q.len();
        let w = &self.base;
        let mut g: Vec<f64> = (0..n)
            .map(|i| (i..n).map(|j| w[j - i] * q[j]).sum())
            .collect();
        let h = self.grid.h();
        for _ in 0..self.steps {
            let mut acc = 0.0;
            for v in g.iter_mut().rev() {
                acc += *v;
                *v = h * acc;
            }
        }
        g
    }

    /// `F⁻¹ g`.
    pub fn solve(&self, g: &[f64]) -> Vec<f64> {
        let h = self.grid.h();
        let mut v = g.to_vec();
        for _ in 0..self.steps {
            for i in 0..v.len() {
                let next = v.get(i + 1).copied().unwrap_or(0.0);
                v[i] = (v[i] - next) / h;
            }
        }
        solve_upper_toeplitz(&self.base, &v)
    }

    /// Dense `F`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.grid.n();
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.apply(&e);
            m.set_column(j, &nalgebra::DVector::from_vec(col));
            e[j] = 0.0;
        }
        m
    }

    /// `F B`.
    pub fn left_mul(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for j in 0..b.ncols() {
            let col: Vec<f64> = b.column(j).iter().copied().collect();
            out.set_column(j, &nalgebra::DVector::from_vec(self.apply(&col)));
        }
        out
    }

    /// `B F⁻¹`, row by row.
    pub fn right_solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let h = self.grid.h();
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for i in 0..b.nrows() {
            // x F = row  <=>  Fᵀ xᵀ = rowᵀ; Fᵀ = W_rᵀ (Sᵀ)^m with lower factors
            let mut v: Vec<f64> = b.row(i).iter().copied().collect();
            for _ in 0..self.steps {
                for j in (0..v.len()).rev() {
                    let prev = if j > 0 { v[j - 1] } else { 0.0 };
                    v[j] = (v[j] - prev) / h;
                }
            }
            let x = solve_lower_toeplitz(&self.base, &v);
            for (j, val) in x.into_iter().enumerate() {
                out[(i, j)] = val;
            }
        }
        out
    }
}

/// `L^D = F L' F⁻¹`, where `L' = Lᵀ` is the adjoint for the pairing
/// `(f, μ) = h Σ f_i μ_i`.
pub fn dual_matrix(l: &GeneratorMatrix, f: &FOperator) -> Result<GeneratorMatrix> {
    if l.grid != f.grid {
        return Err(Error::GridMismatch);
    }
    let b = f.left_mul(&l.m.transpose());
    Ok(GeneratorMatrix::new(l.grid, f.right_solve(&b)))
}

/// `‖L^D F − F L'‖_max`.
pub fn intertwining_residual(
    dual: &GeneratorMatrix,
    l: &GeneratorMatrix,
    f: &FOperator,
) -> Result<f64> {
    if l.grid != f.grid || dual.grid != f.grid {
        return Err(Error::GridMismatch);
    }
    let fm = f.matrix();
    let lhs = &dual.m * &fm;
    let rhs = &fm * l.m.transpose();
    Ok((lhs - rhs).amax())
}

/// Row moments of a generator matrix within `reach` nodes of the diagonal:
/// `(Σ m_ij, Σ m_ij (x_j - x_i), ½ Σ m_ij (x_j - x_i)²)`, i.e. killing rate,
/// drift and diffusion coefficient.
pub fn row_moments(m: &GeneratorMatrix, row: usize, reach: usize) -> (f64, f64, f64) {
    let g = &m.grid;
    let n = g.n();
    let x = g.node(row);
    let lo = row.saturating_sub(reach);
    let hi = (row + reach).min(n - 1);
    let mut out = (0.0, 0.0, 0.0);
    for j in lo..=hi {
        let d = g.node(j) - x;
        let v = m.m[(row, j)];
        out.0 += v;
        out.1 += v * d;
        out.2 += 0.5 * v * d * d;
    }
    out
}

/// Drift extracted from the local row moments at every interior node.
pub fn extract_drift(m: &GeneratorMatrix, reach: usize) -> Vec<(f64, f64)> {
    m.grid
        .interior()
        .map(|i| (m.grid.node(i), row_moments(m, i, reach).1))
        .collect()
}

/// Diffusion coefficient extracted from the local row moments.
pub fn extract_diffusion(m: &GeneratorMatrix, reach: usize) -> Vec<(f64, f64)> {
    m.grid
        .interior()
        .map(|i| (m.grid.node(i), row_moments(m, i, reach).2))
        .collect()
}

/// Relative discrepancy `max |(A - B) g| / max |B g|` on the interior window,
/// maximised over a family of smooth bumps.
pub fn operator_discrepancy(
    a: &GeneratorMatrix,
    b: &GeneratorMatrix,
    probes: &[Vec<f64>],
) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    let mut worst = 0.0f64;
    for g in probes {
        let ag = a.apply(g);
        let bg = b.apply(g);
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for i in a.grid.interior() {
            num = num.max((ag[i] - bg[i]).abs());
            den = den.max(bg[i].abs());
        }
        if den > 0.0 {
            worst = worst.max(num / den);
        }
    }
    Ok(worst)
}

/// Smooth compactly supported bumps centred across the interior window,
/// of half-width a fifth of the domain.
pub fn probe_bumps(grid: &Grid, count: usize) -> Vec<Vec<f64>> {
    let len = grid.len();
    let width = 0.2 * len;
    let lo = grid.x_min() + 0.3 * len;
    let hi = grid.x_max() - 0.3 * len;
    (0..count)
        .map(|c| {
            let centre = if count == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * c as f64 / (count - 1) as f64
            };
            grid.sample(|x| {
                let u = (x - centre) / width;
                if u.abs() < 1.0 {
                    (1.0 - 1.0 / (1.0 - u * u)).exp()
                } else {
                    0.0
                }
            })
        })
        .collect()
}
