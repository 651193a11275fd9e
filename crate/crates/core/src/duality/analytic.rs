use nalgebra::DMatrix;
use statrs::function::gamma::gamma;

use super::{dual_matrix, operator_discrepancy, probe_bumps, FOperator};
use crate::error::{Error, Result};
use crate::expr::diff::{add, mul, neg};
use crate::expr::{Expr, Var};
use crate::fractional::{derivative_matrix, integral_matrix, integral_weights, FracOrder, Scheme};
use crate::grid::Grid;
use crate::model::{add_diffusion_drift, discretize, GeneratorMatrix, GeneratorSpec, JumpSpec};

/// Closed-form dual generator. Coefficients are functions of the dual
/// variable, written in `x`.
#[derive(Debug, Clone)]
pub struct AnalyticDual {
    pub a_dual: Expr,
    pub b_dual: Expr,
    /// Potential term `c(y) g(y)`; positive values create mass.
    pub killing: Expr,
    /// `jump[(i, j)]`: dual jump density from `y_i` to `x_j`.
    pub jump: Option<DMatrix<f64>>,
    /// Discretization of the closed form on the same grid.
    pub matrix: GeneratorMatrix,
}

#[derive(Debug, Clone, Default)]
pub struct DualDiagnostics {
    /// The dual jump density is nonnegative (to `tol`) on the interior window.
    pub monotone_ok: bool,
    pub min_jump_density: f64,
    /// Residual of the limit condition at `+∞`, read at the right edge of a
    /// grid enlarged by 50%.
    pub limit_condition_residual: f64,
    /// Residual of the limit condition at `-∞` (zero for diffusions).
    pub left_limit_residual: f64,
    /// The limit condition holds only as an inequality: the dual loses mass.
    pub sub_markov: bool,
    /// Relative interior discrepancy between the closed form and the matrix dual.
    pub discrepancy: Option<f64>,
    pub tol: f64,
}

impl DualDiagnostics {
    /// Conditions for a Markov or sub-Markov dual hold.
    pub fn dual_exists(&self) -> bool {
        self.monotone_ok && (self.limit_condition_residual <= self.tol || self.sub_markov)
    }
}

#[derive(Debug, Clone)]
pub struct DualGeneratorResult {
    /// `F L' F⁻¹` on the grid.
    pub matrix: GeneratorMatrix,
    pub analytic: Option<AnalyticDual>,
    pub diagnostics: DualDiagnostics,
}

fn recip_gamma(z: f64) -> f64 {
    if z <= 0.0 && z == z.round() {
        0.0
    } else {
        1.0 / gamma(z)
    }
}

/// `x`-derivative of order `s` on the grid: Weighted Grünwald–Letnikov for
/// `s > 0`, identity for `s = 0`, left fractional integral for `s < 0`.
fn left_derivative(s: f64, grid: &Grid) -> Result<DMatrix<f64>> {
    if s.abs() < 1e-12 {
        Ok(DMatrix::identity(grid.n(), grid.n()))
    } else if s > 0.0 {
        derivative_matrix(FracOrder::plus(s)?, grid, Scheme::Weighted)
    } else {
        integral_matrix(FracOrder::minus(-s)?, grid)
    }
}

fn eval_all(e: &Expr, xs: &[f64], what: &str) -> Result<Vec<f64>> {
    xs.iter()
        .map(|&x| {
            e.eval_x(x)
                .map_err(|err| Error::SmoothnessUnavailable(format!("{what} at x = {x}: {err}")))
        })
        .collect()
}

/// Dual diffusion `a`, dual drift `-(b + (k-2) a')` and potential
/// `(k-1) b' + ½ (k-1)(k-2) a''` of the order-`k` dual of `a g'' + b g'`.
pub fn diffusion_coefficients(a: &Expr, b: &Expr, k: f64) -> (Expr, Expr, Expr) {
    let da = a.differentiate(Var::X);
    let dda = da.differentiate(Var::X);
    let db = b.differentiate(Var::X);
    let b_dual = neg(add(b.clone(), mul(Expr::Num(k - 2.0), da)));
    let killing = add(
        mul(Expr::Num(k - 1.0), db),
        mul(Expr::Num(0.5 * (k - 1.0) * (k - 2.0)), dda),
    );
    (a.clone(), b_dual, killing)
}

/// Closed-form order-`k` dual (`k ≥ 1`) of the diffusion `a g'' + b g'`:
///
/// `L^D g(y) = a g'' - [b + (k-2) a'] g' + c(y) g + ∫_y g(x) J(x, y) dx`
///
/// with `J = ∂_x^k (B_k + A_k)`. The jump density is obtained by applying a
/// grid derivative of order `k` to the closed-form `B_k + A_k`.
pub fn dual_diffusion_analytic(
    a: &Expr,
    b: &Expr,
    k: f64,
    grid: &Grid,
    tol: f64,
) -> Result<DualGeneratorResult> {
    if !(k >= 1.0) {
        return Err(Error::OrderOutOfRange {
            order: k,
            what: "the closed-form diffusion dual (k ≥ 1)",
        });
    }
    let spec = GeneratorSpec {
        a: a.clone(),
        b: b.clone(),
        jump: JumpSpec::None,
        time_dependent: false,
    };
    let l = discretize(&spec, grid)?;
    let f = FOperator::new(k, grid)?;
    let matrix = dual_matrix(&l, &f)?;

    let (a_dual, b_dual, killing) = diffusion_coefficients(a, b, k);
    let (big, off) = grid.enlarged(0.5);
    let n = grid.n();
    let ne = big.n();
    let xe = big.nodes();
    let av = eval_all(a, &xe, "a")?;
    let bv = eval_all(b, &xe, "b")?;
    let da = eval_all(&a.differentiate(Var::X), &xe, "a'")?;
    let dda = eval_all(&a.nth_derivative(Var::X, 2), &xe, "a''")?;
    let db = eval_all(&b.differentiate(Var::X), &xe, "b'")?;
    let cv = eval_all(&killing, &xe, "potential")?;

    let rb = recip_gamma(k - 1.0);
    let ra = if (k - 2.0).abs() < 1e-12 {
        0.0
    } else {
        recip_gamma(k - 2.0)
    };
    let has_jumps = rb != 0.0 || ra != 0.0;

    // φ_i(x) = (B_k + A_k)(x, y_i) on the enlarged grid, one column per y_i
    let phi = DMatrix::from_fn(ne, n, |l, i| {
        let iy = i + off;
        if l <= iy {
            return 0.0;
        }
        let d = xe[l] - xe[iy];
        let bterm = (bv[l] - bv[iy] - db[iy] * d) * d.powf(k - 2.0) * rb;
        let aterm = if ra != 0.0 {
            (av[l] - av[iy] - da[iy] * d - 0.5 * dda[iy] * d * d) * d.powf(k - 3.0) * ra
        } else {
            0.0
        };
        bterm + aterm
    });

    let mut diag = DualDiagnostics {
        tol,
        monotone_ok: true,
        ..Default::default()
    };
    let mut jump = None;
    let mut m = DMatrix::zeros(n, n);
    let h = grid.h();

    if has_jumps {
        let dk = derivative_matrix(FracOrder::plus(k)?, &big, Scheme::Weighted)?;
        let je = &dk * &phi;
        let j = DMatrix::from_fn(n, n, |i, c| if c >= i { je[(c + off, i)] } else { 0.0 });
        let scale = j.amax().max(1.0);
        let mut min_j = f64::INFINITY;
        for i in grid.interior() {
            for c in i..grid.interior().end {
                min_j = min_j.min(j[(i, c)]);
            }
        }
        diag.min_jump_density = if min_j.is_finite() { min_j } else { 0.0 };
        diag.monotone_ok = diag.min_jump_density >= -tol * scale;
        for i in 0..n {
            m[(i, i)] += 0.5 * h * j[(i, i)];
            for c in i + 1..n {
                m[(i, c)] += h * j[(i, c)];
            }
        }
        let omega = &left_derivative(k - 1.0, &big)? * &phi;
        let edge = ne - 3;
        let r: Vec<f64> = grid
            .interior()
            .map(|i| omega[(edge, i)] + cv[i + off])
            .collect();
        diag.limit_condition_residual = r.iter().fold(0.0, |w, v| w.max(v.abs()));
        diag.sub_markov = r.iter().all(|v| *v <= tol) && r.iter().any(|v| *v < -tol);
        jump = Some(j);
    } else {
        let worst = grid
            .interior()
            .map(|i| cv[i + off].abs())
            .fold(0.0, f64::max);
        diag.limit_condition_residual = worst;
        diag.sub_markov = worst > tol && grid.interior().all(|i| cv[i + off] <= tol);
    }

    let a_grid: Vec<f64> = av[off..off + n].to_vec();
    let b_grid = eval_all(&b_dual, &grid.nodes(), "dual drift")?;
    add_diffusion_drift(&mut m, grid, &a_grid, &b_grid);
    for i in 0..n {
        m[(i, i)] += cv[i + off];
    }
    let analytic_matrix = GeneratorMatrix::new(*grid, m);
    diag.discrepancy = Some(operator_discrepancy(
        &analytic_matrix,
        &matrix,
        &probe_bumps(grid, 5),
    )?);

    Ok(DualGeneratorResult {
        matrix,
        analytic: Some(AnalyticDual {
            a_dual,
            b_dual,
            killing,
            jump,
            matrix: analytic_matrix,
        }),
        diagnostics: diag,
    })
}

/// Closed-form order-`k` dual of the pure jump generator with density
/// `ν(x, z)` (written with variables `x` and `z`).
///
/// `Φ_y(z) = ∫ [ν(z, w) 1_{w≥y} (w-y)^{k-1} + (ν(y, w) - ν(z, w)) 1_{z≥y} (z-y)^{k-1}] dw / Γ(k)`
/// is built by product quadrature in `w` on an enlarged grid; its
/// order-`k` `z`-derivative is the dual jump density and its order-`(k-1)`
/// derivative `L(z, y)` must be nondecreasing with limits `0` and `∫ν(y, w) dw`.
pub fn dual_jump_analytic(nu: &Expr, k: f64, grid: &Grid, tol: f64) -> Result<DualGeneratorResult> {
    if !k.is_finite() || k <= 0.0 {
        return Err(Error::OrderNonPositive(k));
    }
    let spec = GeneratorSpec::pure_jump(JumpSpec::Density {
        nu: nu.clone(),
        compensated: false,
    });
    let l = discretize(&spec, grid)?;
    let f = FOperator::new(k, grid)?;
    let matrix = dual_matrix(&l, &f)?;

    // z runs over the grid enlarged by 50%, w over one enlarged by 100% so
    // that kernels near the z-edges are not cut off
    let (big, off) = grid.enlarged(0.5);
    let (wide, woff) = grid.enlarged(1.0);
    let n = grid.n();
    let ne = big.n();
    let nw = wide.n();
    let h = grid.h();
    let xe = big.nodes();
    let xw = wide.nodes();
    let mut kern = DMatrix::zeros(ne, nw);
    for r in 0..ne {
        for c in 0..nw {
            let v = nu
                .eval(&crate::expr::Bindings::new().x(xe[r]).z(xw[c]))
                .map_err(|e| Error::SmoothnessUnavailable(format!("jump density: {e}")))?;
            if v < 0.0 {
                return Err(Error::NegativeKernel {
                    x: xe[r],
                    z: xw[c],
                    value: v,
                });
            }
            kern[(r, c)] = v;
        }
    }
    let mass: Vec<f64> = (0..ne).map(|r| h * kern.row(r).sum()).collect();
    let pw = integral_weights(k, h, nw);
    let pw_point = 1.0 / gamma(k);

    // first term: kern · W with W[c, i] = pw[c - (i + woff)] / h for c ≥ i + woff
    let wmat = DMatrix::from_fn(nw, n, |c, i| {
        if c >= i + woff {
            pw[c - i - woff] / h
        } else {
            0.0
        }
    });
    let mut phi = h * (&kern * &wmat);
    for i in 0..n {
        let iy = i + off;
        for r in iy + 1..ne {
            let d = xe[r] - xe[iy];
            phi[(r, i)] += (mass[iy] - mass[r]) * d.powf(k - 1.0) * pw_point;
        }
    }

    let dk = derivative_matrix(FracOrder::plus(k)?, &big, Scheme::Weighted)?;
    let je = &dk * &phi;
    let jump = DMatrix::from_fn(n, n, |i, c| je[(c + off, i)]);
    let lz = &left_derivative(k - 1.0, &big)? * &phi;

    let mut diag = DualDiagnostics {
        tol,
        monotone_ok: true,
        ..Default::default()
    };
    let scale = jump.amax().max(1.0);
    let win = grid.interior();
    let mut min_j = 0.0f64;
    for i in win.clone() {
        for c in win.clone() {
            min_j = min_j.min(jump[(i, c)]);
        }
    }
    diag.min_jump_density = min_j;
    diag.monotone_ok = min_j >= -tol * scale;
    let (left, right) = (2, ne - 3);
    let mut bc1 = 0.0f64;
    let mut bc2 = 0.0f64;
    let mut below = false;
    let mut above = false;
    for i in win.clone() {
        bc1 = bc1.max(lz[(left, i)].abs());
        let r = lz[(right, i)] - mass[i + off];
        bc2 = bc2.max(r.abs());
        below |= r < -tol;
        above |= r > tol;
    }
    diag.left_limit_residual = bc1;
    diag.limit_condition_residual = bc2;
    diag.sub_markov = below && !above;

    let mut m = h * &jump;
    for i in 0..n {
        m[(i, i)] -= mass[i + off];
    }
    let analytic_matrix = GeneratorMatrix::new(*grid, m);
    diag.discrepancy = Some(operator_discrepancy(
        &analytic_matrix,
        &matrix,
        &probe_bumps(grid, 5),
    )?);
    Ok(DualGeneratorResult {
        matrix,
        analytic: Some(AnalyticDual {
            a_dual: Expr::Num(0.0),
            b_dual: Expr::Num(0.0),
            killing: Expr::Num(0.0),
            jump: Some(jump),
            matrix: analytic_matrix,
        }),
        diagnostics: diag,
    })
}

fn is_zero(e: &Expr) -> bool {
    matches!(e, Expr::Num(v) if *v == 0.0)
}

/// Dual of any supported generator: closed form where one is known
/// (diffusions, pure jump densities, the stable-like reflection and the
/// symmetric self-dual case), matrix dual with generator diagnostics
/// otherwise.
pub fn analytic_dual(
    spec: &GeneratorSpec,
    k: f64,
    grid: &Grid,
    tol: f64,
) -> Result<DualGeneratorResult> {
    let pure_jump = is_zero(&spec.a) && is_zero(&spec.b);
    match &spec.jump {
        JumpSpec::None if k >= 1.0 => {
            return dual_diffusion_analytic(&spec.a, &spec.b, k, grid, tol)
        }
        JumpSpec::Density {
            nu,
            compensated: false,
        } if pure_jump => return dual_jump_analytic(nu, k, grid, tol),
        _ => {}
    }
    let l = discretize(spec, grid)?;
    let f = FOperator::new(k, grid)?;
    let matrix = dual_matrix(&l, &f)?;
    let closed = match &spec.jump {
        JumpSpec::StableLike { beta, side, scale } if pure_jump && (beta - k).abs() < 1e-12 => {
            let mirrored = GeneratorSpec::pure_jump(JumpSpec::StableLike {
                beta: *beta,
                side: side.mirror(),
                scale: scale.clone(),
            });
            Some(discretize(&mirrored, grid)?)
        }
        JumpSpec::SymmetricStable { beta, .. } if pure_jump && (beta - k).abs() < 1e-12 => {
            Some(l.clone())
        }
        _ => None,
    };
    let diagnostics = matrix_diagnostics(&matrix, tol, closed.as_ref())?;
    let analytic = closed.map(|m| AnalyticDual {
        a_dual: Expr::Num(0.0),
        b_dual: Expr::Num(0.0),
        killing: Expr::Num(0.0),
        jump: None,
        matrix: m,
    });
    Ok(DualGeneratorResult {
        matrix,
        analytic,
        diagnostics,
    })
}

/// Diagnostics read off a dual matrix: off-diagonal sign and interior row
/// sums (relative to the matrix scale).
fn matrix_diagnostics(
    m: &GeneratorMatrix,
    tol: f64,
    closed: Option<&GeneratorMatrix>,
) -> Result<DualDiagnostics> {
    let scale = m.scale().max(1.0);
    let win = m.grid.interior();
    let mut min_off = 0.0f64;
    for i in win.clone() {
        for j in win.clone() {
            if i != j {
                min_off = min_off.min(m.m[(i, j)]);
            }
        }
    }
    let sums = m.interior_row_sums();
    let worst = sums.iter().fold(0.0f64, |w, s| w.max(s.abs())) / scale;
    let discrepancy = match closed {
        Some(c) => Some(operator_discrepancy(c, m, &probe_bumps(&m.grid, 5))?),
        None => None,
    };
    Ok(DualDiagnostics {
        monotone_ok: min_off >= -tol * scale,
        min_jump_density: min_off,
        limit_condition_residual: worst,
        left_limit_residual: 0.0,
        sub_markov: worst > tol && sums.iter().all(|s| *s <= tol * scale),
        discrepancy,
        tol,
    })
}
