//! Generator specifications `L g = a g'' + b g' + (jump part)` and their
//! discretization into dense grid matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::{parse, Bindings, Expr, Var};
use crate::fractional::{derivative_matrix, FracOrder, Scheme, Side};
use crate::grid::{Grid, GridFn};
use crate::report::{fmt_g, CsvTable};

#[derive(Debug, Clone, PartialEq)]
pub enum JumpSpec {
    None,
    /// Jumps from `x` to `z` with intensity `ν(x, z) dz`. When `compensated`
    /// the jump part is `∫ [g(z) - g(x) - g'(x)(z - x)] ν(x, z) dz`.
    Density {
        nu: Expr,
        compensated: bool,
    },
    /// `∓a(x) d^β/d(±x)^β`, with `-` for `β ≤ 1` and `+` for `β ∈ (1, 2]`.
    StableLike {
        beta: f64,
        side: Side,
        scale: Expr,
    },
    /// `-a(x) |d/dx|^β`.
    SymmetricStable {
        beta: f64,
        scale: Expr,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    /// Diffusion coefficient `a(x)` (may also use `t` when time dependent).
    pub a: Expr,
    /// Drift `b(x)`.
    pub b: Expr,
    pub jump: JumpSpec,
    pub time_dependent: bool,
}

impl GeneratorSpec {
    pub fn diffusion(a: &str, b: &str) -> Result<Self> {
        let spec = GeneratorSpec {
            a: parse(a)?,
            b: parse(b)?,
            jump: JumpSpec::None,
            time_dependent: false,
        };
        Ok(spec.detect_time())
    }

    /// `g''`, i.e. Brownian motion with variance `2t`.
    pub fn brownian() -> Self {
        GeneratorSpec {
            a: Expr::Num(1.0),
            b: Expr::Num(0.0),
            jump: JumpSpec::None,
            time_dependent: false,
        }
    }

    pub fn pure_jump(jump: JumpSpec) -> Self {
        GeneratorSpec {
            a: Expr::Num(0.0),
            b: Expr::Num(0.0),
            jump,
            time_dependent: false,
        }
        .detect_time()
    }

    pub fn with_jump(mut self, jump: JumpSpec) -> Self {
        self.jump = jump;
        self.detect_time()
    }

    pub fn density(nu: &str, compensated: bool) -> Result<JumpSpec> {
        Ok(JumpSpec::Density {
            nu: parse(nu)?,
            compensated,
        })
    }

    fn detect_time(mut self) -> Self {
        let jump_t = match &self.jump {
            JumpSpec::None => false,
            JumpSpec::Density { nu, .. } => nu.depends_on(Var::T),
            JumpSpec::StableLike { scale, .. } | JumpSpec::SymmetricStable { scale, .. } => {
                scale.depends_on(Var::T)
            }
        };
        self.time_dependent = self.a.depends_on(Var::T) || self.b.depends_on(Var::T) || jump_t;
        self
    }

    pub fn a_at(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.a.eval(&Bindings::new().x(x).t(t))?)
    }

    pub fn b_at(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.b.eval(&Bindings::new().x(x).t(t))?)
    }

    pub fn has_jumps(&self) -> bool {
        self.jump != JumpSpec::None
    }
}

fn eval_nu(nu: &Expr, x: f64, z: f64, t: f64) -> Result<f64> {
    Ok(nu.eval(&Bindings::new().x(x).z(z).t(t))?)
}

/// Dense generator matrix acting on nodal values, `(L g)_i = Σ_j m_ij g_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    pub grid: Grid,
    pub m: DMatrix<f64>,
    /// Interior row sums vanish (to `1e-8 * scale`).
    pub conservative_interior: bool,
}

impl GeneratorMatrix {
    pub fn new(grid: Grid, m: DMatrix<f64>) -> Self {
        let mut g = GeneratorMatrix {
            grid,
            m,
            conservative_interior: false,
        };
        let tol = 1e-8 * g.scale();
        g.conservative_interior = g.interior_row_sums().iter().all(|s| s.abs() <= tol);
        g
    }

    /// `max |m_ij|`.
    pub fn scale(&self) -> f64 {
        self.m.amax()
    }

    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        (&self.m * DVector::from_column_slice(g))
            .as_slice()
            .to_vec()
    }

    pub fn apply_fn(&self, g: &GridFn) -> Result<GridFn> {
        if g.grid != self.grid {
            return Err(Error::GridMismatch);
        }
        GridFn::point(self.grid, self.apply(&g.values))
    }

    pub fn interior_row_sums(&self) -> Vec<f64> {
        self.grid.interior().map(|i| self.m.row(i).sum()).collect()
    }

    /// Most negative off-diagonal entry, with its position.
    pub fn min_off_diagonal(&self) -> Option<(usize, usize, f64)> {
        let n = self.grid.n();
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            for j in 0..n {
                if i != j && best.is_none_or(|(_, _, v)| self.m[(i, j)] < v) {
                    best = Some((i, j, self.m[(i, j)]));
                }
            }
        }
        best
    }

    pub fn to_csv(&self) -> String {
        let n = self.grid.n();
        let header: Vec<String> = std::iter::once("x".to_string())
            .chain((0..n).map(|j| format!("c{j}")))
            .collect();
        let refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut out = CsvTable::new(&refs).finish();
        for i in 0..n {
            out.push_str(&fmt_g(self.grid.node(i)));
            for j in 0..n {
                out.push(',');
                out.push_str(&fmt_g(self.m[(i, j)]));
            }
            out.push('\n');
        }
        out
    }
}

/// Discretize at time 0.
pub fn discretize(spec: &GeneratorSpec, grid: &Grid) -> Result<GeneratorMatrix> {
    discretize_at(spec, grid, 0.0)
}

/// Discretize with all coefficients frozen at time `t`.
///
/// Functions are taken to vanish outside the grid, so boundary rows lose the
/// mass that would leave it.
pub fn discretize_at(spec: &GeneratorSpec, grid: &Grid, t: f64) -> Result<GeneratorMatrix> {
    let n = grid.n();
    let h = grid.h();
    let xs = grid.nodes();
    let mut m = DMatrix::<f64>::zeros(n, n);

    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for &x in &xs {
        let av = spec.a_at(x, t)?;
        if av < 0.0 {
            return Err(Error::NegativeDiffusion { x, value: av });
        }
        a.push(av);
        b.push(spec.b_at(x, t)?);
    }

    match &spec.jump {
        JumpSpec::None => {}
        JumpSpec::Density { nu, compensated } => {
            for i in 0..n {
                let mut out_rate = 0.0;
                let mut first_moment = 0.0;
                for j in 0..n {
                    let v = eval_nu(nu, xs[i], xs[j], t)?;
                    if v < 0.0 {
                        return Err(Error::NegativeKernel {
                            x: xs[i],
                            z: xs[j],
                            value: v,
                        });
                    }
                    if i != j {
                        m[(i, j)] += h * v;
                        out_rate += h * v;
                        first_moment += h * v * (xs[j] - xs[i]);
                    }
                }
                m[(i, i)] -= out_rate;
                if *compensated {
                    b[i] -= first_moment;
                }
            }
        }
        JumpSpec::StableLike { beta, side, scale } => {
            let beta = *beta;
            if !(beta > 0.0 && beta <= 2.0) {
                return Err(Error::BetaOutOfRange(beta));
            }
            if *side == Side::Symmetric {
                return Err(Error::Invalid(
                    "stable-like jumps need side plus or minus".into(),
                ));
            }
            let d = derivative_matrix(FracOrder::new(beta, *side)?, grid, Scheme::Grunwald)?;
            let sign = if beta <= 1.0 { -1.0 } else { 1.0 };
            add_scaled_rows(&mut m, &d, scale, &xs, t, sign)?;
        }
        JumpSpec::SymmetricStable { beta, scale } => {
            let beta = *beta;
            if !(beta > 0.0 && beta <= 2.0) {
                return Err(Error::BetaOutOfRange(beta));
            }
            let d = derivative_matrix(FracOrder::symmetric(beta)?, grid, Scheme::Grunwald)?;
            add_scaled_rows(&mut m, &d, scale, &xs, t, -1.0)?;
        }
    }

    add_diffusion_drift(&mut m, grid, &a, &b);

    let gm = GeneratorMatrix::new(*grid, m);
    let tol = 1e-10 * gm.scale();
    if let Some((row, col, value)) = gm.min_off_diagonal() {
        if value < -tol {
            return Err(Error::PositivityViolation { row, col, value });
        }
    }
    Ok(gm)
}

/// Central second-order stencil for `a g'' + b g'`, switching the drift to
/// upwind where central differencing would make an off-diagonal negative.
pub(crate) fn add_diffusion_drift(m: &mut DMatrix<f64>, grid: &Grid, a: &[f64], b: &[f64]) {
    let n = grid.n();
    let h = grid.h();
    for i in 0..n {
        let diff = a[i] / (h * h);
        let half = b[i] / (2.0 * h);
        let (left, centre, right) = if diff - half.abs() >= 0.0 {
            (diff - half, -2.0 * diff, diff + half)
        } else if b[i] > 0.0 {
            (diff, -2.0 * diff - b[i] / h, diff + b[i] / h)
        } else {
            (diff - b[i] / h, -2.0 * diff + b[i] / h, diff)
        };
        m[(i, i)] += centre;
        if i > 0 {
            m[(i, i - 1)] += left;
        }
        if i + 1 < n {
            m[(i, i + 1)] += right;
        }
    }
}

fn add_scaled_rows(
    m: &mut DMatrix<f64>,
    d: &DMatrix<f64>,
    scale: &Expr,
    xs: &[f64],
    t: f64,
    sign: f64,
) -> Result<()> {
    for (i, &x) in xs.iter().enumerate() {
        let s = scale.eval(&Bindings::new().x(x).t(t))?;
        for j in 0..d.ncols() {
            m[(i, j)] += sign * s * d[(i, j)];
        }
    }
    Ok(())
}

/// `b(x_i) + ∫ (z - x_i) ν(x_i, z) dz` at every node (the integral is dropped
/// for compensated kernels). The integral is a principal value over the
/// largest window `|z - x_i| ≤ R_i` that fits in the grid. Zero for a
/// martingale generator.
pub fn martingale_residual(spec: &GeneratorSpec, grid: &Grid) -> Result<GridFn> {
    let (nu, compensated) = match &spec.jump {
        JumpSpec::Density { nu, compensated } => (Some(nu), *compensated),
        JumpSpec::None => (None, true),
        _ => {
            return Err(Error::Invalid(
                "martingale residual needs a jump density".into(),
            ))
        }
    };
    let h = grid.h();
    let n = grid.n();
    let xs = grid.nodes();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = spec.b_at(xs[i], 0.0)?;
        if let (Some(nu), false) = (nu, compensated) {
            let reach = i.min(n - 1 - i);
            for j in i - reach..=i + reach {
                r += h * (xs[j] - xs[i]) * eval_nu(nu, xs[i], xs[j], 0.0)?;
            }
        }
        out.push(r);
    }
    GridFn::point(*grid, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplacian_stencil() {
        let g = Grid::new(0.0, 7.0, 8).unwrap();
        let m = discretize(&GeneratorSpec::brownian(), &g).unwrap();
        assert_eq!((m.m[(3, 2)], m.m[(3, 3)], m.m[(3, 4)]), (1.0, -2.0, 1.0));
        assert!(m.conservative_interior);
    }

    #[test]
    fn upwind_drift() {
        let g = Grid::new(0.0, 7.0, 8).unwrap();
        let m = discretize(&GeneratorSpec::diffusion("0", "1").unwrap(), &g).unwrap();
        assert_eq!((m.m[(3, 2)], m.m[(3, 3)], m.m[(3, 4)]), (0.0, -1.0, 1.0));
        let m = discretize(&GeneratorSpec::diffusion("0", "-2").unwrap(), &g).unwrap();
        assert_eq!((m.m[(3, 2)], m.m[(3, 3)], m.m[(3, 4)]), (2.0, -2.0, 0.0));
    }

    #[test]
    fn rejects_negative_coefficients() {
        let g = Grid::new(-1.0, 1.0, 11).unwrap();
        assert!(matches!(
            discretize(&GeneratorSpec::diffusion("x", "0").unwrap(), &g),
            Err(Error::NegativeDiffusion { .. })
        ));
        let spec = GeneratorSpec::pure_jump(GeneratorSpec::density("z - x", false).unwrap());
        assert!(matches!(
            discretize(&spec, &g),
            Err(Error::NegativeKernel { .. })
        ));
        let bad = GeneratorSpec::pure_jump(JumpSpec::SymmetricStable {
            beta: 1.5,
            scale: parse("-1").unwrap(),
        });
        assert!(matches!(
            discretize(&bad, &g),
            Err(Error::PositivityViolation { .. })
        ));
    }

    #[test]
    fn symmetric_stable_rows_lose_only_the_tail() {
        let g = Grid::new(-10.0, 10.0, 201).unwrap();
        let spec = GeneratorSpec::pure_jump(JumpSpec::SymmetricStable {
            beta: 1.5,
            scale: Expr::Num(1.0),
        });
        let m = discretize(&spec, &g).unwrap();
        let gl = crate::fractional::gl_weights(1.5, 400);
        let tail = crate::fractional::gl_weights(0.5, 400);
        let h = g.h();
        let denom = 2.0 * (0.75 * std::f64::consts::PI).cos();
        let i = 100;
        // each one-sided shifted row keeps g_0..g_{i+1} (or g_{n-i}) of the sequence
        let left = tail[i + 1];
        let right = tail[g.n() - i];
        let want = -(left + right) * h.powf(-1.5) / denom;
        assert!(
            (m.m.row(i).sum() - want).abs() < 1e-10 * m.scale(),
            "{} {}",
            m.m.row(i).sum(),
            want
        );
        assert!(!m.conservative_interior);
        assert!(gl.iter().sum::<f64>().abs() < 1e-2);
    }

    #[test]
    fn stable_like_signs() {
        let g = Grid::new(-5.0, 5.0, 101).unwrap();
        for beta in [0.5, 1.5, 2.0] {
            let spec = GeneratorSpec::pure_jump(JumpSpec::StableLike {
                beta,
                side: Side::Plus,
                scale: parse("2 + sin(x)").unwrap(),
            });
            let m = discretize(&spec, &g).unwrap();
            assert!(m.m[(50, 50)] < 0.0);
            assert!(m.min_off_diagonal().unwrap().2 >= 0.0);
        }
    }

    #[test]
    fn density_rows_are_conservative() {
        let g = Grid::new(-3.0, 3.0, 61).unwrap();
        let spec =
            GeneratorSpec::pure_jump(GeneratorSpec::density("exp(-(z-x)^2)", false).unwrap());
        let m = discretize(&spec, &g).unwrap();
        assert!(m.conservative_interior);
        let f: Vec<f64> = vec![1.0; 61];
        assert!(m.apply(&f).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn consistency_with_smooth_functions() {
        let errs: Vec<f64> = [101usize, 201]
            .iter()
            .map(|&n| {
                let g = Grid::new(-6.0, 6.0, n).unwrap();
                let spec = GeneratorSpec::diffusion("1 + 0.1*sin(x)", "0.3").unwrap();
                let m = discretize(&spec, &g).unwrap();
                let f = g.sample(|x| (-x * x).exp());
                let lf = m.apply(&f);
                g.interior()
                    .map(|i| {
                        let x = g.node(i);
                        let e = (-x * x).exp();
                        let exact =
                            (1.0 + 0.1 * x.sin()) * (4.0 * x * x - 2.0) * e + 0.3 * (-2.0 * x) * e;
                        (lf[i] - exact).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        assert!(errs[1] < errs[0] / 3.0, "{errs:?}");
    }

    #[test]
    fn martingale_residuals() {
        let g = Grid::new(-3.0, 3.0, 601).unwrap();
        let even =
            GeneratorSpec::pure_jump(GeneratorSpec::density("exp(-(z-x)^2)", false).unwrap());
        let r = martingale_residual(&even, &g).unwrap();
        assert!(r.max_abs() < 1e-12);
        let uni = GeneratorSpec::pure_jump(
            GeneratorSpec::density("step(z-x)*step(x+1-z)", false).unwrap(),
        );
        let r = martingale_residual(&uni, &g).unwrap();
        for i in 100..=500 {
            assert!((r.values[i] - 0.5).abs() < g.h(), "{}", r.values[i]);
        }
        let comp = GeneratorSpec::pure_jump(GeneratorSpec::density("step(z-x)", true).unwrap());
        assert!(martingale_residual(&comp, &g).unwrap().max_abs() == 0.0);
        assert_eq!(
            martingale_residual(&GeneratorSpec::brownian(), &g)
                .unwrap()
                .max_abs(),
            0.0
        );
        let stable = GeneratorSpec::pure_jump(JumpSpec::SymmetricStable {
            beta: 1.5,
            scale: Expr::Num(1.0),
        });
        assert!(martingale_residual(&stable, &g).is_err());
    }

    #[test]
    fn time_dependence_is_detected() {
        let s = GeneratorSpec::diffusion("1 + t", "0").unwrap();
        assert!(s.time_dependent);
        let g = Grid::new(0.0, 7.0, 8).unwrap();
        let m = discretize_at(&s, &g, 1.0).unwrap();
        assert_eq!(m.m[(3, 3)], -4.0);
    }
}
