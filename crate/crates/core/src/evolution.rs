//! Semigroups `exp(tL)` and backward propagators of time-dependent
//! generators, with their order-`k` duals.

use nalgebra::DMatrix;

use crate::duality::{dual_matrix, FOperator};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{discretize_at, GeneratorMatrix, GeneratorSpec};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Method {
    /// Scaling and squaring with a degree-13 Padé approximant.
    #[default]
    Pade,
    /// Composition of implicit Euler steps of size at most `dt`.
    ImplicitEuler { dt: f64 },
}

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068),
];
const THETA_13: f64 = 5.371920351148152;

fn pade_coefficients(m: usize) -> &'static [f64] {
    match m {
        3 => &[120.0, 60.0, 12.0, 1.0],
        5 => &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
        7 => &[
            17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
        ],
        9 => &[
            17643225600.0,
            8821612800.0,
            2075673600.0,
            302702400.0,
            30270240.0,
            2162160.0,
            110880.0,
            3960.0,
            90.0,
            1.0,
        ],
        _ => &[
            64764752532480000.0,
            32382376266240000.0,
            7771770303897600.0,
            1187353796428800.0,
            129060195264000.0,
            10559470521600.0,
            670442572800.0,
            33522128640.0,
            1323241920.0,
            40840800.0,
            960960.0,
            16380.0,
            182.0,
            1.0,
        ],
    }
}

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Diagonal similarity `B = D⁻¹ A D` by powers of two (Parlett–Reinsch)
/// that evens out row and column norms. Returns `(d, B)`.
pub fn balance(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut b = a.clone();
    let mut d = vec![1.0; n];
    for _sweep in 0..100 {
        let mut done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += b[(j, i)].abs();
                    r += b[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let total = c + r;
            let mut f = 1.0;
            while c < r / 2.0 {
                c *= 2.0;
                r /= 2.0;
                f *= 2.0;
            }
            while c >= r * 2.0 {
                c /= 2.0;
                r *= 2.0;
                f /= 2.0;
            }
            if c + r < 0.95 * total {
                done = false;
                d[i] *= f;
                for j in 0..n {
                    b[(i, j)] /= f;
                    b[(j, i)] *= f;
                }
            }
        }
        if done {
            break;
        }
    }
    (d, b)
}

/// Matrix exponential by balancing and scaling and squaring (Higham 2005).
///
/// Balancing matters for duals `F L' F⁻¹`: their boundary rows are large
/// and would otherwise force many squarings.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (d, b) = balance(a);
    let e = expm_unbalanced(&b)?;
    Ok(DMatrix::from_fn(e.nrows(), e.ncols(), |i, j| {
        d[i] * e[(i, j)] / d[j]
    }))
}

fn expm_unbalanced(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let norm = norm1(a);
    if !norm.is_finite() {
        return Err(Error::Invalid(
            "matrix exponential of a non-finite matrix".into(),
        ));
    }
    if norm == 0.0 {
        return Ok(id);
    }
    let a2 = a * a;
    for &(m, theta) in &THETA {
        if norm <= theta {
            let b = pade_coefficients(m);
            let mut u = &id * b[1];
            let mut v = &id * b[0];
            let mut power = id.clone();
            for j in 1..=m / 2 {
                power = &power * &a2;
                u += &power * b[2 * j + 1];
                v += &power * b[2 * j];
            }
            let u = a * u;
            return pade_solve(u, v);
        }
    }
    let s = (norm / THETA_13).log2().ceil().max(0.0) as i32;
    let a = a / 2f64.powi(s);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = pade_coefficients(13);
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &id * b[0];
    let mut r = pade_solve(u, v)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

fn pade_solve(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = &v + &u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .ok_or_else(|| Error::Invalid("singular Padé denominator".into()))
}

/// `exp(t L)`; `t = 0` gives the identity exactly.
pub fn transition(l: &GeneratorMatrix, t: f64) -> Result<DMatrix<f64>> {
    transition_with(l, t, Method::Pade)
}

pub fn transition_with(l: &GeneratorMatrix, t: f64, method: Method) -> Result<DMatrix<f64>> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::BadInterval { s: 0.0, t });
    }
    let n = l.grid.n();
    if t == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }
    match method {
        Method::Pade => expm(&(&l.m * t)),
        Method::ImplicitEuler { dt } => implicit_euler(&l.m, t, dt),
    }
}

/// Default implicit Euler step `t / ⌈t ‖L‖⌉`.
pub fn default_euler_step(l: &GeneratorMatrix, t: f64) -> f64 {
    let steps = (t * norm1(&l.m)).ceil().max(1.0);
    t / steps
}

fn implicit_euler(m: &DMatrix<f64>, t: f64, dt: f64) -> Result<DMatrix<f64>> {
    if !(dt > 0.0) {
        return Err(Error::StepTooLarge { dt });
    }
    let steps = (t / dt - 1e-9).ceil().max(1.0) as u64;
    let tau = t / steps as f64;
    let n = m.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let step = (&id - m * tau)
        .lu()
        .solve(&id)
        .ok_or(Error::StepTooLarge { dt: tau })?;
    if step.iter().any(|v| !v.is_finite()) {
        return Err(Error::StepTooLarge { dt: tau });
    }
    // binary powering
    let mut result = id;
    let mut base = step;
    let mut e = steps;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    Ok(result)
}

/// `‖exp(t L^D) - F exp(tL)' F⁻¹‖_max` with `L^D = F L' F⁻¹`.
pub fn dual_semigroup_check(l: &GeneratorMatrix, f: &FOperator, t: f64) -> Result<f64> {
    let dual = dual_matrix(l, f)?;
    let lhs = transition(&dual, t)?;
    let p = transition(l, t)?;
    let rhs = f.right_solve(&f.left_mul(&p.transpose()));
    Ok((lhs - rhs).amax())
}

/// Time-dependent generator `A_t` on a grid with a time step for the
/// midpoint product rule.
#[derive(Debug, Clone)]
pub struct Propagator {
    pub spec: GeneratorSpec,
    pub grid: Grid,
    pub horizon: f64,
    pub dt: f64,
}

impl Propagator {
    pub fn new(spec: GeneratorSpec, grid: Grid, horizon: f64, dt: f64) -> Result<Self> {
        if !(horizon > 0.0) || !(dt > 0.0) {
            return Err(Error::BadInterval { s: 0.0, t: horizon });
        }
        Ok(Propagator {
            spec,
            grid,
            horizon,
            dt,
        })
    }

    pub fn generator_at(&self, t: f64) -> Result<GeneratorMatrix> {
        discretize_at(&self.spec, &self.grid, t)
    }

    /// Step boundaries between `s` and `t`: multiples of `dt` plus the ends,
    /// so products over adjacent intervals compose exactly.
    fn breakpoints(&self, s: f64, t: f64) -> Vec<f64> {
        let mut pts = vec![s];
        let first = (s / self.dt).floor() as i64 + 1;
        let mut j = first;
        loop {
            let p = j as f64 * self.dt;
            if p >= t - 1e-12 * self.dt.max(1.0) {
                break;
            }
            if p > s + 1e-12 * self.dt.max(1.0) {
                pts.push(p);
            }
            j += 1;
        }
        pts.push(t);
        pts
    }

    fn check(&self, s: f64, t: f64) -> Result<()> {
        if !(0.0 <= s && s <= t && t <= self.horizon * (1.0 + 1e-12)) {
            return Err(Error::BadInterval { s, t });
        }
        Ok(())
    }
}

fn ordered_product(
    n: usize,
    pts: &[f64],
    mut step: impl FnMut(f64, f64) -> Result<DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    let mut u = DMatrix::identity(n, n);
    for w in pts.windows(2) {
        if w[1] > w[0] {
            u = &u * step(w[0], w[1])?;
        }
    }
    Ok(u)
}

/// Backward propagator `U_{s,t} f = E f(X_t^{x,s})`: time-ordered product of
/// `exp((τ₁ - τ₀) A_{(τ₀+τ₁)/2})`, earliest step leftmost.
pub fn propagator_evolve(p: &Propagator, s: f64, t: f64) -> Result<DMatrix<f64>> {
    p.check(s, t)?;
    ordered_product(p.grid.n(), &p.breakpoints(s, t), |a, b| {
        let gen = p.generator_at(0.5 * (a + b))?;
        expm(&(&gen.m * (b - a)))
    })
}

/// Dual generator at time `s`: `F A'_{T-s} F⁻¹`.
pub fn dual_generator_at(p: &Propagator, f: &FOperator, s: f64) -> Result<GeneratorMatrix> {
    dual_matrix(&p.generator_at(p.horizon - s)?, f)
}

/// `U^D_{s,t}` assembled from the dual generators by the same midpoint rule.
/// Equals `F U'_{T-t,T-s} F⁻¹` up to rounding when `T` is a multiple of `dt`.
pub fn dual_propagator(p: &Propagator, f: &FOperator, s: f64, t: f64) -> Result<DMatrix<f64>> {
    p.check(s, t)?;
    ordered_product(p.grid.n(), &p.breakpoints(s, t), |a, b| {
        let gen = dual_generator_at(p, f, 0.5 * (a + b))?;
        expm(&(&gen.m * (b - a)))
    })
}

/// `F U'_{T-t,T-s} F⁻¹` directly from the original propagator.
pub fn reversed_dual(p: &Propagator, f: &FOperator, s: f64, t: f64) -> Result<DMatrix<f64>> {
    p.check(s, t)?;
    let u = propagator_evolve(p, p.horizon - t, p.horizon - s)?;
    Ok(f.right_solve(&f.left_mul(&u.transpose())))
}

/// Residual of the (f, T)-duality `E f(x, Y_t^{y,s}) = E f(X_{T-s}^{x,T-t}, y)`
/// for `f = (x - y)_+^{k-1}/Γ(k)`: with `f(x_j, ·) ≈ F[:, j] / h` the two
/// sides are `U^D F / h` and `F U'_{T-t,T-s} / h`, compared on the interior
/// window in max norm.
pub fn ft_duality_residual(p: &Propagator, f: &FOperator, s: f64, t: f64) -> Result<f64> {
    let ud = dual_propagator(p, f, s, t)?;
    let u = propagator_evolve(p, p.horizon - t, p.horizon - s)?;
    let fm = f.matrix();
    let h = p.grid.h();
    let lhs = &ud * &fm / h;
    let rhs = &fm * u.transpose() / h;
    let win = p.grid.interior();
    let mut worst = 0.0f64;
    for i in win.clone() {
        for j in win.clone() {
            worst = worst.max((lhs[(i, j)] - rhs[(i, j)]).abs());
        }
    }
    Ok(worst)
}

/// `‖U_{r,s} U_{s,t} - U_{r,t}‖_max`.
pub fn chain_rule_residual(
    evolve: impl Fn(f64, f64) -> Result<DMatrix<f64>>,
    r: f64,
    s: f64,
    t: f64,
) -> Result<f64> {
    let left = evolve(r, s)?;
    let right = evolve(s, t)?;
    let whole = evolve(r, t)?;
    Ok((left * right - whole).amax())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::discretize;

    fn laplacian(n: usize, lo: f64, hi: f64) -> GeneratorMatrix {
        discretize(&GeneratorSpec::brownian(), &Grid::new(lo, hi, n).unwrap()).unwrap()
    }

    #[test]
    fn zero_time_is_identity() {
        let l = laplacian(30, -1.0, 1.0);
        let p = transition(&l, 0.0).unwrap();
        assert_eq!(p, DMatrix::identity(30, 30));
    }

    #[test]
    fn expm_matches_scalar_and_rotation() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        for t in [0.01, 0.5, 3.0, 40.0] {
            let e = expm(&(&a * t)).unwrap();
            let want = DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]);
            assert!((e - want).amax() < 1e-12 * t.max(1.0), "{t}");
        }
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-30.0, 0.1, 2.0]));
        let e = expm(&d).unwrap();
        assert!((e[(0, 0)] - (-30f64).exp()).abs() < 1e-25);
        assert!((e[(2, 2)] / 2f64.exp() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn semigroup_law() {
        let l = laplacian(60, -3.0, 3.0);
        let a = transition(&l, 0.3).unwrap();
        let b = transition(&l, 0.45).unwrap();
        let c = transition(&l, 0.75).unwrap();
        assert!((a * b - c).amax() < 1e-8);
    }

    #[test]
    fn heat_kernel_row() {
        let l = laplacian(400, -10.0, 10.0);
        let p = transition(&l, 0.5).unwrap();
        let g = l.grid;
        let i = 200;
        let x = g.node(i);
        let mut worst = 0.0f64;
        for j in 0..400 {
            let u = g.node(j) - x;
            let dens = (-u * u / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
            worst = worst.max((p[(i, j)] / g.h() - dens).abs());
        }
        assert!(worst < 1e-2, "{worst}");
        assert!((p.row(i).sum() - 1.0).abs() < 1e-6);
        assert!(p.min() > -1e-8);
    }

    #[test]
    fn implicit_euler_converges() {
        let l = laplacian(40, -2.0, 2.0);
        let exact = transition(&l, 0.2).unwrap();
        let coarse = transition_with(&l, 0.2, Method::ImplicitEuler { dt: 1e-3 }).unwrap();
        let fine = transition_with(&l, 0.2, Method::ImplicitEuler { dt: 2.5e-4 }).unwrap();
        let e1 = (coarse - &exact).amax();
        let e2 = (fine - &exact).amax();
        assert!(e2 < e1 / 3.0 && e2 < 1e-3, "{e1} {e2}");
        let dt = default_euler_step(&l, 0.2);
        assert!(dt > 0.0 && dt <= 0.2);
    }

    #[test]
    fn dual_semigroup_is_similar() {
        let l = laplacian(60, -3.0, 3.0);
        let f = FOperator::new(2.0, &l.grid).unwrap();
        assert_eq!(dual_semigroup_check(&l, &f, 0.0).unwrap(), 0.0);
        assert!(dual_semigroup_check(&l, &f, 1.0).unwrap() < 1e-8);
    }

    #[test]
    fn commuting_family_time_change() {
        let g = Grid::new(-5.0, 5.0, 60).unwrap();
        let spec = GeneratorSpec::diffusion("1 + t", "0").unwrap();
        let p = Propagator::new(spec, g, 1.0, 1e-2).unwrap();
        let u = propagator_evolve(&p, 0.0, 1.0).unwrap();
        let l = discretize(&GeneratorSpec::brownian(), &g).unwrap();
        assert!((u - transition(&l, 1.5).unwrap()).amax() < 1e-8);
        assert_eq!(
            propagator_evolve(&p, 0.4, 0.4).unwrap(),
            DMatrix::identity(60, 60)
        );
        assert!(propagator_evolve(&p, 0.5, 0.2).is_err());
    }

    #[test]
    fn chain_rule_and_reflection() {
        let g = Grid::new(-3.0, 3.0, 40).unwrap();
        let spec = GeneratorSpec::diffusion("1 + 0.5*sin(x + t)", "0.3*cos(t)").unwrap();
        let p = Propagator::new(spec, g, 1.0, 0.05).unwrap();
        let r = chain_rule_residual(|s, t| propagator_evolve(&p, s, t), 0.0, 0.35, 1.0).unwrap();
        assert!(r < 1e-10, "{r}");
        let f = FOperator::new(1.5, &g).unwrap();
        let r = chain_rule_residual(|s, t| dual_propagator(&p, &f, s, t), 0.0, 0.35, 1.0).unwrap();
        assert!(r < 1e-8, "{r}");
        let direct = reversed_dual(&p, &f, 0.2, 0.9).unwrap();
        let stepped = dual_propagator(&p, &f, 0.2, 0.9).unwrap();
        assert!((direct - stepped).amax() < 1e-8);
    }
}
