//! Path simulation and Monte Carlo estimates of powered moments
//! `E (X_t^x - y)_+^{k-1}`.
//!
//! The diffusion convention is `L = a ∂² + b ∂`, so Euler increments are
//! `b dt + √(2 a dt) N(0, 1)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Exp1, StandardNormal};
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::{Bindings, Expr, Var};
use crate::fractional::Side;
use crate::grid::Grid;
use crate::model::{GeneratorSpec, JumpSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathScheme {
    Euler,
    EulerJumpThinning,
    EulerStable,
}

impl PathScheme {
    /// The scheme matching the jump part of `spec`.
    pub fn for_spec(spec: &GeneratorSpec) -> Self {
        match spec.jump {
            JumpSpec::None => PathScheme::Euler,
            JumpSpec::Density { .. } => PathScheme::EulerJumpThinning,
            _ => PathScheme::EulerStable,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathConfig {
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: PathScheme,
}

impl PathConfig {
    pub fn new(dt: f64, n_paths: usize, seed: u64, scheme: PathScheme) -> Result<Self> {
        if !(dt > 0.0) || n_paths == 0 {
            return Err(Error::Invalid(format!(
                "path config needs dt > 0 and n_paths ≥ 1 (dt = {dt}, n_paths = {n_paths})"
            )));
        }
        Ok(PathConfig {
            dt,
            n_paths,
            seed,
            scheme,
        })
    }

    pub fn for_spec(spec: &GeneratorSpec, dt: f64, n_paths: usize, seed: u64) -> Result<Self> {
        Self::new(dt, n_paths, seed, PathScheme::for_spec(spec))
    }
}

/// Terminal values of the completed paths.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub values: Vec<f64>,
    /// Paths that left the simulation box (jump densities only).
    pub aborted: usize,
}

/// Coefficient that skips expression evaluation when constant.
#[derive(Debug, Clone)]
enum Coef {
    Const(f64),
    Expr(Expr),
}

impl Coef {
    fn new(e: &Expr) -> Coef {
        if e.depends_on(Var::X) || e.depends_on(Var::T) {
            Coef::Expr(e.clone())
        } else {
            match e.eval(&Bindings::new()) {
                Ok(v) => Coef::Const(v),
                Err(_) => Coef::Expr(e.clone()),
            }
        }
    }

    fn at(&self, x: f64, t: f64) -> Result<f64> {
        match self {
            Coef::Const(v) => Ok(*v),
            Coef::Expr(e) => Ok(e.eval(&Bindings::new().x(x).t(t))?),
        }
    }
}

/// Tabulated jump kernel on the simulation box, looked up at the nearest node.
#[derive(Debug, Clone)]
struct JumpTable {
    grid: Grid,
    rate: Vec<f64>,
    /// Cumulative jump distribution over the cells `[z_j, z_j + h]`, per node.
    cdf: Vec<Vec<f64>>,
    /// `∫ (z - x) ν(x, z) dz`, removed from the drift for compensated kernels.
    mean_jump: Vec<f64>,
    bound: f64,
}

impl JumpTable {
    fn new(nu: &Expr, grid: Grid) -> Result<Self> {
        let n = grid.n();
        let h = grid.h();
        let xs = grid.nodes();
        let mut rate = Vec::with_capacity(n);
        let mut cdf = Vec::with_capacity(n);
        let mut mean_jump = Vec::with_capacity(n);
        for &x in &xs {
            let mut acc = 0.0;
            let mut first = 0.0;
            let mut row = Vec::with_capacity(n);
            for &node in &xs {
                // cell [z_j, z_j + h], sampled at its midpoint
                let z = node + 0.5 * h;
                let v = nu
                    .eval(&Bindings::new().x(x).z(z))
                    .map_err(|e| Error::UnboundedRate(e.to_string()))?;
                if v < 0.0 {
                    return Err(Error::NegativeKernel { x, z, value: v });
                }
                if !v.is_finite() {
                    return Err(Error::UnboundedRate(format!("ν({x}, {z}) = {v}")));
                }
                acc += h * v;
                first += h * v * (z - x);
                row.push(acc);
            }
            if acc > 0.0 {
                row.iter_mut().for_each(|c| *c /= acc);
            }
            rate.push(acc);
            cdf.push(row);
            mean_jump.push(first);
        }
        let bound = rate.iter().copied().fold(0.0, f64::max);
        if !bound.is_finite() {
            return Err(Error::UnboundedRate("rate bound is not finite".into()));
        }
        Ok(JumpTable {
            grid,
            rate,
            cdf,
            mean_jump,
            bound,
        })
    }

    fn node(&self, x: f64) -> Option<usize> {
        if x < self.grid.x_min() || x > self.grid.x_max() {
            None
        } else {
            Some(self.grid.nearest(x))
        }
    }

    fn target(&self, i: usize, u: f64, jitter: f64) -> f64 {
        let row = &self.cdf[i];
        let j = row.partition_point(|c| *c < u).min(row.len() - 1);
        self.grid.node(j) + jitter * self.grid.h()
    }
}

#[derive(Debug, Clone)]
enum Jumps {
    None,
    Density {
        table: JumpTable,
        compensated: bool,
    },
    Stable {
        beta: f64,
        skew: f64,
        scale: Coef,
        drift_sign: f64,
    },
}

/// Standard stable variate with characteristic function
/// `exp(-|p|^α (1 - i skew sign(p) tan(πα/2)))` by Chambers–Mallows–Stuck;
/// `α = 2` gives `N(0, 2)` and `α = 1` (symmetric) the standard Cauchy law.
pub fn sample_stable<R: Rng + ?Sized>(alpha: f64, skew: f64, rng: &mut R) -> f64 {
    if alpha == 2.0 {
        let z: f64 = rng.sample(StandardNormal);
        return std::f64::consts::SQRT_2 * z;
    }
    let half_pi = std::f64::consts::FRAC_PI_2;
    let v = (rng.random::<f64>() - 0.5) * std::f64::consts::PI;
    let w: f64 = rng.sample(Exp1);
    if alpha == 1.0 {
        if skew == 0.0 {
            return v.tan();
        }
        let a = half_pi + skew * v;
        return (a * v.tan() - skew * ((half_pi * w * v.cos()) / a).ln()) / half_pi;
    }
    let t = skew * (std::f64::consts::PI * alpha / 2.0).tan();
    let b = t.atan() / alpha;
    let s = (1.0 + t * t).powf(1.0 / (2.0 * alpha));
    s * (alpha * (v + b)).sin() / v.cos().powf(1.0 / alpha)
        * ((v - alpha * (v + b)).cos() / w).powf((1.0 - alpha) / alpha)
}

fn build_jumps(spec: &GeneratorSpec, grid: &Grid) -> Result<Jumps> {
    Ok(match &spec.jump {
        JumpSpec::None => Jumps::None,
        JumpSpec::Density { nu, compensated } => {
            let (boxed, _) = grid.enlarged(1.0);
            Jumps::Density {
                table: JumpTable::new(nu, boxed)?,
                compensated: *compensated,
            }
        }
        JumpSpec::StableLike { beta, side, scale } => {
            let beta = *beta;
            if !(beta > 0.0 && beta <= 2.0) {
                return Err(Error::BetaOutOfRange(beta));
            }
            let skew = match side {
                Side::Plus => -1.0,
                Side::Minus => 1.0,
                Side::Symmetric => 0.0,
            };
            // β = 1 one-sided: -a d/d(±x) is the drift ∓a
            let drift_sign = if beta == 1.0 { skew } else { 0.0 };
            Jumps::Stable {
                beta,
                skew,
                scale: Coef::new(scale),
                drift_sign,
            }
        }
        JumpSpec::SymmetricStable { beta, scale } => {
            let beta = *beta;
            if !(beta > 0.0 && beta <= 2.0) {
                return Err(Error::BetaOutOfRange(beta));
            }
            Jumps::Stable {
                beta,
                skew: 0.0,
                scale: Coef::new(scale),
                drift_sign: 0.0,
            }
        }
    })
}

struct Stepper {
    a: Coef,
    b: Coef,
    jumps: Jumps,
    dt: f64,
    steps: usize,
}

impl Stepper {
    /// One path; `None` when it left the simulation box.
    fn run(&self, x0: f64, rng: &mut ChaCha12Rng) -> Result<Option<f64>> {
        let mut x = x0;
        let mut t = 0.0;
        for _ in 0..self.steps {
            let dt = self.dt;
            let a = self.a.at(x, t)?;
            let mut drift = self.b.at(x, t)?;
            let mut next = x;
            match &self.jumps {
                Jumps::None => {}
                Jumps::Density { table, compensated } => {
                    let Some(i) = table.node(x) else {
                        return Ok(None);
                    };
                    if *compensated {
                        drift -= table.mean_jump[i];
                    }
                    // thinning against the box-wide bound
                    let mut clock: f64 = rng.sample::<f64, _>(Exp1) / table.bound;
                    let mut pos = x;
                    while clock < dt {
                        let Some(j) = table.node(pos) else {
                            return Ok(None);
                        };
                        if rng.random::<f64>() * table.bound < table.rate[j] {
                            pos = table.target(j, rng.random::<f64>(), rng.random::<f64>());
                        }
                        clock += rng.sample::<f64, _>(Exp1) / table.bound;
                    }
                    next += pos - x;
                }
                Jumps::Stable {
                    beta,
                    skew,
                    scale,
                    drift_sign,
                } => {
                    let s = scale.at(x, t)?;
                    if s < 0.0 {
                        return Err(Error::NegativeDiffusion { x, value: s });
                    }
                    if *beta == 1.0 && *skew != 0.0 {
                        drift += drift_sign * s;
                    } else {
                        let c = if *skew == 0.0 {
                            1.0
                        } else {
                            (std::f64::consts::PI * beta / 2.0).cos().abs()
                        };
                        let sigma = (s * dt * c).powf(1.0 / beta);
                        next += sigma * sample_stable(*beta, *skew, rng);
                    }
                }
            }
            if a < 0.0 {
                return Err(Error::NegativeDiffusion { x, value: a });
            }
            next += drift * dt;
            if a > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                next += (2.0 * a * dt).sqrt() * z;
            }
            x = next;
            t += dt;
            if !x.is_finite() {
                return Ok(None);
            }
        }
        Ok(Some(x))
    }
}

fn path_rng(seed: u64, path: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// Simulate `cfg.n_paths` paths from `x0` up to time `t`. Each path draws
/// from its own ChaCha stream keyed by `(seed, path index)`, so results do
/// not depend on scheduling. `grid` sets the box (three times its length)
/// on which jump rates are tabulated.
pub fn simulate(
    spec: &GeneratorSpec,
    x0: f64,
    t: f64,
    cfg: &PathConfig,
    grid: &Grid,
) -> Result<Sample> {
    if !(t >= 0.0) {
        return Err(Error::BadInterval { s: 0.0, t });
    }
    let expected = PathScheme::for_spec(spec);
    if cfg.scheme != expected {
        return Err(Error::Invalid(format!(
            "scheme {:?} does not fit this generator (expected {expected:?})",
            cfg.scheme
        )));
    }
    let steps = if t == 0.0 {
        0
    } else {
        (t / cfg.dt - 1e-9).ceil().max(1.0) as usize
    };
    let stepper = Stepper {
        a: Coef::new(&spec.a),
        b: Coef::new(&spec.b),
        jumps: build_jumps(spec, grid)?,
        dt: if steps == 0 { 0.0 } else { t / steps as f64 },
        steps,
    };
    let run = |p: usize| stepper.run(x0, &mut path_rng(cfg.seed, p));
    #[cfg(feature = "parallel")]
    let results: Vec<Result<Option<f64>>> = (0..cfg.n_paths).into_par_iter().map(run).collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<Option<f64>>> = (0..cfg.n_paths).map(run).collect();
    let mut values = Vec::with_capacity(cfg.n_paths);
    let mut aborted = 0;
    for r in results {
        match r? {
            Some(v) => values.push(v),
            None => aborted += 1,
        }
    }
    Ok(Sample { values, aborted })
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        v.iter().sum()
    } else {
        let (a, b) = v.split_at(v.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    pub mean: f64,
    /// Sample standard deviation over `√n`.
    pub stderr: f64,
    pub n_effective: usize,
    /// The moment may not exist (stable tails too heavy for the power).
    pub heavy_tail_warning: bool,
}

/// Mean and standard error of `f` over the sample.
pub fn moment_of(sample: &[f64], f: impl Fn(f64) -> f64) -> MomentEstimate {
    let vals: Vec<f64> = sample.iter().map(|&s| f(s)).collect();
    let n = vals.len();
    if n == 0 {
        return MomentEstimate {
            mean: f64::NAN,
            stderr: f64::NAN,
            n_effective: 0,
            heavy_tail_warning: false,
        };
    }
    let mean = pairwise_sum(&vals) / n as f64;
    let dev: Vec<f64> = vals.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = if n > 1 {
        pairwise_sum(&dev) / (n - 1) as f64
    } else {
        0.0
    };
    MomentEstimate {
        mean,
        stderr: (var / n as f64).sqrt(),
        n_effective: n,
        heavy_tail_warning: false,
    }
}

/// `s ↦ (s - y)_+^{k-1}`, with `x_+^0 = θ(x)` right-continuous.
pub fn powered_call(s: f64, y: f64, k: f64) -> f64 {
    let d = s - y;
    if d < 0.0 {
        0.0
    } else if k == 1.0 {
        1.0
    } else if d == 0.0 {
        if k > 1.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        d.powf(k - 1.0)
    }
}

/// Estimate of `E (X - y)_+^{k-1}` from terminal values.
pub fn powered_moment(sample: &[f64], y: f64, k: f64) -> MomentEstimate {
    moment_of(sample, |s| powered_call(s, y, k))
}

/// Estimate of `E (x - Y)_+^{k-1}`.
pub fn powered_put_moment(sample: &[f64], x: f64, k: f64) -> MomentEstimate {
    moment_of(sample, |s| powered_call(x, s, k))
}

/// Stable jumps of index `β < 2` have moments only below `β`.
pub fn heavy_tail_risk(spec: &GeneratorSpec, k: f64) -> bool {
    match &spec.jump {
        JumpSpec::StableLike { beta, .. } | JumpSpec::SymmetricStable { beta, .. } => {
            *beta < 2.0 && k - 1.0 >= *beta
        }
        _ => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityReport {
    /// `E (X_t^x - y)_+^{k-1}`.
    pub call: MomentEstimate,
    /// `E (x - Y_t^y)_+^{k-1}`.
    pub put: MomentEstimate,
    pub z_score: f64,
    /// `None` when the estimate abstains because of heavy tails.
    pub pass: Option<bool>,
}

/// Seed for the second, independent side of a comparison.
pub fn independent_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}

/// Both sides of `E (x - Y_t^y)_+^{k-1} = E (X_t^x - y)_+^{k-1}` with
/// independent streams, and the z-score of their difference.
#[allow(clippy::too_many_arguments)]
pub fn duality_mc_report(
    spec_x: &GeneratorSpec,
    spec_y: &GeneratorSpec,
    k: f64,
    x: f64,
    y: f64,
    t: f64,
    cfg: &PathConfig,
    grid: &Grid,
) -> Result<DualityReport> {
    let heavy = heavy_tail_risk(spec_x, k) || heavy_tail_risk(spec_y, k);
    let cfg_x = PathConfig {
        scheme: PathScheme::for_spec(spec_x),
        ..*cfg
    };
    let cfg_y = PathConfig {
        scheme: PathScheme::for_spec(spec_y),
        seed: independent_seed(cfg.seed),
        ..*cfg
    };
    let xs = simulate(spec_x, x, t, &cfg_x, grid)?;
    let ys = simulate(spec_y, y, t, &cfg_y, grid)?;
    let mut call = powered_moment(&xs.values, y, k);
    let mut put = powered_put_moment(&ys.values, x, k);
    call.heavy_tail_warning = heavy;
    put.heavy_tail_warning = heavy;
    let se = (call.stderr * call.stderr + put.stderr * put.stderr).sqrt();
    let z_score = if se > 0.0 {
        (call.mean - put.mean) / se
    } else if call.mean == put.mean {
        0.0
    } else {
        f64::INFINITY
    };
    let pass = if heavy {
        None
    } else {
        Some(z_score.abs() < 3.0)
    };
    Ok(DualityReport {
        call,
        put,
        z_score,
        pass,
    })
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < n && j < m {
        let v = a[i].min(b[j]);
        while i < n && a[i] <= v {
            i += 1;
        }
        while j < m && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    (d, p.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn grid() -> Grid {
        Grid::new(-10.0, 10.0, 201).unwrap()
    }

    #[test]
    fn deterministic_drift() {
        let spec = GeneratorSpec::diffusion("0", "1").unwrap();
        let cfg = PathConfig::for_spec(&spec, 1e-2, 50, 7).unwrap();
        let s = simulate(&spec, 0.25, 1.0, &cfg, &grid()).unwrap();
        assert!(s.values.iter().all(|v| (v - 1.25).abs() < 1e-12));
    }

    #[test]
    fn brownian_moments() {
        let spec = GeneratorSpec::diffusion("0.5", "0").unwrap();
        let cfg = PathConfig::for_spec(&spec, 0.05, 100_000, 11).unwrap();
        let s = simulate(&spec, 0.3, 1.0, &cfg, &grid()).unwrap();
        let m = moment_of(&s.values, |v| v);
        assert!((m.mean - 0.3).abs() < 3.0 * m.stderr);
        let var = moment_of(&s.values, |v| (v - m.mean).powi(2)).mean;
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn reproducible_streams() {
        let spec = GeneratorSpec::diffusion("0.5", "0.1*x").unwrap();
        let cfg = PathConfig::for_spec(&spec, 0.01, 300, 99).unwrap();
        let a = simulate(&spec, 0.0, 0.5, &cfg, &grid()).unwrap();
        let b = simulate(&spec, 0.0, 0.5, &cfg, &grid()).unwrap();
        assert_eq!(a, b);
        let c = simulate(&spec, 0.0, 0.5, &PathConfig { seed: 100, ..cfg }, &grid()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn stable_two_is_gaussian() {
        let stable = GeneratorSpec::pure_jump(JumpSpec::SymmetricStable {
            beta: 2.0,
            scale: parse("0.5").unwrap(),
        });
        let diff = GeneratorSpec::diffusion("0.5", "0").unwrap();
        let a = simulate(
            &stable,
            0.0,
            1.0,
            &PathConfig::for_spec(&stable, 0.1, 20_000, 1).unwrap(),
            &grid(),
        )
        .unwrap();
        let b = simulate(
            &diff,
            0.0,
            1.0,
            &PathConfig::for_spec(&diff, 0.1, 20_000, 2).unwrap(),
            &grid(),
        )
        .unwrap();
        let (_, p) = ks_two_sample(&a.values, &b.values);
        assert!(p > 0.01, "{p}");
    }

    #[test]
    fn cauchy_quartiles() {
        let mut rng = path_rng(3, 0);
        let mut v: Vec<f64> = (0..40_000)
            .map(|_| sample_stable(1.0, 0.0, &mut rng))
            .collect();
        v.sort_by(f64::total_cmp);
        assert!((v[30_000] - 1.0).abs() < 0.05 && (v[10_000] + 1.0).abs() < 0.05);
    }

    #[test]
    fn skewed_stable_below_one_is_one_sided() {
        let mut rng = path_rng(5, 0);
        assert!((0..5000).all(|_| sample_stable(0.5, 1.0, &mut rng) > 0.0));
        assert!((0..5000).all(|_| sample_stable(0.5, -1.0, &mut rng) < 0.0));
    }

    #[test]
    fn moment_conventions() {
        let m = powered_moment(&[1.0; 10], 0.0, 2.0);
        assert_eq!((m.mean, m.stderr), (1.0, 0.0));
        assert_eq!(powered_moment(&[0.0; 4], 0.0, 1.0).mean, 1.0);
        let mut rng = path_rng(8, 0);
        let z: Vec<f64> = (0..100_000)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let m = powered_moment(&z, 0.0, 2.0);
        let want = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((m.mean - want).abs() < 3.0 * m.stderr);
    }

    #[test]
    fn jump_thinning_rate() {
        // uniform jumps on [x-1, x+1] at rate 2: variance 2 * t * E U² = 2/3 at t = 1
        let spec = GeneratorSpec::pure_jump(
            GeneratorSpec::density("step(1 - abs(z - x))", false).unwrap(),
        );
        let cfg = PathConfig::for_spec(&spec, 0.01, 40_000, 4).unwrap();
        let s = simulate(&spec, 0.0, 1.0, &cfg, &grid()).unwrap();
        assert_eq!(s.aborted, 0);
        let var = moment_of(&s.values, |v| v * v);
        assert!(
            (var.mean - 2.0 / 3.0).abs() < 4.0 * var.stderr + 0.02,
            "{var:?}"
        );
    }

    #[test]
    fn heavy_tails_abstain() {
        let spec = GeneratorSpec::pure_jump(JumpSpec::SymmetricStable {
            beta: 0.8,
            scale: parse("1").unwrap(),
        });
        let cfg = PathConfig::for_spec(&spec, 0.1, 100, 1).unwrap();
        let r = duality_mc_report(&spec, &spec, 2.0, 0.0, 0.0, 0.5, &cfg, &grid()).unwrap();
        assert!(r.call.heavy_tail_warning && r.pass.is_none());
    }

    #[test]
    fn scheme_must_fit_spec() {
        let spec = GeneratorSpec::brownian();
        let cfg = PathConfig::new(0.1, 10, 1, PathScheme::EulerStable).unwrap();
        assert!(simulate(&spec, 0.0, 1.0, &cfg, &grid()).is_err());
        assert!(PathConfig::new(0.0, 10, 1, PathScheme::Euler).is_err());
    }
}
