//! The acceptance suite: one check per criterion, run in order, with one
//! PASS/FAIL line each. Run with
//! `cargo test --release -p kdual --test acceptance -- --nocapture`.

use std::time::{Duration, Instant};

use kdual::duality::{
    analytic_dual, check_monotone_spec, check_self_dual, dual_matrix, extract_drift,
    intertwining_residual, operator_discrepancy, probe_bumps, FOperator, SelfDualOrder,
};
use kdual::evolution::{
    chain_rule_residual, dual_propagator, dual_semigroup_check, ft_duality_residual,
    propagator_evolve, Propagator,
};
use kdual::expr::{parse, Bindings, Expr, Var};
use kdual::fractional::{
    convolve, derivative_matrix, frac_derivative, frac_integral, integration_by_parts_residual,
    power_kernel, FracOrder, Scheme, Side,
};
use kdual::model::{discretize, GeneratorSpec, JumpSpec};
use kdual::montecarlo::{duality_mc_report, PathConfig, PathScheme};
use kdual::options::{
    dual_spec, spread_symmetry_report, straddle_selfsymmetry_report, GridPricer, ReportSettings,
};
use kdual::{Grid, GridFn};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn bump(x: f64) -> f64 {
    if x.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - x * x)).exp()
    } else {
        0.0
    }
}

fn test_matrix() -> Vec<(&'static str, GeneratorSpec)> {
    let stable = |beta: f64| {
        GeneratorSpec::pure_jump(JumpSpec::SymmetricStable {
            beta,
            scale: Expr::Num(1.0),
        })
    };
    vec![
        ("brownian", GeneratorSpec::brownian()),
        (
            "drifted brownian",
            GeneratorSpec::diffusion("1", "0.5").unwrap(),
        ),
        (
            "a = 1 + 0.1 sin x",
            GeneratorSpec::diffusion("1 + 0.1*sin(x)", "0").unwrap(),
        ),
        ("symmetric stable 0.5", stable(0.5)),
        ("symmetric stable 1.5", stable(1.5)),
        (
            "uniform jumps",
            GeneratorSpec::pure_jump(
                GeneratorSpec::density("0.5*step(1 - abs(z - x))", false).unwrap(),
            ),
        ),
    ]
}

const ORDERS: [f64; 5] = [0.5, 1.0, 1.5, 2.0, 2.5];

fn c1_intertwining() -> Verdict {
    let start = Instant::now();
    let grid = Grid::new(-10.0, 10.0, 200).unwrap();
    let mut worst = 0.0f64;
    for (_, spec) in test_matrix() {
        let l = discretize(&spec, &grid).unwrap();
        for k in ORDERS {
            let f = FOperator::new(k, &grid).unwrap();
            let dual = dual_matrix(&l, &f).unwrap();
            worst = worst.max(intertwining_residual(&dual, &l, &f).unwrap() / l.m.amax());
        }
    }
    let el = start.elapsed();
    verdict(
        worst <= 1e-10 && within(el, 10.0),
        format!("max relative residual {worst:.2e}, {el:.1?}"),
    )
}

fn c2_semigroup() -> Verdict {
    let start = Instant::now();
    let grid = Grid::new(-10.0, 10.0, 200).unwrap();
    let mut worst = 0.0f64;
    for (_, spec) in test_matrix() {
        let l = discretize(&spec, &grid).unwrap();
        for k in ORDERS {
            let f = FOperator::new(k, &grid).unwrap();
            for t in [0.1, 1.0] {
                worst = worst.max(dual_semigroup_check(&l, &f, t).unwrap());
            }
        }
    }
    let el = start.elapsed();
    verdict(
        worst <= 1e-8 && within(el, 30.0),
        format!("max residual {worst:.2e}, {el:.1?}"),
    )
}

fn c3_analytic_convergence() -> Verdict {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for (a, b, k) in [("1", "sin(x)", 2.0), ("1 + 0.1*sin(x)", "0", 2.5)] {
        let spec = GeneratorSpec::diffusion(a, b).unwrap();
        let d: Vec<f64> = [100, 200, 400]
            .iter()
            .map(|&n| {
                let grid = Grid::new(-10.0, 10.0, n).unwrap();
                analytic_dual(&spec, k, &grid, 1e-6)
                    .unwrap()
                    .diagnostics
                    .discrepancy
                    .unwrap()
            })
            .collect();
        ok &= d[0] > d[1] && d[1] > d[2] && d[2] < 5e-2;
        parts.push(format!(
            "a={a}, b={b}, k={k}: {:.3e} > {:.3e} > {:.3e}",
            d[0], d[1], d[2]
        ));
    }
    let el = start.elapsed();
    verdict(
        ok && within(el, 60.0),
        format!("{}; {el:.1?}", parts.join("; ")),
    )
}

fn c4_siegmund() -> Verdict {
    let c = 0.7;
    let spec = GeneratorSpec::diffusion("1", &c.to_string()).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [200, 400] {
        let grid = Grid::new(-10.0, 10.0, n).unwrap();
        let l = discretize(&spec, &grid).unwrap();
        let dual = dual_matrix(&l, &FOperator::new(1.0, &grid).unwrap()).unwrap();
        let err = extract_drift(&dual, 3)
            .iter()
            .map(|&(_, b)| (b + c).abs())
            .fold(0.0, f64::max);
        ok &= err < 10.0 * grid.h();
        parts.push(format!("n={n}: {err:.2e} (10h = {:.2e})", 10.0 * grid.h()));
    }
    verdict(ok, parts.join("; "))
}

fn c5_stable_reflection() -> Verdict {
    let grid = Grid::new(-10.0, 10.0, 400).unwrap();
    let scale = parse("2 + sin(x)").unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for beta in [0.5, 1.5] {
        let spec = GeneratorSpec::pure_jump(JumpSpec::StableLike {
            beta,
            side: Side::Plus,
            scale: scale.clone(),
        });
        let mirrored = GeneratorSpec::pure_jump(JumpSpec::StableLike {
            beta,
            side: Side::Minus,
            scale: scale.clone(),
        });
        let l = discretize(&spec, &grid).unwrap();
        let dual = dual_matrix(&l, &FOperator::new(beta, &grid).unwrap()).unwrap();
        let want = discretize(&mirrored, &grid).unwrap();
        let d = operator_discrepancy(&dual, &want, &probe_bumps(&grid, 5)).unwrap();
        ok &= d < 5e-2;
        parts.push(format!("β=k={beta}: {d:.2e}"));
    }
    verdict(ok, parts.join("; "))
}

fn c6_fractional() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();

    // D^β ∘ I^β on a bump given by its cell averages
    let g = Grid::new(-1.1, 1.1, 2048).unwrap();
    let h = g.h();
    let cells = g.sample(|x| {
        (0..32)
            .map(|m| bump(x + h * (m as f64 + 0.5) / 32.0))
            .sum::<f64>()
            / 32.0
    });
    let q = GridFn::density(g, cells).unwrap();
    for beta in [0.5, 1.5] {
        let f = frac_integral(FracOrder::plus(beta).unwrap(), &q, false).unwrap();
        let m = derivative_matrix(FracOrder::minus(beta).unwrap(), &g, Scheme::Weighted).unwrap();
        let back = &m * DVector::from_column_slice(&f.values);
        let err = g
            .interior()
            .map(|i| (back[i] - bump(g.node(i))).abs())
            .fold(0.0, f64::max);
        ok &= err < 1e-3;
        parts.push(format!("D∘I β={beta}: {err:.2e}"));
    }

    // integration by parts
    let g = Grid::new(-3.0, 3.0, 1024).unwrap();
    let qp = GridFn::density(g, g.sample(|x| bump(x - 0.5))).unwrap();
    let qm = GridFn::density(g, g.sample(|x| bump(x + 0.3) * (1.0 + x))).unwrap();
    let mut worst = 0.0f64;
    for k in [0.5, 1.0, 1.5] {
        let pp = frac_integral(FracOrder::plus(k).unwrap(), &qp, false).unwrap();
        let pm = frac_integral(FracOrder::minus(k).unwrap(), &qm, false).unwrap();
        worst = worst.max(integration_by_parts_residual(&pp, &pm, k).unwrap());
    }
    ok &= worst < 1e-6;
    parts.push(format!("parts: {worst:.2e}"));

    // d^β/dx^β of x_+^{β-1}/Γ(β) is a delta
    let g = Grid::new(-4.0, 4.0, 2048).unwrap();
    for beta in [0.5, 1.5] {
        let r = frac_derivative(
            FracOrder::plus(beta).unwrap(),
            &power_kernel(beta, Side::Plus, &g).unwrap(),
        )
        .unwrap();
        let c = convolve(&r, bump);
        // away from the right edge, where zero extension cuts the kernel
        let err = (0..g.n())
            .filter(|&i| g.node(i).abs() <= 2.5)
            .map(|i| (c.values[i] - bump(g.node(i))).abs())
            .fold(0.0, f64::max);
        ok &= err < 1e-2;
        parts.push(format!("delta β={beta}: {err:.2e}"));
    }
    verdict(ok, parts.join("; "))
}

fn c7_monte_carlo() -> Verdict {
    let start = Instant::now();
    let grid = Grid::new(-10.0, 10.0, 400).unwrap();
    let (k, x, y, t) = (2.0, 1.0, 0.0, 1.0);
    let mut ok = true;
    let mut parts = Vec::new();
    for b in ["0.3", "-0.3"] {
        let spec = GeneratorSpec::diffusion("0.5", b).unwrap();
        let dual = dual_spec(&spec, k, &grid)
            .unwrap()
            .expect("drifted Brownian motion has a dual spec");
        let cfg = PathConfig::new(1e-3, 100_000, 20240611, PathScheme::Euler).unwrap();
        let r = duality_mc_report(&spec, &dual, k, x, y, t, &cfg, &grid).unwrap();
        let call = GridPricer::new(&spec, &grid, t)
            .unwrap()
            .expect(x, |s| (s - y).max(0.0))
            .unwrap();
        let put = GridPricer::new(&dual, &grid, t)
            .unwrap()
            .expect(y, |s| (x - s).max(0.0))
            .unwrap();
        let call_ok = (r.call.mean - call).abs() < 3.0 * r.call.stderr;
        let put_ok = (r.put.mean - put).abs() < 3.0 * r.put.stderr;
        ok &= r.z_score.abs() < 3.0 && call_ok && put_ok;
        parts.push(format!(
            "b={b}: z={:.2}, call {:.4}±{:.4} vs grid {:.4}, put {:.4}±{:.4} vs grid {:.4}",
            r.z_score, r.call.mean, r.call.stderr, call, r.put.mean, r.put.stderr, put
        ));
    }
    let el = start.elapsed();
    verdict(
        ok && within(el, 120.0),
        format!("{}; {el:.1?}", parts.join("; ")),
    )
}

fn c8_straddle() -> Verdict {
    // heavy tails: the mass lost at the truncation decays like 1/length, so
    // the domain is wide and h = 0.1
    let settings = ReportSettings {
        grid: Grid::new(-20.0, 20.0, 400).unwrap(),
        tol: 1e-2,
        mc: None,
    };
    let spec = GeneratorSpec::pure_jump(JumpSpec::SymmetricStable {
        beta: 1.5,
        scale: parse("2 + sin(x)").unwrap(),
    });
    let pairs: Vec<(f64, f64)> = (0..9)
        .map(|i| (-2.0 + 0.5 * i as f64, 1.0 - 0.4 * i as f64))
        .collect();
    let rows = straddle_selfsymmetry_report(&spec, 1.5, &pairs, 0.5, &settings).unwrap();
    let worst = rows.iter().map(|r| r.abs_gap).fold(0.0, f64::max);
    verdict(
        rows.len() == 9 && rows.iter().all(|r| r.pass),
        format!("max gap {worst:.2e} over {} pairs", rows.len()),
    )
}

fn c9_spread() -> Verdict {
    let settings = ReportSettings {
        grid: Grid::new(-10.0, 10.0, 400).unwrap(),
        tol: 1e-2,
        mc: None,
    };
    let pairs: Vec<(f64, f64)> = (0..9)
        .map(|i| (-2.0 + 0.5 * i as f64, 1.0 - 0.4 * i as f64))
        .collect();
    let periodic = GeneratorSpec::diffusion("2 + cos(2*pi*x)", "0").unwrap();
    let r = spread_symmetry_report(&periodic, 0.0, 1.0, &pairs, 0.5, &settings).unwrap();
    let worst = r.rows.iter().map(|r| r.abs_gap).fold(0.0, f64::max);
    let plain = GeneratorSpec::diffusion("2 + x^2", "0").unwrap();
    let warned = spread_symmetry_report(&plain, 0.0, 1.0, &pairs[..2], 0.5, &settings)
        .unwrap()
        .periodicity_warning;
    verdict(
        !r.periodicity_warning && r.rows.iter().all(|r| r.pass) && warned,
        format!("max gap {worst:.2e}; non-periodic a warned: {warned}"),
    )
}

fn c10_self_dual() -> Verdict {
    let grid = Grid::new(-3.0, 3.0, 61).unwrap();
    let good =
        check_self_dual(&parse("exp(-(z-x)^2)").unwrap(), SelfDualOrder::Two, &grid).unwrap();
    let bad = check_self_dual(
        &parse("(1 + x^2)*exp(-(z-x)^2)").unwrap(),
        SelfDualOrder::Two,
        &grid,
    )
    .unwrap();
    verdict(
        good < 1e-6 && bad > 1e-2,
        format!("translation invariant {good:.2e}, weighted {bad:.2e}"),
    )
}

fn c11_monotone() -> Verdict {
    let grid = Grid::new(-10.0, 10.0, 400).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for k in [1.0, 2.0] {
        let r = check_monotone_spec(&GeneratorSpec::brownian(), &grid, k, 0.5, Some(1e-6)).unwrap();
        ok &= r.monotone
            && r.min_derivative >= -1e-6
            && r.right_edge_error < 5e-2
            && r.left_edge_error < 5e-2;
        parts.push(format!(
            "k={k}: min {:.2e}, edges {:.2e}/{:.2e}",
            r.min_derivative, r.left_edge_error, r.right_edge_error
        ));
    }
    verdict(ok, parts.join("; "))
}

fn c12_propagator() -> Verdict {
    let start = Instant::now();
    let grid = Grid::new(-10.0, 10.0, 200).unwrap();
    let spec = GeneratorSpec::diffusion("1 + t", "0").unwrap();
    let p = Propagator::new(spec, grid, 1.0, 1e-3).unwrap();
    let f = FOperator::new(2.0, &grid).unwrap();
    let chain = chain_rule_residual(|s, t| propagator_evolve(&p, s, t), 0.0, 0.4, 1.0).unwrap();
    let dual_chain =
        chain_rule_residual(|s, t| dual_propagator(&p, &f, s, t), 0.0, 0.4, 1.0).unwrap();
    let ft = ft_duality_residual(&p, &f, 0.0, 1.0).unwrap();
    let el = start.elapsed();
    verdict(
        chain < 1e-8 && dual_chain < 1e-8 && ft < 1e-3,
        format!("chain {chain:.2e}, dual chain {dual_chain:.2e}, (f,T) {ft:.2e}; {el:.1?}"),
    )
}

fn random_input(rng: &mut ChaCha8Rng) -> String {
    const PIECES: &[&str] = &[
        "x", "y", "z", "t", "1", "0.5", "2e3", "1e-400", "(", ")", "+", "-", "*", "/", "^", ",",
        "sin", "cos", "exp", "log", "sqrt", "abs", "step", "max", "min", "pow", "pi", " ", ".",
        "e", "#", "é", "∞", "((", "))",
    ];
    let len = rng.random_range(0..24);
    (0..len)
        .map(|_| PIECES[rng.random_range(0..PIECES.len())])
        .collect()
}

fn random_smooth(rng: &mut ChaCha8Rng, depth: u32) -> String {
    if depth == 0 || rng.random_bool(0.25) {
        return match rng.random_range(0..3) {
            0 => "x".into(),
            1 => format!("{:.3}", rng.random_range(-2.0..2.0)),
            _ => format!("{:.3}*x", rng.random_range(-1.5..1.5)),
        };
    }
    let a = random_smooth(rng, depth - 1);
    let b = random_smooth(rng, depth - 1);
    match rng.random_range(0..8) {
        0 => format!("({a}) + ({b})"),
        1 => format!("({a}) - ({b})"),
        2 => format!("({a})*({b})"),
        3 => format!("sin({a})"),
        4 => format!("cos({a})"),
        5 => format!("exp(sin({a}))"),
        6 => format!("({a})/(2 + sin({b}))"),
        _ => format!("sqrt(1 + ({a})^2)"),
    }
}

fn c13_parser() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut crashes = 0;
    for _ in 0..1000 {
        let s = random_input(&mut rng);
        if std::panic::catch_unwind(|| {
            if let Ok(e) = parse(&s) {
                let _ = e.eval(&Bindings::new().x(0.3).y(0.1).z(-0.2).t(0.5));
                let _ = e.differentiate(Var::X);
            }
        })
        .is_err()
        {
            crashes += 1;
        }
    }
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let src = random_smooth(&mut rng, 4);
        let e = parse(&src).unwrap();
        let d = e.differentiate(Var::X);
        let x = rng.random_range(-2.0..2.0);
        let f = |x: f64| e.eval_x(x).unwrap();
        // fourth-order central difference
        let s = 1e-3;
        let fd = (-f(x + 2.0 * s) + 8.0 * f(x + s) - 8.0 * f(x - s) + f(x - 2.0 * s)) / (12.0 * s);
        let exact = d.eval_x(x).unwrap();
        worst = worst.max((exact - fd).abs() / exact.abs().max(1.0));
    }
    verdict(
        crashes == 0 && worst < 1e-6,
        format!("{crashes} crashes in 1000 inputs; derivative error {worst:.2e}"),
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Verdict); 13] = [
        ("exact intertwining", c1_intertwining),
        ("dual-semigroup similarity", c2_semigroup),
        (
            "analytic-vs-matrix dual convergence",
            c3_analytic_convergence,
        ),
        ("first-order (Siegmund) dual drift", c4_siegmund),
        ("stable-like reflection dual", c5_stable_reflection),
        ("fractional identities", c6_fractional),
        ("Monte Carlo put-call duality", c7_monte_carlo),
        ("straddle self-symmetry", c8_straddle),
        ("spread symmetry with periodic a", c9_spread),
        ("self-duality detector", c10_self_dual),
        ("order-k monotonicity", c11_monotone),
        ("propagator duality", c12_propagator),
        ("parser fuzz and derivatives", c13_parser),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        println!(
            "criterion {:>2} {} — {name}: {}",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        if !v.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
