//! Command runners behind the `kdual` binary. Each command reads a
//! [`Config`], writes CSV files into the output directory and reports
//! whether the checked condition holds.

use std::fmt;
use std::path::PathBuf;

use crate::config::{Config, ConfigError};
use crate::duality::{
    analytic_dual, check_monotone_spec, check_self_dual, extract_diffusion, extract_drift,
    FOperator, SelfDualOrder,
};
use crate::error::Error;
use crate::evolution::{
    chain_rule_residual, dual_propagator, ft_duality_residual, propagator_evolve, Propagator,
};
use crate::model::JumpSpec;
use crate::montecarlo::{PathConfig, PathScheme};
use crate::options::{
    gap_rows_csv, putcall_symmetry_report, spread_symmetry_report, straddle_selfsymmetry_report,
    Method, ReportSettings,
};
use crate::report::{Cell, CsvTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Dualize,
    Verify,
    Monotone,
    Selfdual,
    Propagator,
}

/// Tolerance overrides by name (`--tol-<name>`); unset ones fall back to
/// `tol_<name>` in `[duality]`, then to the defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Tolerances {
    pub limit: Option<f64>,
    pub monotone: Option<f64>,
    pub edge: Option<f64>,
    pub gap: Option<f64>,
    pub selfdual: Option<f64>,
    pub chain: Option<f64>,
    pub ft: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Globals {
    pub config: PathBuf,
    pub out: PathBuf,
    pub grid_n: Option<usize>,
    pub seed: Option<u64>,
    pub tol: Tolerances,
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Compute(Error),
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Compute(e) => write!(f, "{e}"),
            CliError::Io(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Compute(e)
    }
}

/// What a command found.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// The checked condition holds (exit 0) or not (exit 2).
    pub passed: bool,
    pub files: Vec<PathBuf>,
    pub notes: Vec<String>,
}

struct Ctx<'a> {
    cfg: Config,
    g: &'a Globals,
    files: Vec<PathBuf>,
    notes: Vec<String>,
}

impl Ctx<'_> {
    fn tol(&self, name: &str, flag: Option<f64>, default: f64) -> Result<f64, CliError> {
        Ok(match flag {
            Some(v) => v,
            None => self
                .cfg
                .num("duality", &format!("tol_{name}"))?
                .unwrap_or(default),
        })
    }

    fn write(&mut self, name: &str, body: String) -> Result<(), CliError> {
        let path = self.g.out.join(name);
        std::fs::write(&path, body)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.files.push(path);
        Ok(())
    }

    fn order(&self) -> Result<f64, CliError> {
        Ok(self.cfg.req_num("duality", "k")?)
    }
}

fn kv_table(rows: &[(&str, Cell<'_>)]) -> String {
    let mut t = CsvTable::new(&["quantity", "value"]);
    for (k, v) in rows {
        t.row(&[Cell::Text(k), *v]);
    }
    t.finish()
}

fn xy_table(header: &str, rows: &[(f64, f64)]) -> String {
    let mut t = CsvTable::new(&["x", header]);
    for &(x, v) in rows {
        t.row(&[Cell::Num(x), Cell::Num(v)]);
    }
    t.finish()
}

pub fn run(cmd: Command, g: &Globals) -> Result<Outcome, CliError> {
    let cfg = Config::load(&g.config)?;
    std::fs::create_dir_all(&g.out)
        .map_err(|e| CliError::Io(format!("{}: {e}", g.out.display())))?;
    let mut ctx = Ctx {
        cfg,
        g,
        files: Vec::new(),
        notes: Vec::new(),
    };
    let passed = match cmd {
        Command::Dualize => dualize(&mut ctx)?,
        Command::Verify => verify(&mut ctx)?,
        Command::Monotone => monotone(&mut ctx)?,
        Command::Selfdual => selfdual(&mut ctx)?,
        Command::Propagator => propagator(&mut ctx)?,
    };
    Ok(Outcome {
        passed,
        files: ctx.files,
        notes: ctx.notes,
    })
}

fn dualize(ctx: &mut Ctx) -> Result<bool, CliError> {
    let spec = ctx.cfg.model()?;
    let grid = ctx.cfg.grid(ctx.g.grid_n)?;
    let k = ctx.order()?;
    let tol = ctx.tol("limit", ctx.g.tol.limit, 1e-6)?;
    let method = ctx
        .cfg
        .choice("duality", "method", &["analytic", "matrix"])?;
    let use_matrix = method.as_deref() == Some("matrix");

    let r = analytic_dual(&spec, k, &grid, tol)?;
    let d = &r.diagnostics;
    let passed = d.monotone_ok && d.limit_condition_residual <= tol;
    let mut rows = vec![
        ("k", Cell::Num(k)),
        ("closed_form", Cell::Bool(r.analytic.is_some())),
        ("monotone_ok", Cell::Bool(d.monotone_ok)),
        ("min_jump_density", Cell::Num(d.min_jump_density)),
        (
            "limit_condition_residual",
            Cell::Num(d.limit_condition_residual),
        ),
        ("left_limit_residual", Cell::Num(d.left_limit_residual)),
        ("sub_markov", Cell::Bool(d.sub_markov)),
        ("tol", Cell::Num(tol)),
    ];
    if let Some(disc) = d.discrepancy {
        rows.push(("discrepancy", Cell::Num(disc)));
    }
    rows.push(("dual_exists", Cell::Bool(d.dual_exists())));
    rows.push(("markov_dual", Cell::Bool(passed)));
    ctx.write("dual_report.csv", kv_table(&rows))?;

    let shown = match (&r.analytic, use_matrix) {
        (Some(a), false) => &a.matrix,
        _ => &r.matrix,
    };
    ctx.write(
        "dual_drift.csv",
        xy_table("drift", &extract_drift(shown, 3)),
    )?;
    ctx.write(
        "dual_diffusion.csv",
        xy_table("diffusion", &extract_diffusion(shown, 3)),
    )?;
    ctx.write("dual_matrix.csv", r.matrix.to_csv())?;
    if let Some(a) = &r.analytic {
        let mut killing = Vec::with_capacity(grid.n());
        for x in grid.nodes() {
            killing.push((x, a.killing.eval_x(x).map_err(Error::from)?));
        }
        ctx.write("dual_killing.csv", xy_table("killing", &killing))?;
        if let Some(j) = &a.jump {
            let mut t = CsvTable::new(&["x", "y", "density"]);
            for i in 0..grid.n() {
                for c in 0..grid.n() {
                    t.row(&[
                        Cell::Num(grid.node(i)),
                        Cell::Num(grid.node(c)),
                        Cell::Num(j[(i, c)]),
                    ]);
                }
            }
            ctx.write("dual_jump.csv", t.finish())?;
        }
    }
    if !passed {
        ctx.notes.push(if d.dual_exists() {
            "dual exists only as a sub-Markov process".into()
        } else {
            "conditions for a dual process fail".into()
        });
    }
    Ok(passed)
}

fn verify(ctx: &mut Ctx) -> Result<bool, CliError> {
    ctx.cfg.require_section("task")?;
    let spec = ctx.cfg.model()?;
    let grid = ctx.cfg.grid(ctx.g.grid_n)?;
    let tol = ctx.tol("gap", ctx.g.tol.gap, 1e-2)?;
    let t = ctx.cfg.req_num("task", "t")?;
    let report = ctx
        .cfg
        .choice("task", "report", &["putcall", "straddle", "spread"])?;
    let mc = if ctx.cfg.has_section("mc") {
        let dt = ctx.cfg.req_num("mc", "dt")?;
        let paths = ctx.cfg.count("mc", "paths")?.unwrap_or(10_000);
        let seed = match ctx.g.seed {
            Some(s) => s,
            None => ctx.cfg.count("mc", "seed")?.unwrap_or(0) as u64,
        };
        Some(PathConfig::new(
            dt,
            paths,
            seed,
            PathScheme::for_spec(&spec),
        )?)
    } else {
        None
    };
    let settings = ReportSettings { grid, tol, mc };
    let pairs = || -> Result<Vec<(f64, f64)>, CliError> {
        Ok(ctx.cfg.pairs("task", "pairs")?.ok_or_else(|| ConfigError {
            file: ctx.g.config.display().to_string(),
            line: 0,
            message: "[task] needs 'pairs'".into(),
        })?)
    };
    let rows = match report.as_deref() {
        None | Some("putcall") => {
            let k = ctx.order()?;
            let list = |key: &str| -> Result<Vec<f64>, CliError> {
                Ok(ctx.cfg.list("task", key)?.ok_or_else(|| ConfigError {
                    file: ctx.g.config.display().to_string(),
                    line: 0,
                    message: format!("[task] needs '{key}'"),
                })?)
            };
            let strikes = list("strikes")?;
            let spots = list("spots")?;
            let methods: &[Method] = match ctx
                .cfg
                .choice("task", "method", &["grid", "mc", "both"])?
                .as_deref()
            {
                Some("mc") => &[Method::MonteCarlo],
                Some("both") => &[Method::Grid, Method::MonteCarlo],
                _ => &[Method::Grid],
            };
            let mut rows = Vec::new();
            for &m in methods {
                rows.extend(putcall_symmetry_report(
                    &spec, k, &strikes, &spots, t, m, &settings,
                )?);
            }
            rows
        }
        Some("straddle") => {
            straddle_selfsymmetry_report(&spec, ctx.order()?, &pairs()?, t, &settings)?
        }
        _ => {
            let alpha = ctx.cfg.req_num("task", "alpha")?;
            let beta = ctx.cfg.req_num("task", "beta_shift")?;
            let r = spread_symmetry_report(&spec, alpha, beta, &pairs()?, t, &settings)?;
            if r.periodicity_warning {
                ctx.notes.push(format!(
                    "warning: a is not periodic with period {} (or the model is not a(x) d²/dx²); gaps are not asserted",
                    beta - alpha
                ));
            }
            r.rows
        }
    };
    ctx.write("verify.csv", gap_rows_csv(&rows))?;
    Ok(rows.iter().all(|r| r.pass))
}

fn monotone(ctx: &mut Ctx) -> Result<bool, CliError> {
    let spec = ctx.cfg.model()?;
    let grid = ctx.cfg.grid(ctx.g.grid_n)?;
    let k = ctx.order()?;
    let t = ctx.cfg.num("task", "t")?.unwrap_or(0.5);
    let tol = match ctx.g.tol.monotone {
        Some(v) => Some(v),
        None => ctx.cfg.num("duality", "tol_monotone")?,
    };
    let edge = ctx.tol("edge", ctx.g.tol.edge, 5e-2)?;
    let r = check_monotone_spec(&spec, &grid, k, t, tol)?;
    let edges_ok = r.right_edge_error <= edge && r.left_edge_error <= edge;
    let passed = r.monotone && edges_ok;
    ctx.write(
        "monotone.csv",
        kv_table(&[
            ("k", Cell::Num(r.k)),
            ("t", Cell::Num(r.t)),
            ("min_derivative", Cell::Num(r.min_derivative)),
            ("tol", Cell::Num(r.tol)),
            ("monotone", Cell::Bool(r.monotone)),
            ("right_edge_error", Cell::Num(r.right_edge_error)),
            ("left_edge_error", Cell::Num(r.left_edge_error)),
            ("edge_tol", Cell::Num(edge)),
            ("edges_ok", Cell::Bool(edges_ok)),
        ]),
    )?;
    Ok(passed)
}

fn selfdual(ctx: &mut Ctx) -> Result<bool, CliError> {
    let spec = ctx.cfg.model()?;
    let grid = ctx.cfg.grid(ctx.g.grid_n)?;
    let k = ctx.order()?;
    let tol = ctx.tol("selfdual", ctx.g.tol.selfdual, 1e-6)?;
    let nu = match &spec.jump {
        JumpSpec::Density { nu, .. } => nu.clone(),
        _ => {
            return Err(
                Error::Invalid("selfdual needs jump = density with a kernel 'nu'".into()).into(),
            )
        }
    };
    let order = if k.fract() == 0.0 {
        SelfDualOrder::from_k(k as u32)
    } else {
        None
    }
    .ok_or_else(|| Error::OrderOutOfRange {
        order: k,
        what: "self-duality check (k must be 1 or 2)",
    })?;
    let residual = check_self_dual(&nu, order, &grid)?;
    let passed = residual <= tol;
    ctx.write(
        "selfdual.csv",
        kv_table(&[
            ("k", Cell::Num(k)),
            ("residual", Cell::Num(residual)),
            ("tol", Cell::Num(tol)),
            ("self_dual", Cell::Bool(passed)),
        ]),
    )?;
    Ok(passed)
}

fn propagator(ctx: &mut Ctx) -> Result<bool, CliError> {
    ctx.cfg.require_section("task")?;
    let spec = ctx.cfg.model()?;
    let grid = ctx.cfg.grid(ctx.g.grid_n)?;
    let k = ctx.order()?;
    let horizon = ctx.cfg.req_num("task", "horizon")?;
    let dt = ctx.cfg.req_num("task", "dt")?;
    let mid = ctx.cfg.num("task", "s")?.unwrap_or(0.5 * horizon);
    let chain_tol = ctx.tol("chain", ctx.g.tol.chain, 1e-8)?;
    let ft_tol = ctx.tol("ft", ctx.g.tol.ft, 1e-3)?;

    let p = Propagator::new(spec, grid, horizon, dt)?;
    let f = FOperator::new(k, &grid)?;
    let chain = chain_rule_residual(|s, t| propagator_evolve(&p, s, t), 0.0, mid, horizon)?;
    let dual_chain = chain_rule_residual(|s, t| dual_propagator(&p, &f, s, t), 0.0, mid, horizon)?;
    let ft = ft_duality_residual(&p, &f, 0.0, horizon)?;
    let passed = chain <= chain_tol && dual_chain <= chain_tol && ft <= ft_tol;
    ctx.write(
        "propagator.csv",
        kv_table(&[
            ("k", Cell::Num(k)),
            ("horizon", Cell::Num(horizon)),
            ("dt", Cell::Num(dt)),
            ("chain_rule_residual", Cell::Num(chain)),
            ("dual_chain_rule_residual", Cell::Num(dual_chain)),
            ("chain_tol", Cell::Num(chain_tol)),
            ("ft_duality_residual", Cell::Num(ft)),
            ("ft_tol", Cell::Num(ft_tol)),
            ("pass", Cell::Bool(passed)),
        ]),
    )?;
    Ok(passed)
}
