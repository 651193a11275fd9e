use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kdual::cli::{run, Command, Globals, Tolerances};

/// Higher-order stochastic duality of one-dimensional Markov generators.
#[derive(Parser)]
#[command(name = "kdual", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    global: GlobalArgs,
}

#[derive(Subcommand)]
enum Cmd {
    /// Order-k dual generator with its diagnostics.
    Dualize,
    /// Put-call, straddle or spread symmetry report.
    Verify,
    /// Order-k stochastic monotonicity check.
    Monotone,
    /// Self-duality of a jump kernel.
    Selfdual,
    /// Chain rule and (f,T)-duality of a time-dependent propagator.
    Propagator,
}

#[derive(Args)]
struct GlobalArgs {
    /// Run configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Directory for the CSV outputs.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Override the number of grid nodes.
    #[arg(long, global = true, value_name = "N")]
    grid_n: Option<usize>,
    /// Override the Monte Carlo seed.
    #[arg(long, global = true, value_name = "S")]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "TOL")]
    tol_limit: Option<f64>,
    #[arg(long, global = true, value_name = "TOL")]
    tol_monotone: Option<f64>,
    #[arg(long, global = true, value_name = "TOL")]
    tol_edge: Option<f64>,
    #[arg(long, global = true, value_name = "TOL")]
    tol_gap: Option<f64>,
    #[arg(long, global = true, value_name = "TOL")]
    tol_selfdual: Option<f64>,
    #[arg(long, global = true, value_name = "TOL")]
    tol_chain: Option<f64>,
    #[arg(long, global = true, value_name = "TOL")]
    tol_ft: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let g = cli.global;
    let Some(config) = g.config else {
        eprintln!("error: --config PATH is required");
        return ExitCode::from(1);
    };
    let globals = Globals {
        config,
        out: g.out,
        grid_n: g.grid_n,
        seed: g.seed,
        tol: Tolerances {
            limit: g.tol_limit,
            monotone: g.tol_monotone,
            edge: g.tol_edge,
            gap: g.tol_gap,
            selfdual: g.tol_selfdual,
            chain: g.tol_chain,
            ft: g.tol_ft,
        },
    };
    let cmd = match cli.command {
        Cmd::Dualize => Command::Dualize,
        Cmd::Verify => Command::Verify,
        Cmd::Monotone => Command::Monotone,
        Cmd::Selfdual => Command::Selfdual,
        Cmd::Propagator => Command::Propagator,
    };
    match run(cmd, &globals) {
        Ok(outcome) => {
            for note in &outcome.notes {
                eprintln!("{note}");
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.passed {
                println!("ok");
                ExitCode::SUCCESS
            } else {
                println!("condition failed");
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
