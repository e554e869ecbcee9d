use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use slowfast_cli::{run, Command, Config, RunConfig, DEFAULT_SEED};

#[derive(Parser)]
#[command(name = "slowfast", version, about = "Fold normal forms, Hopf and canard curves, cycles and slow divergence integrals")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Config file: a JSON object or key = value lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for randomized checks.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides ε from the config.
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Sweep grid `name=lo:hi:count[,name=lo:hi:count]`, or the point count for sdi.
    #[arg(long, global = true)]
    grid: Option<String>,
    /// Integrate and search for cycles in reversed time.
    #[arg(long, global = true)]
    reversed: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Fold, equilibria, A, ω1, ω2, Hopf and canard curves, classification.
    Analyze,
    /// Grid over model parameters with a sign(A) heatmap.
    Sweep,
    /// Trajectory and optional cycle search on the section through E4.
    Simulate,
    /// Slow divergence integral profile and zero count.
    Sdi,
    /// Seeded oracle checks.
    Verify,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let mut values = match cli.config.as_deref().map(Config::load).transpose() {
        Ok(v) => v.unwrap_or_default(),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    if let Some(eps) = cli.eps {
        values.set_f64("eps", eps);
    }
    let seed = match (cli.seed, values.f64("seed")) {
        (Some(s), _) => s,
        (None, Ok(Some(s))) if s >= 0.0 && s.fract() == 0.0 => s as u64,
        (None, Ok(None)) => DEFAULT_SEED,
        _ => {
            eprintln!("error: seed must be a non-negative integer");
            return ExitCode::from(1);
        }
    };
    let command = match cli.command {
        Cmd::Analyze => Command::Analyze,
        Cmd::Sweep => Command::Sweep,
        Cmd::Simulate => Command::Simulate,
        Cmd::Sdi => Command::Sdi,
        Cmd::Verify => Command::Verify,
    };
    let rc = RunConfig { command, values, output_dir: cli.out, seed, grid: cli.grid, reversed: cli.reversed };
    match run(&rc) {
        Ok(o) => {
            // a closed pipe on stdout is not an error of the run
            let mut out = std::io::stdout().lock();
            let _ = write!(out, "{}", o.summary);
            for f in &o.files {
                let _ = writeln!(out, "wrote {}", f.display());
            }
            ExitCode::from(o.exit_code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
