use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gradflow::config::{RunConfig, PRESETS};
use gradflow::driver::{self, exit_code};
use gradflow::solver::StoreRule;
use gradflow::Error;

/// Gradient-flow verification lab for nonlinear Fokker-Planck equations.
#[derive(Parser)]
#[command(name = "gradflow", version, after_help = scenario_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory (overrides [output] directory).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Store every N-th time step (overrides [time] store settings).
    #[arg(long, global = true, value_name = "N")]
    store_every: Option<usize>,
    /// Seed for randomized probe sets (overrides [verify] seed).
    #[arg(long, global = true, value_name = "K")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario and run every enabled check.
    Run { config: PathBuf },
    /// Report the structural hypotheses for the configured model.
    Validate { config: PathBuf },
    /// Repeat a scenario on successively finer grids and fit orders.
    Ladder { config: PathBuf },
}

fn scenario_help() -> String {
    let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
    format!(
        "A config argument may also name a shipped scenario: {}",
        names.join(", ")
    )
}

fn load(path: &Path, cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(n) = cli.store_every {
        if n == 0 {
            return Err(Error::Parse {
                line: 0,
                column: 0,
                message: "--store-every must be positive".into(),
            });
        }
        cfg.solver.store = StoreRule::Every(n);
    }
    if let Some(k) = cli.seed {
        cfg.verify.seed = k;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.output.directory.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name))
}

fn print_summary(report: &gradflow::verify::VerificationReport) {
    for c in &report.checks {
        println!(
            "{:<4} {:<32} value {:>12.4e}  tol {:>10.3e}  [{}]",
            if c.pass { "ok" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance,
            c.anchor
        );
    }
    for n in &report.notes {
        eprintln!("note: {n}");
    }
}

fn execute(cli: &Cli) -> Result<bool, Error> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(config, cli)?;
            let art = driver::run(&cfg)?;
            let dir = out_dir(cli, &cfg);
            driver::write_run(&dir, &art)?;
            print_summary(&art.report);
            println!("artifacts in {}", dir.display());
            Ok(art.report.pass())
        }
        Command::Validate { config } => {
            let cfg = load(config, cli)?;
            let rep = driver::validate(&cfg)?;
            for l in &rep.lines {
                println!("{l}");
            }
            Ok(rep.pass)
        }
        Command::Ladder { config } => {
            let cfg = load(config, cli)?;
            let study = driver::refinement_study(&cfg)?;
            let dir = out_dir(cli, &cfg);
            driver::write_refinement(&dir, &study)?;
            for l in &study.levels {
                println!("cells {:>6}  h {:.4e}", l.cells, l.metrics.h);
            }
            print_summary(&study.report);
            println!("artifacts in {}", dir.display());
            Ok(study.report.pass())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
