use barrier_hom::config::{parse_config, RunConfig};
use barrier_hom::harness::{report_text, run_all, run_cell, validate_stage};
use barrier_hom::Result;
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "barrier-hom", version, about = "Two-phase periodic homogenization with an imperfect interface")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: cell, effective, macro, micro sweep, report.
    Run { config: PathBuf },
    /// Stop after effective.csv.
    Cell { config: PathBuf },
    /// Parse the config and check the coefficients.
    Validate { config: PathBuf },
}

fn load(path: &Path) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

fn execute(cmd: &Command) -> Result<u8> {
    match cmd {
        Command::Validate { config } => {
            let cfg = load(config)?;
            let (_, alpha_minus_sup, warnings) = validate_stage(&cfg)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            println!("config ok (alpha_minus_sup = {alpha_minus_sup:e})");
            Ok(0)
        }
        Command::Cell { config } => {
            let cfg = load(config)?;
            let (.., eff, warnings) = run_cell(&cfg)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            for p in 0..2 {
                println!("Aeff[{}] = {:?}  B[{}] = {:?}  c[{}] = {}", p + 1, eff.a_eff[p], p + 1, eff.b[p], p + 1, eff.c[p]);
            }
            println!("d = {}", eff.d);
            Ok(0)
        }
        Command::Run { config } => {
            let start = Instant::now();
            let cfg = load(config)?;
            let art = run_all(&cfg)?;
            print!("{}", report_text(&art.report, start.elapsed().as_secs_f64()));
            Ok(if art.report.passed() { 0 } else { 4 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
