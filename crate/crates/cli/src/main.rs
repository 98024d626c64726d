use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use roadfield_cli::{init_workers, run, Command};

/// Spreading speeds and fronts for a KPP field coupled to a fast road.
#[derive(Parser)]
#[command(name = "roadfield", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Dispersion curve -Lambda(alpha) with its bound columns.
    Eigen { config: PathBuf },
    /// Spreading speed c*, optional D sweep and exponential-decay speed.
    Speed { config: PathBuf },
    /// Time-dependent run with front tracking.
    Simulate { config: PathBuf },
    /// Stationary state on one periodic cell.
    Stationary { config: PathBuf },
    /// Property suite; exits 3 when a property fails.
    Verify { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    let (cmd, path) = match cli.command {
        Cmd::Eigen { config } => (Command::Eigen, config),
        Cmd::Speed { config } => (Command::Speed, config),
        Cmd::Simulate { config } => (Command::Simulate, config),
        Cmd::Stationary { config } => (Command::Stationary, config),
        Cmd::Verify { config } => (Command::Verify, config),
    };
    let result = init_workers().and_then(|()| run(cmd, &path));
    match result {
        Ok(out) => {
            for p in &out.written {
                eprintln!("wrote {}", p.display());
            }
            println!("{}", out.summary);
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("roadfield: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
