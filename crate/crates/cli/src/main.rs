use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use liftlyap::run::{run_path, Command, RunOptions, EXIT_INPUT};

#[derive(Parser)]
#[command(name = "liftlyap", version, about = "Lift a quotient control Lyapunov function to the full system")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and check the problem file
    Validate(CommonArgs),
    /// Check that the morphism maps trajectories onto quotient trajectories
    Quotient(CommonArgs),
    /// Run the flatness, compatibility and consistency checks
    Integrability(CommonArgs),
    /// Solve for the polynomial correction V and assemble V*
    Lift(CommonArgs),
    /// Build the feedback law and check the decrease of V*
    Synthesize(CommonArgs),
    /// Simulate the closed loop
    Simulate(CommonArgs),
    /// Run every stage
    Report(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Problem file (JSON)
    #[arg(long)]
    spec: PathBuf,
    /// Truncation order of the jet solve
    #[arg(long)]
    order: Option<u32>,
    /// Grid points per axis for pointwise checks
    #[arg(long)]
    grid: Option<usize>,
    /// RK4 step size
    #[arg(long)]
    h: Option<f64>,
    /// Simulation horizon
    #[arg(long)]
    horizon: Option<f64>,
    /// Write the JSON report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for trajectory CSV files
    #[arg(long)]
    trajectories: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            return ExitCode::from(code as u8);
        }
    };
    let (command, args) = match cli.command {
        Cmd::Validate(a) => (Command::Validate, a),
        Cmd::Quotient(a) => (Command::Quotient, a),
        Cmd::Integrability(a) => (Command::Integrability, a),
        Cmd::Lift(a) => (Command::Lift, a),
        Cmd::Synthesize(a) => (Command::Synthesize, a),
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Report(a) => (Command::Report, a),
    };
    let opts = RunOptions {
        order: args.order,
        grid: args.grid,
        h: args.h,
        horizon: args.horizon,
        trajectories: args.trajectories,
    };
    let outcome = run_path(command, &args.spec, &opts);
    let json = outcome.report.to_json();
    match &args.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &json) {
                eprintln!("cannot write {}: {e}", path.display());
                return ExitCode::from(EXIT_INPUT as u8);
            }
        }
        None => {
            let _ = std::io::stdout().write_all(json.as_bytes());
        }
    }
    eprint!("{}", outcome.report.summary());
    ExitCode::from(outcome.exit_code as u8)
}
