use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mdim_cli::{run, Command};

#[derive(Parser)]
#[command(name = "mdim", version, about = "Metric mean dimension with potential: estimates and variational checks")]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Estimate upper and lower metric mean dimension proxies.
    Estimate(Target),
    /// Check the pressure inequalities and emit a pass/fail table.
    Verify(Target),
    /// Build a dictionary and solve the finite max-min.
    Variational(Target),
    /// Solve the Bowen equation by bisection.
    Bowen(Target),
}

#[derive(clap::Args)]
struct Target {
    /// Run configuration (TOML).
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let (cmd, t) = match args.cmd {
        Cmd::Estimate(t) => (Command::Estimate, t),
        Cmd::Verify(t) => (Command::Verify, t),
        Cmd::Variational(t) => (Command::Variational, t),
        Cmd::Bowen(t) => (Command::Bowen, t),
    };
    match run(cmd, &t.config, t.out.as_deref()) {
        Ok(o) => {
            println!("{}: wrote {}", cmd.name(), o.dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("mdim {}: {e}", cmd.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
