mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Cmd, Output};
use config::Opts;

/// Exit status 2: bad flags, config or input. Exit status 3: a build audit,
/// bundle check or exactness check failed.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Verification(String),
}

impl From<czweights::Error> for CliError {
    fn from(e: czweights::Error) -> Self {
        match e {
            czweights::Error::AuditFailed(m) => CliError::Verification(format!("audit failed: {m}")),
            other => CliError::Usage(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "czweights", version, about = "Build, evaluate and certify the sawtooth weight construction")]
struct Cli {
    /// TOML file of option values; command-line flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and audit a construction; writes a JSON bundle
    Build(Opts),
    /// Estimate the A_r characteristic of a construction's weight
    Ar(Opts),
    /// Both sides of the blow-up inequality for one construction
    Certify(Opts),
    /// Certify N = 1..n-max and report the first N with ratio above gamma
    Sweep(Opts),
    /// Solve the weighted problem for a given weight and forcing
    Solve(Opts),
}

fn emit(out: &Output, dir: Option<&PathBuf>) -> Result<(), CliError> {
    match dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
            let path = dir.join(format!("{}.{}", out.stem, out.ext));
            std::fs::write(&path, &out.body).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            // A closed pipe is not worth a panic.
            let _ = stdout.write_all(out.body.as_bytes());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<Output, CliError> {
    let (cmd, flags) = match cli.command {
        Command::Build(o) => (Cmd::Build, o),
        Command::Ar(o) => (Cmd::Ar, o),
        Command::Certify(o) => (Cmd::Certify, o),
        Command::Sweep(o) => (Cmd::Sweep, o),
        Command::Solve(o) => (Cmd::Solve, o),
    };
    let file = match &cli.config {
        Some(path) => config::load(path)?,
        None => Opts::default(),
    };
    let dir = flags.out.clone().or_else(|| file.out.clone());
    let mut out = commands::run(cmd, flags, file)?;
    emit(&out, dir.as_ref())?;
    if let Some(f) = out.failure.take() {
        return Err(CliError::Verification(f));
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Verification(m)) => {
            eprintln!("verification failed: {m}");
            ExitCode::from(3)
        }
    }
}
