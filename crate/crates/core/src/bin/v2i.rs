use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use v2i_core::cli::{self, Command, EXIT_USAGE};
use v2i_core::scenario::Scenario;

/// Roadside-unit MAC performance model and simulator.
#[derive(Debug, Parser)]
#[command(name = "v2i", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Scenario file (TOML-like `[section]` / `key = value`).
    #[arg(long)]
    scenario: PathBuf,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `[sim] seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `[sim] tolerance_pct`.
    #[arg(long)]
    tolerance: Option<f64>,
}

fn fail(code: i32, err: &dyn std::fmt::Display) -> ExitCode {
    eprintln!("v2i: {err}");
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let mut sc = match Scenario::load(&args.scenario) {
        Ok(sc) => sc,
        Err(e) => return fail(cli::exit_code_for(&e), &e),
    };
    if let Err(e) = cli::apply_overrides(&mut sc, args.seed, args.tolerance) {
        return fail(cli::exit_code_for(&e), &e);
    }
    let mut out: Box<dyn Write> = match &args.out {
        Some(path) => match File::create(path) {
            Ok(f) => Box::new(BufWriter::new(f)),
            Err(e) => return fail(EXIT_USAGE, &e),
        },
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let result = cli::run(args.command, &sc, &mut out).and_then(|o| {
        out.flush()?;
        Ok(o)
    });
    match result {
        Ok(outcome) => ExitCode::from(outcome.exit_code() as u8),
        Err(e) => fail(cli::exit_code_for(&e), &e),
    }
}
