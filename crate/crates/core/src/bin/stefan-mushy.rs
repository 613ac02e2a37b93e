use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stefan_mushy::config::{parse_config, RunConfig};
use stefan_mushy::runner::{run_control, run_simulate, run_sweep, run_verify_to, VerifyOptions};
use stefan_mushy::Error;

#[derive(Parser)]
#[command(version, about = "Mushy-region control for the regularized two-phase Stefan system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration (verify falls back to the desk instance).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, hide = true)]
    debug_corrupt_adjoint: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Forward run under the configured flux.
    Simulate,
    /// Drive the terminal mushy region over the target.
    Control,
    /// Run every invariant suite.
    Verify,
    /// Repeat a run over the values of one parameter.
    Sweep,
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_VERIFY: u8 = 4;

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Config { .. } | Error::Parse(_) | Error::Io { .. } => ExitCode::from(EXIT_VALIDATION),
        _ => ExitCode::from(EXIT_SOLVER),
    }
}

fn load(cli: &Cli) -> Result<RunConfig, Error> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            parse_config(&text)?
        }
        None if matches!(cli.command, Command::Verify) => RunConfig::desk(),
        None => return Err(Error::Config { key: "--config".into(), constraint: "required".into() }),
    };
    if let Some(out) = &cli.out {
        config.output = out.clone();
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 || rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            eprintln!("error: invalid `--threads`");
            return ExitCode::from(EXIT_VALIDATION);
        }
    }
    let config = match load(&cli) {
        Ok(c) => c,
        Err(e) => return exit_for(&e),
    };
    let out = config.output.clone();
    let result = match cli.command {
        Command::Simulate => run_simulate(&config, &out).map(|s| {
            println!("picard iterations {}, energy ratio {:.4e}", s.picard_iterations, s.energy.energy_ratio);
            true
        }),
        Command::Control => run_control(&config, &out).map(|r| {
            println!("success {}, coverage {}, outer iterations {}", r.success, r.final_coverage, r.outer_iterations);
            r.success
        }),
        Command::Verify => {
            let options = VerifyOptions { corrupt_adjoint: cli.debug_corrupt_adjoint };
            match run_verify_to(&config, &out, options) {
                Ok(report) => {
                    for c in &report.checks {
                        println!("{} {} {:.4e} (threshold {:.1e})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.measured, c.threshold);
                    }
                    return if report.passed { ExitCode::SUCCESS } else { ExitCode::from(EXIT_VERIFY) };
                }
                Err(e) => return exit_for(&e),
            }
        }
        Command::Sweep => run_sweep(&config, &out).map(|rows| {
            for r in &rows {
                println!("{:e} {}", r.value, if r.ok { "ok" } else { "failed" });
            }
            rows.iter().all(|r| r.ok)
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_SOLVER),
        Err(e) => exit_for(&e),
    }
}
