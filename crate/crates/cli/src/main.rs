//! Command-line runner. Exit code 0 means every contracted tolerance of the
//! run was met; 1 means the run finished but a tolerance or convergence
//! contract failed; 2 means the run could not be executed at all.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gradvi_core::config::{parse_config, EtaSpec, Formulation, ProblemSpec};
use gradvi_core::runner;

#[derive(Parser)]
#[command(
    name = "gradvi",
    version,
    about = "Solvers and verification harness for variational inequalities with gradient constraints"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON problem spec.
    #[arg(long)]
    config: PathBuf,
    /// Directory that receives the run directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Suppress the human-readable summary.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the spec with its own formulation.
    Solve(RunArgs),
    /// Run both formulations and compare them (spec must have a scalar source).
    Equivalence(RunArgs),
    /// Run the vector reduction study (spec must have a vector source).
    Vector(RunArgs),
    /// Refinement table of the regularity diagnostics over a list of spacings.
    Regularity {
        #[command(flatten)]
        args: RunArgs,
        /// Comma-separated spacings, e.g. `0.03125,0.015625`.
        #[arg(long = "h-list")]
        h_list: String,
    },
    /// Emit the anisotropic distance map only.
    Distance(RunArgs),
}

fn load_spec(args: &RunArgs) -> Result<ProblemSpec, String> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| format!("cannot read {}: {e}", args.config.display()))?;
    parse_config(&text).map_err(|e| e.to_string())
}

fn run_with(spec: ProblemSpec, args: &RunArgs) -> ExitCode {
    match runner::run(&spec, &args.out, args.quiet) {
        Ok(output) => {
            if output.report.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("contracted tolerances not met; see {}", output.dir.display());
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve(args) => match load_spec(&args) {
            Ok(spec) => run_with(spec, &args),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Equivalence(args) => match load_spec(&args) {
            Ok(mut spec) => {
                if matches!(spec.eta, EtaSpec::Vector(_)) {
                    eprintln!("error: equivalence needs a scalar source");
                    return ExitCode::from(2);
                }
                spec.formulation = Some(Formulation::Both);
                run_with(spec, &args)
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Vector(args) => match load_spec(&args) {
            Ok(spec) => {
                if !matches!(spec.eta, EtaSpec::Vector(_)) {
                    eprintln!("error: vector study needs a vector source");
                    return ExitCode::from(2);
                }
                run_with(spec, &args)
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Regularity { args, h_list } => {
            let spec = match load_spec(&args) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let spacings: Result<Vec<f64>, _> =
                h_list.split(',').map(|s| s.trim().parse::<f64>()).collect();
            let spacings = match spacings {
                Ok(v) if !v.is_empty() => v,
                _ => {
                    eprintln!("error: --h-list must be a comma-separated list of spacings");
                    return ExitCode::from(2);
                }
            };
            match runner::refinement_study(&spec, &spacings, &args.out, args.quiet) {
                Ok((_, dir, stable)) => {
                    if stable {
                        ExitCode::SUCCESS
                    } else {
                        eprintln!("refinement not stable within 15%; see {}", dir.display());
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Distance(args) => match load_spec(&args) {
            Ok(spec) => match runner::distance_only(&spec, &args.out, args.quiet) {
                Ok(_) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            },
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
    }
}
