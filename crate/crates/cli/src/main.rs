use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use freeflow_cli::config::parse_tol;
use freeflow_cli::error::{EXIT_OK, EXIT_TOLERANCE};
use freeflow_cli::{configure_threads, execute, CliError, CliResult, Command, Overrides, PlotKind, RunArgs};

/// Lipschitz-free space experiments on rasterized planar domains.
#[derive(Debug, Parser)]
#[command(name = "freeflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory for the report and artifacts.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Units per unit of mass in the flow solver.
    #[arg(long = "mass-scale", global = true, value_name = "N")]
    mass_scale: Option<u64>,
    /// Declare or override a tolerance.
    #[arg(long = "tol", global = true, value_name = "NAME=VAL")]
    tol: Vec<String>,
    /// Emit plot data: field, flow or convergence.
    #[arg(long = "plot", global = true, value_name = "KIND")]
    plot: Vec<String>,
}

fn run_args(cli: Cli) -> CliResult<RunArgs> {
    let config = cli.config.ok_or_else(|| CliError::ConfigInvalid("--config is required".into()))?;
    let tolerances = cli.tol.iter().map(|s| parse_tol(s)).collect::<CliResult<Vec<_>>>()?;
    let plots = cli.plot.iter().map(|s| s.parse()).collect::<CliResult<Vec<PlotKind>>>()?;
    Ok(RunArgs {
        command: cli.command,
        config,
        out: cli.out,
        overrides: Overrides { seed: cli.seed, mass_scale: cli.mass_scale, tolerances },
        plots,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = cli.out.clone();
    let result = configure_threads().and_then(|()| run_args(cli)).and_then(|args| execute(&args));
    match result {
        Ok(report) => {
            for c in report.checks.iter().filter(|c| !c.passed) {
                eprintln!("check failed: {} = {}", c.name, c.value);
            }
            println!("{}", out.join("report.json").display());
            ExitCode::from(if report.passed { EXIT_OK } else { EXIT_TOLERANCE } as u8)
        }
        Err(e) => {
            let doc = format!("{:#}\n", e.to_json());
            if std::fs::create_dir_all(&out).is_ok() {
                let _ = std::fs::write(out.join("error.json"), &doc);
            }
            eprint!("{doc}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
