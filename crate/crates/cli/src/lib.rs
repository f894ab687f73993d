//! Configuration-driven experiment runner for `freeflow`.

pub mod commands;
pub mod config;
pub mod error;
pub mod plot;
pub mod report;

use std::path::PathBuf;

pub use commands::Command;
pub use config::{ExperimentConfig, LoadedConfig, Overrides};
pub use error::{CliError, CliResult};
pub use plot::{emit_plot_data, PlotKind};
pub use report::Report;

/// Everything one invocation needs.
#[derive(Debug, Clone)]
pub struct RunArgs {
    pub command: Command,
    pub config: PathBuf,
    pub out: PathBuf,
    pub overrides: Overrides,
    pub plots: Vec<PlotKind>,
}

/// Run a command and write `report.json`, `timings.json` and any requested
/// plot files into the output directory.
pub fn execute(args: &RunArgs) -> CliResult<Report> {
    let cfg = LoadedConfig::from_path(&args.config, &args.overrides)?;
    let (mut report, timings) = commands::run(args.command, &cfg, &args.out)?;
    for &kind in &args.plots {
        let path = emit_plot_data(&report, kind, &args.out)?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        report.artifacts.push(name);
    }
    std::fs::write(args.out.join("report.json"), report.to_json())?;
    let timings = serde_json::json!({ "command": args.command.name(), "seconds": timings });
    std::fs::write(args.out.join("timings.json"), format!("{timings:#}\n"))?;
    Ok(report)
}

/// Cap the global rayon pool from `FREEFLOW_THREADS`.
pub fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("FREEFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::ConfigInvalid(format!("FREEFLOW_THREADS must be a positive integer, got `{raw}`")))?;
    // a pool that is already built keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}
