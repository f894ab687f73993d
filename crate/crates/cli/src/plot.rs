use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{invalid, CliError, CliResult};
use crate::report::Report;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Field,
    Flow,
    Convergence,
}

impl PlotKind {
    pub fn name(self) -> &'static str {
        match self {
            PlotKind::Field => "field",
            PlotKind::Flow => "flow",
            PlotKind::Convergence => "convergence",
        }
    }
}

impl FromStr for PlotKind {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "field" => Ok(PlotKind::Field),
            "flow" => Ok(PlotKind::Flow),
            "convergence" => Ok(PlotKind::Convergence),
            _ => Err(invalid(format!("unknown plot kind `{s}`"))),
        }
    }
}

/// Write `plot_<kind>.csv` into `dir`.
///
/// Field plots use the `(i, j, cx, cy, vx, vy)` schema, flow plots the arc
/// schema with endpoint positions, convergence plots `(h, k, error)` rows.
pub fn emit_plot_data(report: &Report, kind: PlotKind, dir: &Path) -> CliResult<PathBuf> {
    let missing = || CliError::MissingSeries(kind.name().to_string());
    let path = dir.join(format!("plot_{}.csv", kind.name()));
    match kind {
        PlotKind::Field => std::fs::write(&path, report.series.field.as_ref().ok_or_else(missing)?)?,
        PlotKind::Flow => std::fs::write(&path, report.series.flow.as_ref().ok_or_else(missing)?)?,
        PlotKind::Convergence => {
            let rows = report.series.convergence.as_ref().ok_or_else(missing)?;
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["h", "k", "error"])?;
            for r in rows {
                w.serialize((r.h, r.k, r.error))?;
            }
            w.flush()?;
        }
    }
    Ok(path)
}
