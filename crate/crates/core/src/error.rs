use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate domain specification: {0}")]
    DegenerateSpec(String),
    #[error("rasterized interior splits into {components} components")]
    DisconnectedInterior { components: usize },
    #[error("no cell survives erosion at depth {depth}")]
    EmptyErosion { depth: f64 },
    #[error("point ({}, {}) is outside the domain", .0[0], .0[1])]
    PointOutsideDomain([f64; 2]),
    #[error("path has zero length")]
    ZeroLengthPath,
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("mollifier radius {radius} is below the grid spacing {h}")]
    KernelTooSmall { radius: f64, h: f64 },
    #[error("cell {0} has no interior axis neighbour")]
    IsolatedCell(usize),
    #[error("path sample ({}, {}) falls outside the field support", .0[0], .0[1])]
    PathLeavesSupport([f64; 2]),
    #[error("loop {0} is not contained in the mollified support")]
    LoopOutsideRegion(usize),

    #[error("field is not conservative: max loop integral {max_loop_integral} exceeds {tolerance}")]
    NotConservative { max_loop_integral: f64, tolerance: f64 },
    #[error("basepoint cell is not in the eroded region")]
    BasepointEroded,

    #[error("spindle tube leaves the domain")]
    SpindleLeavesDomain,
    #[error("spindle endpoints coincide")]
    DegenerateSegment,
    #[error("loop tube of radius {radius} leaves the domain")]
    TubeLeavesDomain { radius: f64 },
    #[error("rectangle is not contained in the domain")]
    RectOutsideDomain,

    #[error("supplies do not balance (net {0})")]
    Unbalanced(f64),
    #[error("some supply cannot reach any demand")]
    Disconnected,
    #[error("field is not summable on the grid")]
    NonSummable,
    #[error("flow solution does not match the molecule: {0}")]
    SolutionMismatch(String),

    #[error("io: {0}")]
    Io(String),
    #[error("csv: {0}")]
    Csv(String),
}

impl Error {
    /// Variant name, stable across message changes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DegenerateSpec(_) => "DegenerateSpec",
            Error::DisconnectedInterior { .. } => "DisconnectedInterior",
            Error::EmptyErosion { .. } => "EmptyErosion",
            Error::PointOutsideDomain(_) => "PointOutsideDomain",
            Error::ZeroLengthPath => "ZeroLengthPath",
            Error::InvalidInput(_) => "InvalidInput",
            Error::KernelTooSmall { .. } => "KernelTooSmall",
            Error::IsolatedCell(_) => "IsolatedCell",
            Error::PathLeavesSupport(_) => "PathLeavesSupport",
            Error::LoopOutsideRegion(_) => "LoopOutsideRegion",
            Error::NotConservative { .. } => "NotConservative",
            Error::BasepointEroded => "BasepointEroded",
            Error::SpindleLeavesDomain => "SpindleLeavesDomain",
            Error::DegenerateSegment => "DegenerateSegment",
            Error::TubeLeavesDomain { .. } => "TubeLeavesDomain",
            Error::RectOutsideDomain => "RectOutsideDomain",
            Error::Unbalanced(_) => "Unbalanced",
            Error::Disconnected => "Disconnected",
            Error::NonSummable => "NonSummable",
            Error::SolutionMismatch(_) => "SolutionMismatch",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
