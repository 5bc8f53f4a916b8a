use thiserror::Error;

/// Every failure the library can report.
///
/// `category()` gives a stable machine-readable tag used by the CLI exit path.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("configuration has {} violation(s): {}", .0.len(), .0.join("; "))]
    Validation(Vec<String>),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("degenerate local frame: position is parallel to velocity")]
    DegenerateFrame,
    #[error("target lies behind the array (d.z' = {0:.3e})")]
    TargetBehindArray(f64),
    #[error("only {visible} satellites above the {mask_deg:.1} deg mask, {required} required")]
    Visibility { visible: usize, required: usize, mask_deg: f64 },
    #[error("degenerate satellite geometry: {0}")]
    Geometry(String),
    #[error("all elevations are zero; weighting undefined")]
    Weighting,
    #[error("delay {delay:.3e} s outside observation window of {window:.3e} s")]
    Window { delay: f64, window: f64 },
    #[error("Doppler information vanished for satellite {0}")]
    RankDeficient(usize),
    #[error("unobservable parameter: {0}")]
    Unobservable(String),
    #[error("desired sensing response is zero")]
    NoSignal,
    #[error("problem is infeasible: {0}")]
    Infeasible(String),
    #[error("problem is unbounded")]
    Unbounded,
    #[error("numerical failure in conic solver: {0}")]
    Numerical(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{source} [scenario {hash}]")]
    Scenario { hash: String, source: Box<Error> },
}

impl Error {
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) | Error::Validation(_) => "config",
            Error::Parse { .. } => "parse",
            Error::DegenerateFrame
            | Error::TargetBehindArray(_)
            | Error::Visibility { .. }
            | Error::Geometry(_)
            | Error::Weighting => "geometry",
            Error::Window { .. } => "waveform",
            Error::RankDeficient(_) | Error::Unobservable(_) => "observability",
            Error::NoSignal => "sensing",
            Error::Infeasible(_) => "infeasible",
            Error::Unbounded => "unbounded",
            Error::Numerical(_) => "numerical",
            Error::Dimension(_) => "dimension",
            Error::Io(_) => "io",
            Error::Scenario { source, .. } => source.category(),
        }
    }

    pub fn with_scenario(self, hash: &str) -> Error {
        match self {
            e @ Error::Scenario { .. } => e,
            e => Error::Scenario { hash: hash.to_string(), source: Box::new(e) },
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
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
