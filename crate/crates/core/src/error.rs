use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument outside the domain of the operation (negative field, r² ≥ 1, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// One or more configuration inconsistencies, all reported at once.
    #[error("invalid configuration: {}", .0.join("; "))]
    Validation(Vec<String>),

    /// The record is too short to separate the spectral lines.
    #[error("insufficient frequency resolution: {0}")]
    Resolution(String),

    #[error("numerically singular matrix: {0}")]
    Singular(String),

    /// Accumulated intracavity phase difference exceeds π/2: the two
    /// polarisations no longer share a resonance.
    #[error("cavity splits into two resonances (accumulated phase {0:.3e} rad > π/2)")]
    TwoResonance(f64),

    #[error("modulation line at 2ν_mod is absent")]
    ModulationAbsent,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Stable machine-readable tag, used for process exit codes and error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Validation(_) => "validation",
            Error::Resolution(_) => "resolution",
            Error::Singular(_) => "singular",
            Error::TwoResonance(_) => "two_resonance",
            Error::ModulationAbsent => "modulation_absent",
            Error::Degenerate(_) => "degenerate",
            Error::Io(_) => "io",
            Error::Parse(_) => "parse",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
