//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("synthesis spec infeasible: {0}")]
    SpecInfeasible(String),

    #[error("no annotated voxels available for fitting")]
    NoAnnotations,

    #[error("ensemble too small: need at least 2 members, got {0}")]
    EnsembleTooSmall(usize),

    #[error("patch {patch:?} larger than volume {dims:?}")]
    PatchLargerThanVolume { patch: [usize; 3], dims: [usize; 3] },

    #[error("need at least 2 cycles for a budget curve, got {0}")]
    TooFewCycles(usize),

    #[error("degenerate efficiency fit: start performance equals full-data performance")]
    DegenerateFit,

    #[error("seed mismatch: {0}")]
    SeedMismatch(String),

    #[error("starting budget infeasible: class {0} has no foreground voxels in the pool")]
    InfeasibleStart(u8),

    #[error("class {0} absent from every label volume")]
    ClassAbsent(u8),

    #[error("inconsistent runs: {0}")]
    InconsistentRuns(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("cycle {cycle}: {source}")]
    Cycle {
        cycle: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json { context: context.into(), source }
    }

    pub fn csv(context: impl Into<String>, source: csv::Error) -> Self {
        Error::Csv { context: context.into(), source }
    }

    /// Process exit code for the CLI: 2 for configuration problems,
    /// 3 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::SpecInfeasible(_) => 2,
            Error::Cycle { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
