use thiserror::Error;

use crate::heredity::EffectResolution;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by front ends to map errors onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Numeric,
    Capacity,
}

#[derive(Error, Debug)]
pub enum Error {
    #[error("parameter out of range: {0}")]
    ParameterRange(String),

    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{n_atoms} basis functions requested for {group} exceeds the cap of {cap}")]
    Capacity {
        group: EffectResolution,
        n_atoms: usize,
        cap: usize,
    },

    #[error("missing atom count for {0}")]
    MissingAtomCount(EffectResolution),

    #[error("solver did not converge after {sweeps} sweeps (KKT residual {residual:.3e}, tolerance {tolerance:.3e})")]
    NonConvergence {
        sweeps: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("degrees of freedom undefined: n = {n} <= s = {s}")]
    UndefinedDof { n: usize, s: usize },

    #[error("cross-validation fold {fold} has no rows")]
    EmptyFold { fold: usize },

    #[error("prediction point has no nonzero basis evaluation; only an intercept-only interval is available")]
    DegeneratePoint,

    #[error("decorrelated information b = {0:.3e} is not positive")]
    IllConditionedInformation(f64),

    #[error("linear algebra failure: {0}")]
    Linalg(&'static str),

    #[error("unknown test function '{name}'; valid names: {valid}")]
    UnknownFunction { name: String, valid: String },

    #[error("model file schema version {found} is not supported (this build reads version {supported})")]
    VersionMismatch { found: u64, supported: u64 },

    #[error("model file does not match the schema: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Capacity { .. } => ErrorKind::Capacity,
            Error::NonConvergence { .. }
            | Error::NonFinite(_)
            | Error::IllConditionedInformation(_)
            | Error::Linalg(_)
            | Error::UndefinedDof { .. }
            | Error::DegeneratePoint => ErrorKind::Numeric,
            _ => ErrorKind::Input,
        }
    }
}
