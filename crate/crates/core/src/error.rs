use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is singular: smallest singular value {sigma_min:e} below tolerance {tol:e}")]
    SingularMatrix { sigma_min: f64, tol: f64 },

    #[error("periodic system needs at least one matrix")]
    EmptyPeriod,

    #[error("rate schedule leaves time {0} uncovered")]
    ScheduleGap(i64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("time {time} outside the configured horizon [{lo}, {hi}]")]
    OutOfHorizon { time: i64, lo: i64, hi: i64 },

    #[error("operation requires a nonzero subspace")]
    ZeroSubspace,

    #[error("columns are linearly dependent (relative pivot {pivot:e})")]
    RankDeficient { pivot: f64 },

    #[error("invalid dimensions: {0}")]
    DimensionError(String),

    #[error("subspaces do not form a splitting: {0}")]
    InvalidSplitting(String),

    #[error("filtration dimension unstable inside gap {gap}: sampled dimensions {dims:?}")]
    UnstableDimension { gap: usize, dims: Vec<usize> },

    #[error("spectral decomposition defect: {0}")]
    DecompositionDefect(String),

    #[error("no spectrum structure: {0}")]
    NoSpectrumStructure(String),

    #[error("system is not dichotomous on the splitting: {0}")]
    NotDichotomous(String),

    #[error("claimed tail estimate fails: ratio {observed:e} below constant {claimed:e} at window ({m}, {n})")]
    TailEstimateInvalid { observed: f64, claimed: f64, m: i64, n: i64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
