use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("quantile {0} is not on the model grid")]
    UnknownQuantile(f64),

    #[error("invalid covariate: {0}")]
    InvalidCovariate(String),

    #[error("probability {0} is outside (0, 1)")]
    InvalidProbability(f64),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("solver did not converge within {0} iterations")]
    NonConvergence(usize),

    /// A per-quantile fit failure, annotated with the grid point.
    #[error("fit failed at p = {p}: {source}")]
    AtQuantile {
        p: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("threshold k = {k} out of range for sample of size {n}")]
    InvalidThreshold { k: usize, n: usize },

    #[error("top order statistics must be positive (rank {rank} is {value})")]
    NonPositiveSample { rank: usize, value: f64 },

    #[error("p = {p} is below the tail threshold p* = {p_star}")]
    BelowThreshold { p: f64, p_star: f64 },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("column `{0}` has zero mean")]
    ZeroMeanColumn(&'static str),

    #[error("model was fitted without normalization constants")]
    MissingNormalization,

    #[error("parse error at line {line}, column {column}: {reason}")]
    Parse {
        line: u64,
        column: String,
        reason: String,
    },

    #[error("duplicate record id `{id}` at line {line}")]
    DuplicateId { id: String, line: u64 },

    #[error("negative value in column `{column}` at line {line}")]
    NegativeValue { column: String, line: u64 },

    #[error("invalid configuration: {0}")]
    InvalidSpec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_quantile(self, p: f64) -> Self {
        Error::AtQuantile {
            p,
            source: Box::new(self),
        }
    }

    /// Strips any per-quantile annotation.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtQuantile { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures of the numerical routines rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::DegenerateDesign(_)
                | Error::NonConvergence(_)
                | Error::NonPositiveSample { .. }
                | Error::DegenerateSample(_)
        )
    }
}
