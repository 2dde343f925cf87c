use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unbalanced panel: cell (unit {unit}, time {time}) is missing")]
    UnbalancedPanel { unit: String, time: String },

    #[error("non-numeric value {value:?} in column `{column}` at line {line}")]
    NonNumericCell {
        column: String,
        line: u64,
        value: String,
    },

    #[error("duplicate observation for (unit {unit}, time {time})")]
    DuplicateKey { unit: String, time: String },

    #[error("missing column `{0}` in CSV header")]
    MissingColumn(String),

    #[error("transform `{0}` has already been applied")]
    AlreadyTransformed(&'static str),

    #[error("regressor {0} has zero variance")]
    ZeroVariance(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{solver} did not converge within {iterations} iterations")]
    DidNotConverge {
        solver: &'static str,
        iterations: usize,
    },

    #[error("column {column} is (numerically) a linear combination of the others: tau^2 = {tau_sq:e}")]
    DegenerateColumn { column: usize, tau_sq: f64 },

    #[error("bandwidth {bandwidth} is not smaller than the sample length {periods}")]
    BandwidthTooLarge { bandwidth: f64, periods: usize },

    #[error("singular value decomposition failed: {0}")]
    SvdFailure(String),

    #[error("D(Lambda) is numerically singular (condition number {0:e})")]
    SingularDJ(f64),

    #[error("Sigma_J is not positive definite")]
    SingularSigmaJ,

    #[error("variance quadratic form is not positive ({0:e})")]
    NonPositiveVariance(f64),

    #[error("residual series of unit {0} is constant")]
    ConstantResidualSeries(usize),

    #[error("active set is empty")]
    EmptyActiveSet,

    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Machine-readable category used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Csv(_)
            | Error::UnbalancedPanel { .. }
            | Error::NonNumericCell { .. }
            | Error::DuplicateKey { .. }
            | Error::MissingColumn(_) => "data",
            Error::Json(_) | Error::ArtifactMismatch(_) => "artifact",
            Error::AlreadyTransformed(_)
            | Error::DimensionMismatch(_)
            | Error::InvalidArgument(_)
            | Error::BandwidthTooLarge { .. } => "config",
            _ => "numerical",
        }
    }

    /// Stable process exit code: 1 for configuration and IO problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        if self.kind() == "numerical" {
            2
        } else {
            1
        }
    }
}
