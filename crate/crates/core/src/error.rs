use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the screening pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset contains a single class (positives: {positives}, negatives: {negatives})")]
    SingleClassDataset { positives: usize, negatives: usize },
    #[error("split ratio {0} outside (0, 1)")]
    RatioOutOfRange(f64),
    #[error("class {class} has {count} members, fewer than k = {k}")]
    TooFewPerClass { k: usize, class: u8, count: usize },
    #[error("k must be at least 2, got {0}")]
    InvalidFoldCount(usize),

    #[error("{index} z-score {value} outside the plausibility window [-10, 10]")]
    ImplausibleZScore { index: &'static str, value: f64 },
    #[error("column `{0}` has no non-missing values; mode is undefined")]
    AllMissingColumn(String),
    #[error("column `{column}`: unknown category `{value}`")]
    UnknownCategory { column: String, value: String },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("missing value in column `{column}` at row {row} with a reject policy")]
    MissingValueRejected { column: String, row: usize },
    #[error("standardization stats cover {expected} columns but data has {got}")]
    StatsDimensionMismatch { expected: usize, got: usize },

    #[error("chi-square requires non-negative values; feature `{0}` has negatives")]
    NegativeValueForChiSquare(String),
    #[error("label vector is constant")]
    ConstantLabel,
    #[error("base model failed during selection: {0}")]
    BaseModelTrainingFailure(String),
    #[error("method scores cover different feature lists")]
    FeatureListMismatch,

    #[error("pooled covariance is singular even after jitter")]
    SingularCovariance,
    #[error("k = {k} exceeds the training set size {n}")]
    KLargerThanTrainingSet { k: usize, n: usize },
    #[error("row has {got} features, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    DivergenceDetected { epoch: usize, loss: f64 },
    #[error("operation requires a {expected} model")]
    WrongArchitecture { expected: &'static str },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("non-binary value {0} where 0/1 expected")]
    NonBinaryValue(f64),
    #[error("evaluation set is empty")]
    EmptyEvaluation,
    #[error("evaluation requires both classes")]
    SingleClassEvaluation,
    #[error("evaluation requires at least one positive")]
    NoPositives,
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("power iteration did not converge for component {0}")]
    ConvergenceFailure(usize),

    #[error("missing run artifact {0}")]
    MissingArtifacts(PathBuf),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Bad input, schema or configuration, as opposed to a numerical or
    /// I/O failure during computation.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::DivergenceDetected { .. }
                | Error::ConvergenceFailure(_)
                | Error::SingularCovariance
                | Error::BaseModelTrainingFailure(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
