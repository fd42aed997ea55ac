use thiserror::Error;

/// Failures while reading or validating an observation table.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed delimited input: {0}")]
    Csv(#[from] csv::Error),
    #[error("mapped column '{0}' is absent from the header")]
    MissingColumn(String),
    #[error("non-binary treatment column '{column}': value '{value}' at data row {row}")]
    NonBinary {
        column: String,
        value: String,
        row: usize,
    },
    #[error("column '{column}' holds a non-numeric or non-finite value '{value}' at data row {row}")]
    NotNumeric {
        column: String,
        value: String,
        row: usize,
    },
    #[error("missing value in column '{column}' at data row {row} (missing-data policy is 'fail')")]
    MissingValue { column: String, row: usize },
    #[error("invalid observation table: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

/// Failures of the least-squares machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegressionError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("rank-deficient design: column '{column}' is collinear with the preceding columns")]
    RankDeficient { column: String },
    #[error("relevance failure: first-stage coefficient on the instrument is {first_stage:e}")]
    Relevance { first_stage: f64 },
    #[error("not enough observations ({n}) for {k} parameters")]
    TooFewRows { n: usize, k: usize },
    #[error("need at least two clusters, found {0}")]
    TooFewClusters(usize),
    #[error("degenerate joint test: covariance submatrix is singular")]
    DegenerateJointTest,
    #[error("stacked system needs at least one equation")]
    EmptySystem,
}

/// Failures of estimand and bound computations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("relevance failure for treatment definition {definition}: first stage {first_stage:e}")]
    Relevance {
        definition: String,
        first_stage: f64,
    },
    #[error("response bound violated by data: {0}")]
    ResponseBound(String),
    #[error("significance level {0} must lie strictly between 0 and 1")]
    Level(f64),
    #[error(transparent)]
    Regression(#[from] RegressionError),
}

/// Structural problems with a population specification.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("stratum probabilities sum to {0}, expected 1")]
    ProbabilitySum(f64),
    #[error("stratum {index}: probability {prob} outside [0, 1]")]
    Probability { index: usize, prob: f64 },
    #[error("P[Z=1] = {0} must lie strictly between 0 and 1")]
    InstrumentShare(f64),
    #[error("stratum {index}: monotonicity violated ({detail})")]
    Monotonicity { index: usize, detail: String },
    #[error("stratum {index}: double exclusion declared but the second-part response depends on z")]
    DoubleExclusion { index: usize },
    #[error("stratum {index}: {detail}")]
    Field { index: usize, detail: String },
    #[error("relevance declared but no full-complier stratum has positive probability")]
    NoFullCompliers,
    #[error("relevance violated in population: the complier set is empty")]
    EmptyComplierSet,
    #[error("population spec must contain at least one stratum")]
    Empty,
    #[error("cannot parse population spec: {0}")]
    Parse(String),
}
