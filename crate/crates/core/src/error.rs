use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("duplicate observation for series '{series}' at {timestamp}")]
    DuplicateKey { series: String, timestamp: String },

    #[error("series '{series}' has irregular spacing: {previous} -> {next}")]
    IrregularSpacing {
        series: String,
        previous: String,
        next: String,
    },

    #[error("row {row}: cannot parse {what} from '{value}'")]
    Parse {
        row: usize,
        what: &'static str,
        value: String,
    },

    #[error("missing column '{0}'")]
    MissingColumn(String),

    #[error("no series survive filter (min_obs = {min_obs})")]
    EmptyPanel { min_obs: usize },

    #[error("index {index} out of range for series '{series}' of length {len}")]
    OutOfRange { series: String, index: usize, len: usize },

    #[error("series '{series}' is too short: need {needed} observations, have {have}")]
    InsufficientHistory { series: String, needed: usize, have: usize },

    #[error("missing prediction for step {step} required by lag {lag}")]
    MissingPrediction { step: usize, lag: usize },

    #[error("invalid configuration at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("singular normal equations; use pooled-ridge with a positive penalty")]
    Singular,

    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("misaligned forecasts: {0}")]
    Misaligned(String),

    #[error("quantile levels are not symmetric about 0.5: {0}")]
    AsymmetricLevels(String),

    #[error("need at least {needed} models, leaderboard has {have}")]
    PoolTooSmall { needed: usize, have: usize },

    #[error("all values excluded from aggregation")]
    AllExcluded,

    #[error("baseline value is zero for '{0}'")]
    ZeroBaseline(String),

    #[error("baseline '{0}' not found")]
    MissingBaseline(String),

    #[error("invalid rank matrix: {0}")]
    InvalidRankMatrix(String),

    #[error("unsupported alpha {0}; supported values are 0.05 and 0.10")]
    UnsupportedAlpha(f64),

    #[error("scenario '{method}' r={retrain} failed at origin {origin}: {source}")]
    ScenarioFailed {
        method: String,
        retrain: usize,
        origin: usize,
        #[source]
        source: Box<HarnessError>,
    },

    #[error("empty result store")]
    EmptyStore,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        HarnessError::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
