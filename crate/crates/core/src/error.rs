use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("population is empty")]
    EmptyPopulation,

    #[error("{field}: probability {value} outside [0, 1]")]
    ProbabilityOutOfRange { field: String, value: String },

    #[error("deck has no cards")]
    EmptyDeck,

    #[error("no compliers in the population; the estimand has a zero denominator")]
    NoCompliers,

    #[error("assignment probability {0} must lie strictly between 0 and 1")]
    DegenerateAssignment(String),

    #[error("individual index {index} out of range for population of size {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("conditioning event has probability zero")]
    ZeroConditionProbability,

    #[error("query mentions {0} in both the event and the condition")]
    OverlappingQuery(&'static str),

    #[error("weak instrument: take-rate difference {denominator} is within tolerance of zero")]
    WeakInstrument { denominator: String },

    #[error("negative subpopulation proportion {value}; the no-defiers assumption is violated")]
    NegativeProportion { value: String },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("assignment group {assign} has no records")]
    EmptyGroup { assign: u8 },

    #[error("dataset carries no latent individual tags")]
    MissingLatentTags,

    #[error("invalid generator fractions: {0}")]
    InvalidFractions(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema violation at `{field}`: {message}")]
    SchemaViolation { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Stable snake_case name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyPopulation => "empty_population",
            Error::ProbabilityOutOfRange { .. } => "probability_out_of_range",
            Error::EmptyDeck => "empty_deck",
            Error::NoCompliers => "no_compliers",
            Error::DegenerateAssignment(_) => "degenerate_assignment",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::ZeroConditionProbability => "zero_condition_probability",
            Error::OverlappingQuery(_) => "overlapping_query",
            Error::WeakInstrument { .. } => "weak_instrument",
            Error::NegativeProportion { .. } => "negative_proportion",
            Error::InvalidParams(_) => "invalid_params",
            Error::EmptyGroup { .. } => "empty_group",
            Error::MissingLatentTags => "missing_latent_tags",
            Error::InvalidFractions(_) => "invalid_fractions",
            Error::Parse { .. } => "parse_error",
            Error::SchemaViolation { .. } => "schema_violation",
            Error::Io(_) => "io_error",
        }
    }
}
