use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid sentence: {0}")]
    InvalidSentence(String),

    #[error("overlapping spans: [{0},{1}) and [{2},{3})")]
    OverlappingSpans(usize, usize, usize, usize),

    #[error("span [{start},{end}) out of range for sentence of length {len}")]
    SpanOutOfRange { start: usize, end: usize, len: usize },

    #[error("tokenization mismatch: {0}")]
    TokenizationMismatch(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("invalid weight {weight} at ({sent}, {tok})")]
    InvalidWeight { sent: usize, tok: usize, weight: f64 },

    #[error("weight vector does not match corpus shape: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("noise placement shortfall: placed {placed} of {requested} spans after {attempts} attempts")]
    PlacementShortfall {
        placed: usize,
        requested: usize,
        attempts: usize,
    },

    #[error("cannot balance: sum of negative weights is zero")]
    ZeroNegativeMass,

    #[error("infeasible inference problem: {0}")]
    Infeasible(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// Stable snake_case name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Parse { .. } => "parse",
            Error::InvalidSentence(_) => "invalid_sentence",
            Error::OverlappingSpans(..) => "overlapping_spans",
            Error::SpanOutOfRange { .. } => "span_out_of_range",
            Error::TokenizationMismatch(_) => "tokenization_mismatch",
            Error::EmptyCorpus => "empty_corpus",
            Error::InvalidWeight { .. } => "invalid_weight",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::PlacementShortfall { .. } => "placement_shortfall",
            Error::ZeroNegativeMass => "zero_negative_mass",
            Error::Infeasible(_) => "infeasible",
            Error::Model(_) => "model",
            Error::Diverged(_) => "diverged",
            Error::Config(_) => "config",
            Error::Serde(_) => "serde",
        }
    }
}
