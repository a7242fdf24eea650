use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty reduction")]
    EmptyReduction,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("finite difference evaluation is not finite at coordinate {coordinate} ({value})")]
    NonFiniteAt { coordinate: usize, value: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid label {id} for an alphabet of {vocab} symbols")]
    InvalidLabel { id: usize, vocab: usize },

    #[error("no alignment: labels need at least {required} frames but only {available} are available")]
    NoAlignment { required: usize, available: usize },

    #[error("instance exceeds the enumeration guard: {0}")]
    GuardExceeded(String),

    #[error("invalid alphabet: {0}")]
    Alphabet(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported version: {0}")]
    Version(String),

    #[error("non-finite loss on utterance {0}")]
    NonFiniteLoss(String),

    #[error("utterance {id}: {source}")]
    Utterance { id: String, source: Box<Error> },

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Attach an utterance id to an error.
    pub fn for_utterance(self, id: &str) -> Self {
        match self {
            e @ Error::Utterance { .. } => e,
            e => Error::Utterance { id: id.to_string(), source: Box::new(e) },
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
