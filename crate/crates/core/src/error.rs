use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("document is empty or whitespace-only")]
    EmptyDocument,

    #[error("sentence {sentence} maps to an empty token range")]
    AlignmentGap { sentence: usize },

    #[error("schema error at record {record}: {message}")]
    Schema { record: usize, message: String },

    #[error("input of {tokens} tokens exceeds the context window of {window}")]
    ContextOverflow { tokens: usize, window: usize },

    #[error("backend failure: {0}")]
    Backend(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("embedding {index} has zero norm")]
    ZeroNorm { index: usize },

    #[error("k must be at least 1, got {0}")]
    InvalidK(usize),

    #[error("sample {sample} has no subquery decomposition")]
    MissingSubqueries { sample: String },

    #[error("polynomial fit needs at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("gold set is empty")]
    EmptyGold,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn backend(msg: impl Into<String>) -> Self {
        Error::Backend(msg.into())
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// True for failures that originate inside a model backend rather than
    /// in user-supplied inputs or configuration.
    pub fn is_backend_failure(&self) -> bool {
        matches!(self, Error::Backend(_) | Error::ContextOverflow { .. })
    }
}
