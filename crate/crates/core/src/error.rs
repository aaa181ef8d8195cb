use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed JSON; `offset` is the byte offset of the offending input.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// Well-formed JSON that does not follow the report schema.
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("split error: partition `{partition}` is empty")]
    Split { partition: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    #[error("{n} features requested for exact Shapley values, at most {max} supported; use permutation importance instead")]
    Size { n: usize, max: usize },

    #[error("missing prerequisite artifact; run `{required}` first")]
    Stage { required: String },

    #[error("bad artifact format: {0}")]
    Format(String),

    #[error("sample `{sample_id}`: {source}")]
    InSample {
        sample_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit status used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Stage { .. } | Error::Size { .. } => 1,
            Error::Training { .. } => 3,
            _ => 2,
        }
    }
}
