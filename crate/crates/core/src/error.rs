use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate passage id `{0}`")]
    DuplicatePassage(String),

    #[error("invalid passage id `{0}`: ids must be non-empty and contain no whitespace")]
    InvalidPassageId(String),

    #[error("unknown passage id `{0}`")]
    UnknownPassage(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid conversation `{id}`: {message}")]
    InvalidConversation { id: String, message: String },

    #[error("turn {turn} out of range for conversation `{id}` with {len} turns")]
    TurnOutOfRange { id: String, turn: usize, len: usize },

    #[error("missing {stream} score for query `{qid}`, passage `{pid}`")]
    MissingScore {
        stream: &'static str,
        qid: String,
        pid: String,
    },

    #[error("empty qrels")]
    EmptyQrels,

    #[error("run and qrels share no query ids")]
    NoEvaluatedQueries,

    #[error("query id sets differ across runs: {0:?}")]
    MismatchedQueries(Vec<String>),

    #[error("{stage} stage failed for `{qid}`")]
    Stage {
        stage: &'static str,
        qid: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn at_stage(self, stage: &'static str, qid: &str) -> Self {
        Error::Stage {
            stage,
            qid: qid.to_string(),
            source: Box::new(self),
        }
    }
}
