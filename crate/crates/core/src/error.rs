use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate relation label `{0}`")]
    DuplicateLabel(String),

    #[error("NA label `{0}` is not in the label list")]
    MissingNaLabel(String),

    #[error("invalid relation schema: {0}")]
    InvalidSchema(String),

    #[error("unknown relation label `{label}`")]
    UnknownLabel { label: String },

    #[error("invalid bag `{bag_id}`: {reason}")]
    InvalidBag { bag_id: String, reason: String },

    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed record: {0}")]
    Json(#[from] serde_json::Error),

    #[error("prediction for `{bag_id}` has {got} scores, schema has {expected} relations")]
    ScoreLength {
        bag_id: String,
        expected: usize,
        got: usize,
    },

    #[error("prediction for `{bag_id}` has score {value} at index {index}, outside [0, 1]")]
    ScoreRange { bag_id: String, index: usize, value: f64 },

    #[error("duplicate prediction for bag `{0}`")]
    DuplicateBag(String),

    #[error("no prediction for bag `{0}`")]
    MissingPrediction(String),

    #[error("prediction refers to bag `{0}`, which is not in the bag set")]
    UnknownBag(String),

    #[error("bag `{0}` has no gold relations")]
    MissingGold(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("invalid QA score: {0}")]
    InvalidScore(String),

    #[error("scorer failed on bag `{bag_id}`, question `{question}`: {source}")]
    Scorer {
        bag_id: String,
        question: String,
        #[source]
        source: Box<Error>,
    },

    /// `request_id` is empty for failures not tied to one request.
    #[error("remote scorer at {endpoint}: {}{reason}", request_prefix(.request_id))]
    Remote {
        endpoint: String,
        request_id: String,
        reason: String,
    },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("reports are not comparable: {0}")]
    Incomparable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_line(self, line: usize) -> Self {
        Error::Line {
            line,
            source: Box::new(self),
        }
    }
}

fn request_prefix(request_id: &str) -> String {
    if request_id.is_empty() {
        String::new()
    } else {
        format!("request `{request_id}`: ")
    }
}
