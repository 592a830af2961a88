use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {message}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}: some records carry labels and some do not")]
    MixedLabels(PathBuf),

    #[error("duplicate document id `{0}`")]
    DuplicateId(String),

    #[error("document `{id}` has label {label}, outside [0, {num_classes})")]
    LabelOutOfRange {
        id: String,
        label: i64,
        num_classes: usize,
    },

    #[error("class count override {given} is smaller than the observed {observed} classes")]
    ClassOverrideTooSmall { given: usize, observed: usize },

    #[error("class {0} has no labeled sample")]
    MissingClass(usize),

    #[error("labeled and unlabeled sets share document id `{0}`")]
    OverlappingIds(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("cannot fit a vectorizer on an empty corpus")]
    EmptyCorpus,

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("no embedding for document `{0}`")]
    MissingEmbedding(String),

    #[error("{algorithm} does not support the {channel} feature channel")]
    ChannelUnsupported { algorithm: String, channel: String },

    #[error("similarity labeling function needs a non-empty unlabeled set")]
    EmptyUnlabeledSet,

    #[error("labeling function `{0}` is not fitted")]
    NotFitted(String),

    #[error("vote {vote} for `{id}` outside [-1, {num_classes})")]
    VoteOutOfRange {
        id: String,
        vote: i64,
        num_classes: usize,
    },

    #[error("label matrix has no non-abstain entry")]
    DegenerateInput,

    #[error("triplet estimation needs at least 3 labeling functions, got {0}")]
    TooFewLfs(usize),

    #[error("model predicts {expected} classes but the test set has {found}")]
    ClassCountMismatch { expected: usize, found: usize },

    #[error("labeling function `{lf_id}`: {source}")]
    Lf {
        lf_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("search config {config}: {source}")]
    Search {
        config: String,
        #[source]
        source: Box<Error>,
    },

    #[error("output directory {0} is locked by another run")]
    Locked(PathBuf),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors raised while checking inputs, before any work is done.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Validation(_) | Error::ClassOverrideTooSmall { .. }
        )
    }

    pub(crate) fn in_lf(self, lf_id: &str) -> Self {
        Error::Lf {
            lf_id: lf_id.to_string(),
            source: Box::new(self),
        }
    }
}
