use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("{kind} id {id} out of range (size {size})")]
    IdOutOfRange {
        kind: &'static str,
        id: usize,
        size: usize,
    },
    #[error("disease {0} has no training records")]
    MissingDisease(usize),
    #[error("k = {k} must be smaller than the disease count {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("confidence vector is empty")]
    EmptyVector,
    #[error("label smoothing {epsilon} invalid for group size {group}")]
    InvalidEpsilon { epsilon: f64, group: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("predicted distribution has a non-positive entry at {0}")]
    ZeroPrediction(usize),
    #[error("every action is masked")]
    AllMasked,
    #[error("rollout is empty")]
    EmptyRollout,
    #[error("rollout does not end with a terminal transition")]
    IncompleteEpisode,
    #[error("termination is scored by the diagnosis reward, not the inquiry reward")]
    TerminationNotScoredHere,
    #[error("symptom {0} was already answered")]
    DuplicateQuery(usize),
    #[error("action {0} is disabled by the current mask")]
    DisabledAction(usize),
    #[error("episode is already finished")]
    EpisodeDone,
    #[error("candidate set is empty")]
    EmptyCandidates,
    #[error("component shape mismatch: {0}")]
    ComponentShapeMismatch(String),
    #[error("evaluation suite is empty")]
    EmptySuite,
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("remote scorer timed out")]
    Timeout,
    #[error("bad response from remote scorer: {0}")]
    BadResponse(String),
    #[error("remote scorer error: {0}")]
    ServerError(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
