use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("score is not a finite number: {0}")]
    NonFiniteScore(f64),
    #[error("invalid label range [{lo}, {hi}]: need lo < hi")]
    InvalidLabelSpec { lo: i64, hi: i64 },
    #[error("label {label} outside [{lo}, {hi}]{}", line_suffix(*.line))]
    LabelOutOfRange {
        label: i64,
        lo: i64,
        hi: i64,
        line: Option<usize>,
    },
    #[error("invalid instance {id}: {reason}")]
    InvalidInstance { id: String, reason: String },
    #[error("duplicate instance id {0}")]
    DuplicateId(String),

    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("bad label {value:?} at line {line}")]
    BadLabel { line: usize, value: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("train ratio must lie strictly between 0 and 1, got {0}")]
    BadRatio(f64),
    #[error("unknown ASAP prompt {0}; expected 1..=8")]
    UnknownPrompt(i64),

    #[error("corpus contains no tokens")]
    EmptyCorpus,
    #[error("dimension mismatch: expected {expected}, got {got}{}", line_suffix(*.line))]
    DimMismatch {
        expected: usize,
        got: usize,
        line: Option<usize>,
    },
    #[error("bad vector at line {line}: {reason}")]
    BadVector { line: usize, reason: String },
    #[error("bad unigram table at line {line}: {reason}")]
    BadTable { line: usize, reason: String },
    #[error("duplicate feature name {0:?}")]
    DuplicateFeature(String),

    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("singular linear system; use a positive ridge lambda")]
    SingularSystem,
    #[error("training diverged (non-finite loss at epoch {epoch}); lower the learning rate")]
    Diverged { epoch: usize },

    #[error("prediction and gold sequences differ in length ({preds} vs {golds})")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("not enough items to evaluate")]
    EmptyEval,
    #[error("zero variance in input sequence")]
    ZeroVariance,

    #[error("tab character in indentation at line {line}")]
    TabIndent { line: usize },
    #[error("inconsistent indentation at line {line}")]
    BadIndent { line: usize },
    #[error("duplicate key {key:?} at line {line}")]
    DuplicateKey { line: usize, key: String },
    #[error("unsupported syntax at line {line}: {what}")]
    UnsupportedSyntax { line: usize, what: String },
    #[error("missing section `{0}`")]
    MissingSection(&'static str),
    #[error("unknown {kind} type {name:?}; valid types: {}{}", .valid.join(", "), .note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default())]
    UnknownType {
        kind: &'static str,
        name: String,
        valid: Vec<&'static str>,
        note: Option<String>,
    },
    #[error("bad parameter at {path}: {reason}")]
    BadParam { path: String, reason: String },

    #[error("{task} task cannot use {model}")]
    TaskModelMismatch { task: String, model: String },
    #[error("corrupt artifact: {0}")]
    CorruptArtifact(String),
    #[error("unsupported artifact format version {0:?}")]
    UnsupportedVersion(String),

    #[error("text has no tokens")]
    NoTokens,
    #[error("text has {count} tokens; occlusion is limited to {max}")]
    TooManyTokens { count: usize, max: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

fn line_suffix(line: Option<usize>) -> String {
    line.map(|l| format!(" at line {l}")).unwrap_or_default()
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping any context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }

    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self.root() {
            Error::NonFiniteScore(_) => "NonFiniteScore",
            Error::InvalidLabelSpec { .. } => "InvalidLabelSpec",
            Error::LabelOutOfRange { .. } => "LabelOutOfRange",
            Error::InvalidInstance { .. } => "InvalidInstance",
            Error::DuplicateId(_) => "DuplicateId",
            Error::MalformedRow { .. } => "MalformedRow",
            Error::BadLabel { .. } => "BadLabel",
            Error::EmptyDataset => "EmptyDataset",
            Error::MissingColumn(_) => "MissingColumn",
            Error::BadRatio(_) => "BadRatio",
            Error::UnknownPrompt(_) => "UnknownPrompt",
            Error::EmptyCorpus => "EmptyCorpus",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::BadVector { .. } => "BadVector",
            Error::BadTable { .. } => "BadTable",
            Error::DuplicateFeature(_) => "DuplicateFeature",
            Error::EmptyTrainingSet => "EmptyTrainingSet",
            Error::SingularSystem => "SingularSystem",
            Error::Diverged { .. } => "Diverged",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::EmptyEval => "EmptyEval",
            Error::ZeroVariance => "ZeroVariance",
            Error::TabIndent { .. } => "TabIndent",
            Error::BadIndent { .. } => "BadIndent",
            Error::DuplicateKey { .. } => "DuplicateKey",
            Error::UnsupportedSyntax { .. } => "UnsupportedSyntax",
            Error::MissingSection(_) => "MissingSection",
            Error::UnknownType { .. } => "UnknownType",
            Error::BadParam { .. } => "BadParam",
            Error::TaskModelMismatch { .. } => "TaskModelMismatch",
            Error::CorruptArtifact(_) => "CorruptArtifact",
            Error::UnsupportedVersion(_) => "UnsupportedVersion",
            Error::NoTokens => "NoTokens",
            Error::TooManyTokens { .. } => "TooManyTokens",
            Error::Io { .. } => "Io",
            Error::Json(_) => "Json",
            Error::Context { .. } => unreachable!("root() strips context"),
        }
    }
}
