use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed json in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("bad magic in {0}")]
    BadMagic(PathBuf),
    #[error("truncated file {path}: expected {expected} payload bytes, found {found}")]
    TruncatedFile {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("feature matrix {0} declares a zero dimension")]
    ZeroDims(PathBuf),
    #[error("invalid feature matrix: {0}")]
    InvalidMatrix(String),
    #[error("sample {id}: referenced feature file {path} does not exist")]
    MissingFile { id: String, path: PathBuf },
    #[error("sample {id}: label {label:?} is not in the {task} vocabulary")]
    BadLabel {
        id: String,
        task: String,
        label: String,
    },
    #[error("duplicate sample id {0}")]
    DuplicateId(String),
    #[error("invalid vocabulary: {0}")]
    BadVocabulary(String),
    #[error("malformed manifest line {line}: {reason}")]
    BadManifest { line: usize, reason: String },
    #[error("split {0} has no samples")]
    EmptySplit(String),
    #[error("invalid synthetic spec: {0}")]
    BadSpec(String),
    #[error("{modality} features have {found} columns, model expects {expected}")]
    DimMismatch {
        modality: String,
        expected: usize,
        found: usize,
    },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("prediction tables disagree on sample ids: {0}")]
    IdSetMismatch(String),
    #[error("loss diverged at epoch {epoch}, batch {batch}")]
    DivergedLoss { epoch: usize, batch: usize },
    #[error("invalid checkpoint {path}: {reason}")]
    BadCheckpoint { path: PathBuf, reason: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed prediction csv {path}: {reason}")]
    BadPredictions { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "Io",
            Error::Json { .. } => "Json",
            Error::BadMagic(_) => "BadMagic",
            Error::TruncatedFile { .. } => "TruncatedFile",
            Error::ZeroDims(_) => "ZeroDims",
            Error::InvalidMatrix(_) => "InvalidMatrix",
            Error::MissingFile { .. } => "MissingFile",
            Error::BadLabel { .. } => "BadLabel",
            Error::DuplicateId(_) => "DuplicateId",
            Error::BadVocabulary(_) => "BadVocabulary",
            Error::BadManifest { .. } => "BadManifest",
            Error::EmptySplit(_) => "EmptySplit",
            Error::BadSpec(_) => "BadSpec",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::LabelOutOfRange { .. } => "LabelOutOfRange",
            Error::EmptyMatrix => "EmptyMatrix",
            Error::IdSetMismatch(_) => "IdSetMismatch",
            Error::DivergedLoss { .. } => "DivergedLoss",
            Error::BadCheckpoint { .. } => "BadCheckpoint",
            Error::Config(_) => "Config",
            Error::BadPredictions { .. } => "BadPredictions",
        }
    }
}
