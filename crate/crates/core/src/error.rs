use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimsMismatch { left: String, right: String },

    #[error("malformed rle: {0}")]
    MalformedRle(String),

    #[error("degenerate polygon: {0} vertices, need at least 3")]
    DegeneratePolygon(usize),

    #[error("invalid mask grid: {0}")]
    InvalidGrid(String),

    #[error("threshold {0} outside (0, 1)")]
    InvalidThreshold(f64),

    #[error("statistic undefined on an empty mask")]
    EmptyMask,

    #[error("evaluation parameters differ: {0}")]
    ParamMismatch(String),

    #[error("class sets differ: {0}")]
    ClassSetMismatch(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid class table: {0}")]
    InvalidClassTable(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error(transparent)]
    Ingest(#[from] IngestErrors),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One validation problem found while reading a document.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestIssue {
    pub image_id: Option<String>,
    pub record: Option<usize>,
    pub message: String,
}

impl IngestIssue {
    pub fn new(image_id: Option<&str>, record: Option<usize>, message: impl Into<String>) -> Self {
        Self {
            image_id: image_id.map(str::to_owned),
            record,
            message: message.into(),
        }
    }

    pub fn document(message: impl Into<String>) -> Self {
        Self::new(None, None, message)
    }
}

impl fmt::Display for IngestIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.image_id, self.record) {
            (Some(id), Some(rec)) => write!(f, "image {id:?}, record {rec}: {}", self.message),
            (Some(id), None) => write!(f, "image {id:?}: {}", self.message),
            (None, Some(rec)) => write!(f, "record {rec}: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

/// All issues collected from one document; parsing reports every problem, not just the first.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct IngestErrors(pub Vec<IngestIssue>);

impl fmt::Display for IngestErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ingest error(s)", self.0.len())?;
        for issue in &self.0 {
            write!(f, "\n  - {issue}")?;
        }
        Ok(())
    }
}

impl From<IngestIssue> for IngestErrors {
    fn from(issue: IngestIssue) -> Self {
        IngestErrors(vec![issue])
    }
}
