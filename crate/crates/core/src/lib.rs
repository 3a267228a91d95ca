//! Evaluation of two-head object detectors: box and instance-mask metrics,
//! box-versus-mask divergence diagnostics, and a deterministic simulator of
//! the detector's output head for building fixtures.

pub mod error;
pub mod geometry;
pub mod ingest;
pub mod mask;
pub mod matching;
pub mod metrics;
pub mod diagnose;
pub mod headsim;
pub mod report;

pub use error::{Error, IngestErrors, IngestIssue, Result};
