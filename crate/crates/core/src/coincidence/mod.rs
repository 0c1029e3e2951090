//! Tag files, herald-referenced coincidence histograms and dip fitting.

mod fit;
mod histogram;
mod tagfile;

pub use fit::{
    accidental_estimate, fit_dip, fit_dip_with, format_uncertainty, smoothed_triangle,
    AccidentalEstimate, DipFitResult, Estimate, FitOptions,
};
pub use histogram::{herald_histogram, HeraldCorrelator, Histogram, HistogramConfig};
pub use tagfile::{
    parse_tags, read_binary, read_csv, write_binary, write_csv, TagReader, TagWriter, MAGIC,
    RECORD_BYTES,
};

use thiserror::Error;

use crate::temporal::TemporalError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoincidenceError {
    #[error("format error at byte {offset}: {detail}")]
    Format { offset: u64, detail: String },
    #[error("timestamp at record {index} decreases: {timestamp} after {previous}")]
    Order { index: u64, previous: u64, timestamp: u64 },
    #[error("record {index} has channel {channel}, expected 1, 2 or 3")]
    Channel { index: u64, channel: u64 },
    #[error("invalid window: {0}")]
    Window(String),
    #[error("fit did not converge within {iterations} iterations")]
    FitDivergence { iterations: usize },
    #[error("histogram has no counts")]
    DegenerateHistogram,
    #[error("no coincidence envelope above the background")]
    NoEnvelope,
    #[error("only {bins} wing bins beyond the envelope, need at least 10")]
    InsufficientWings { bins: usize },
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Temporal(#[from] TemporalError),
}

impl From<std::io::Error> for CoincidenceError {
    fn from(e: std::io::Error) -> Self {
        CoincidenceError::Io(e.to_string())
    }
}
