//! Ingestion of audio, phone alignments, dataset manifests and rating tables.
//!
//! Everything here is a pure function of file contents; the returned records
//! are immutable once validated.

mod alignment;
mod inventory;
mod manifest;
mod textgrid;
mod wav;

use std::path::PathBuf;

use thiserror::Error;

pub use alignment::{parse_alignment_csv, write_alignment_csv, AlignmentTrack, PhoneInterval};
pub use inventory::{normalize_label, PhoneInventory};
pub use manifest::{
    join_ratings, load_manifest, load_ratings, Manifest, ManifestRow, RatingRow, RatingTable,
};
pub use textgrid::{
    parse_textgrid, parse_textgrid_str, render_textgrid, write_textgrid, TextGridForm,
};
pub use wav::{load_wav, write_wav, AudioClip, SAMPLE_RATE_HZ};

/// Tolerance allowed between the end of one interval and the start of the next.
pub const BOUNDARY_TOLERANCE_S: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt file {path}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },
    #[error("no interval tier named {0:?}")]
    MissingTier(String),
    #[error("malformed TextGrid: {0}")]
    MalformedTextGrid(String),
    #[error("malformed CSV: {0}")]
    MalformedCsv(String),
    #[error("non-monotonic intervals: {0}")]
    NonMonotonicIntervals(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("invalid phone inventory: {0}")]
    InvalidInventory(String),
    #[error("utterance {utterance_id}: {source}")]
    Utterance {
        utterance_id: String,
        #[source]
        source: Box<CorpusError>,
    },
}

impl CorpusError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach the utterance being processed to an error.
    pub fn in_utterance(self, utterance_id: &str) -> Self {
        CorpusError::Utterance {
            utterance_id: utterance_id.to_string(),
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// Default Montreal-aligner phone tier name.
pub const DEFAULT_PHONE_TIER: &str = "phones";

/// Load an alignment file, choosing the parser by extension (`.csv` or TextGrid).
pub fn load_alignment(path: &std::path::Path, tier_name: &str) -> Result<AlignmentTrack> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        parse_alignment_csv(path)
    } else {
        parse_textgrid(path, tier_name)
    }
}
