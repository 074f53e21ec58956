use oam_core::analytics::AnalyticsError;
use oam_core::corpus::CorpusError;
use oam_core::features::FeatureError;
use oam_core::network::NetworkError;
use oam_core::oam::OamError;
use oam_core::segmenter::SegmentError;
use thiserror::Error;

/// Command failure, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SegmentError> for CliError {
    fn from(e: SegmentError) -> Self {
        match e {
            SegmentError::InvalidWindow(_) => CliError::Usage(e.to_string()),
            SegmentError::Corpus(c) => c.into(),
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        match e {
            NetworkError::InvalidConfig(_) | NetworkError::InvalidArchitecture(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<OamError> for CliError {
    fn from(e: OamError) -> Self {
        match e {
            OamError::Segment(s) => s.into(),
            OamError::Network(n) => n.into(),
            OamError::Feature(f) => f.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<AnalyticsError> for CliError {
    fn from(e: AnalyticsError) -> Self {
        match e {
            AnalyticsError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}
