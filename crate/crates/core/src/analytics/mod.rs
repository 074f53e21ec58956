//! Reliability and validity statistics: coefficient of variation, Pearson
//! correlation, paired t-test, forward-selection linear models and
//! leave-one-speaker-out evaluation.

mod compare;
mod linear;
mod stats;

use thiserror::Error;

pub use compare::{cov_compare, gamma_table, CovComparison, GammaCell, MatchedCell};
pub use linear::{
    consonant_matrix, fit_forward_linear, loso_evaluate, LinearModel, LosoResult, SelectionConfig,
    SelectionStep,
};
pub use stats::{
    cov, mean, paired_ttest, pearson, population_sd, t_two_sided_p, CorrelationResult, TTestResult,
};

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("mean is zero; coefficient of variation undefined")]
    ZeroMean,
    #[error("input is constant; correlation undefined")]
    ConstantInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("all paired differences are identical and nonzero")]
    DegenerateInput,
    #[error("the two score tables share no (speaker, consonant) cell")]
    NoOverlap,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("invalid selection configuration: {0}")]
    InvalidConfig(String),
}
