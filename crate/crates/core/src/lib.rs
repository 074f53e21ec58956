#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod corpus;
pub mod features;
pub mod network;
pub mod oam;
pub mod segmenter;
pub mod synth;

/// Shortest round-trip text for a float; exponent form for very large or
/// small magnitudes.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}
