//! Vowel-onset detection and fixed-length CV transition windows.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    load_alignment, load_wav, AlignmentTrack, AudioClip, CorpusError, Manifest, PhoneInventory,
    BOUNDARY_TOLERANCE_S, SAMPLE_RATE_HZ,
};

/// Samples per millisecond at the fixed input rate.
pub const SAMPLES_PER_MS: usize = (SAMPLE_RATE_HZ / 1000) as usize;

/// Shortest interval jittering may leave behind.
const MIN_INTERVAL_S: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("window of {0} ms is not supported (even multiple of 10 in 60..=200 required)")]
    InvalidWindow(u32),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// CV window length in milliseconds. Always a multiple of 10 between 60 and
/// 200 so that it splits evenly into 5 ms hops and two equal halves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct WindowMs(u32);

impl WindowMs {
    pub const DEFAULT: WindowMs = WindowMs(160);
    pub const MIN: u32 = 60;
    pub const MAX: u32 = 200;

    pub fn new(ms: u32) -> Result<Self, SegmentError> {
        if (Self::MIN..=Self::MAX).contains(&ms) && ms.is_multiple_of(10) {
            Ok(WindowMs(ms))
        } else {
            Err(SegmentError::InvalidWindow(ms))
        }
    }

    /// The sweep grid 60, 80, ..., 200.
    pub fn sweep_grid() -> Vec<WindowMs> {
        (Self::MIN..=Self::MAX).step_by(20).map(WindowMs).collect()
    }

    pub fn ms(self) -> u32 {
        self.0
    }

    pub fn samples(self) -> usize {
        self.0 as usize * SAMPLES_PER_MS
    }

    /// Number of 5 ms analysis frames.
    pub fn frames(self) -> usize {
        self.0 as usize / 5
    }
}

impl Default for WindowMs {
    fn default() -> Self {
        WindowMs::DEFAULT
    }
}

impl TryFrom<u32> for WindowMs {
    type Error = SegmentError;

    fn try_from(ms: u32) -> Result<Self, SegmentError> {
        WindowMs::new(ms)
    }
}

impl From<WindowMs> for u32 {
    fn from(w: WindowMs) -> u32 {
        w.0
    }
}

impl fmt::Display for WindowMs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Start of a vowel interval that directly follows a consonant.
#[derive(Debug, Clone, PartialEq)]
pub struct VowelOnset {
    pub time_s: f64,
    pub vowel: String,
    pub consonant: String,
    /// Position of `consonant` in the inventory.
    pub consonant_index: usize,
}

/// An audio window centred on a vowel onset, labelled with its consonant.
#[derive(Debug, Clone, PartialEq)]
pub struct CVSegment {
    pub utterance_id: String,
    pub speaker_id: String,
    pub target_consonant: String,
    pub target_index: usize,
    pub onset_s: f64,
    pub window: WindowMs,
    pub samples: Vec<f32>,
}

/// Vowel intervals whose immediate, contiguous predecessor is an inventory
/// consonant. A silence between the two (a gap once silences are dropped)
/// breaks adjacency.
pub fn find_vowel_onsets(track: &AlignmentTrack, inventory: &PhoneInventory) -> Vec<VowelOnset> {
    track
        .intervals()
        .windows(2)
        .filter_map(|pair| {
            let (prev, cur) = (&pair[0], &pair[1]);
            if !inventory.is_vowel(&cur.label) {
                return None;
            }
            if (cur.start_s - prev.end_s).abs() > BOUNDARY_TOLERANCE_S {
                return None;
            }
            let consonant_index = inventory.consonant_index(&prev.label)?;
            Some(VowelOnset {
                time_s: cur.start_s,
                vowel: cur.label.clone(),
                consonant: prev.label.clone(),
                consonant_index,
            })
        })
        .collect()
}

/// Sample index nearest to a time in seconds.
pub fn time_to_sample(time_s: f64) -> i64 {
    (time_s * SAMPLE_RATE_HZ as f64).round() as i64
}

/// Cut `window` around the onset: half before, half after. Positions outside
/// the clip are zero.
pub fn cut_window(clip: &AudioClip, onset_s: f64, window: WindowMs) -> Vec<f32> {
    let len = window.samples();
    let start = time_to_sample(onset_s) - (len / 2) as i64;
    let src = clip.samples();
    (0..len as i64)
        .map(|k| {
            let idx = start + k;
            if idx >= 0 && (idx as usize) < src.len() {
                src[idx as usize]
            } else {
                0.0
            }
        })
        .collect()
}

pub fn cut_segment(
    clip: &AudioClip,
    onset: &VowelOnset,
    window: WindowMs,
    utterance_id: &str,
    speaker_id: &str,
) -> CVSegment {
    CVSegment {
        utterance_id: utterance_id.to_string(),
        speaker_id: speaker_id.to_string(),
        target_consonant: onset.consonant.clone(),
        target_index: onset.consonant_index,
        onset_s: onset.time_s,
        window,
        samples: cut_window(clip, onset.time_s, window),
    }
}

/// Segments of one utterance. Onsets that fall outside the audio are skipped.
pub fn segment_utterance(
    clip: &AudioClip,
    track: &AlignmentTrack,
    inventory: &PhoneInventory,
    window: WindowMs,
    utterance_id: &str,
    speaker_id: &str,
) -> Vec<CVSegment> {
    let duration = clip.duration_s();
    find_vowel_onsets(track, inventory)
        .iter()
        .filter(|o| o.time_s >= 0.0 && o.time_s < duration)
        .map(|o| cut_segment(clip, o, window, utterance_id, speaker_id))
        .collect()
}

/// Segment every utterance of a manifest; output is in manifest order, then
/// onset time.
pub fn segment_corpus(
    manifest: &Manifest,
    inventory: &PhoneInventory,
    window: WindowMs,
    tier_name: &str,
) -> Result<Vec<CVSegment>, SegmentError> {
    let per_utterance: Vec<Result<Vec<CVSegment>, CorpusError>> = manifest
        .rows()
        .par_iter()
        .map(|row| {
            let load = || -> Result<Vec<CVSegment>, CorpusError> {
                let clip = load_wav(&row.audio_path)?;
                let track = load_alignment(&row.alignment_path, tier_name)?;
                Ok(segment_utterance(
                    &clip,
                    &track,
                    inventory,
                    window,
                    &row.utterance_id,
                    &row.speaker_id,
                ))
            };
            load().map_err(|e| e.in_utterance(&row.utterance_id))
        })
        .collect();
    let mut out = Vec::new();
    for segs in per_utterance {
        out.extend(segs?);
    }
    Ok(out)
}

/// Perturb every vowel start boundary by Gaussian noise (standard deviation
/// `sigma_ms`). A shared boundary moves the preceding interval's end as well.
/// Shifts are clamped so no interval becomes shorter than 1 ms or overlaps
/// its neighbour.
pub fn jitter_onsets(
    track: &AlignmentTrack,
    inventory: &PhoneInventory,
    sigma_ms: f64,
    seed: u64,
) -> AlignmentTrack {
    assert!(
        sigma_ms >= 0.0 && sigma_ms.is_finite(),
        "sigma_ms must be >= 0"
    );
    if sigma_ms == 0.0 {
        return track.clone();
    }
    let normal = Normal::new(0.0, sigma_ms / 1000.0).expect("finite positive sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut intervals = track.intervals().to_vec();
    for i in 0..intervals.len() {
        if !inventory.is_vowel(&intervals[i].label) {
            continue;
        }
        let shift: f64 = normal.sample(&mut rng);
        let start = intervals[i].start_s;
        let hi = intervals[i].end_s - MIN_INTERVAL_S;
        let (lo, shared) = match i.checked_sub(1).map(|p| &intervals[p]) {
            Some(prev) if (start - prev.end_s).abs() <= BOUNDARY_TOLERANCE_S => {
                (prev.start_s + MIN_INTERVAL_S, true)
            }
            Some(prev) => (prev.end_s, false),
            None => (0.0, false),
        };
        if lo > hi {
            continue;
        }
        let moved = (start + shift).clamp(lo.min(start), hi.max(start));
        intervals[i].start_s = moved;
        if shared {
            intervals[i - 1].end_s = moved;
        }
    }
    AlignmentTrack::new(track.utterance_id(), intervals).expect("clamped jitter preserves ordering")
}
