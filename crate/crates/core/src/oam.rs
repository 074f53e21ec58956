//! Articulation scores from classifier posteriors: per instance
//! `p_target / max(P)`, then per consonant and per speaker means.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Manifest, PhoneInventory};
use crate::features::{FeatureError, MelFrontEnd, MelSpectrogram};
use crate::network::{Example, Model, NetworkError, PosteriorVector};
use crate::segmenter::{segment_corpus, CVSegment, SegmentError};

#[derive(Debug, Error)]
pub enum OamError {
    #[error("target index {index} out of range for {len} posteriors")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("no scores to aggregate")]
    EmptyScores,
    #[error("malformed scores CSV: {0}")]
    MalformedCsv(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// `p_target / max(P)`, in `(0, 1]`.
pub fn oam_instance(posterior: &PosteriorVector, target: usize) -> Result<f64, OamError> {
    let p = posterior
        .probs()
        .get(target)
        .ok_or(OamError::IndexOutOfRange {
            index: target,
            len: posterior.len(),
        })?;
    Ok(p / posterior.max())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OamScore {
    pub utterance_id: String,
    pub speaker_id: String,
    pub consonant: String,
    pub onset_s: f64,
    #[serde(rename = "oam")]
    pub value: f64,
    pub predicted: String,
}

/// Log-mel features of every segment (computed in parallel, order kept).
pub fn spectrograms(segments: &[CVSegment], front_end: &MelFrontEnd) -> Vec<MelSpectrogram> {
    segments
        .par_iter()
        .map(|s| front_end.melspec(&s.samples))
        .collect()
}

/// Network examples for a list of segments; each utterance becomes one group.
pub fn examples_from_segments(segments: &[CVSegment], front_end: &MelFrontEnd) -> Vec<Example> {
    let mut groups: BTreeMap<&str, usize> = BTreeMap::new();
    let mut next = 0;
    spectrograms(segments, front_end)
        .iter()
        .zip(segments)
        .map(|(spec, seg)| {
            let group = *groups.entry(seg.utterance_id.as_str()).or_insert_with(|| {
                next += 1;
                next - 1
            });
            Example::from_spectrogram(spec, seg.target_index, group)
        })
        .collect()
}

/// Score already-cut segments with a model.
pub fn score_segments(model: &Model, segments: &[CVSegment]) -> Result<Vec<OamScore>, OamError> {
    let front_end = MelFrontEnd::new(model.meta().mel.clone())?;
    let inputs: Vec<Vec<f32>> = spectrograms(segments, &front_end)
        .iter()
        .map(|s| s.data().iter().map(|&v| v as f32).collect())
        .collect();
    let refs: Vec<&[f32]> = inputs.iter().map(Vec::as_slice).collect();
    let posteriors = model.network().predict(&refs)?;
    let inventory = &model.meta().inventory;
    segments
        .iter()
        .zip(&posteriors)
        .map(|(seg, p)| {
            Ok(OamScore {
                utterance_id: seg.utterance_id.clone(),
                speaker_id: seg.speaker_id.clone(),
                consonant: seg.target_consonant.clone(),
                onset_s: seg.onset_s,
                value: oam_instance(p, seg.target_index)?,
                predicted: inventory
                    .consonant(p.argmax())
                    .expect("model outputs match inventory")
                    .to_string(),
            })
        })
        .collect()
}

/// Segment, featurise and score every CV instance of a manifest.
pub fn score_corpus(
    model: &Model,
    manifest: &Manifest,
    tier_name: &str,
) -> Result<Vec<OamScore>, OamError> {
    let meta = model.meta();
    let segments = segment_corpus(manifest, &meta.inventory, meta.window_ms, tier_name)?;
    score_segments(model, &segments)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsonantSummary {
    pub mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerReport {
    pub speaker_id: String,
    /// Only consonants with at least one instance.
    pub consonants: BTreeMap<String, ConsonantSummary>,
    /// Unweighted mean of the consonant means.
    pub speaker_oam: f64,
}

impl SpeakerReport {
    pub fn instances(&self) -> usize {
        self.consonants.values().map(|c| c.count).sum()
    }
}

/// Group by speaker (sorted by id), then consonant.
pub fn aggregate(scores: &[OamScore]) -> Result<Vec<SpeakerReport>, OamError> {
    if scores.is_empty() {
        return Err(OamError::EmptyScores);
    }
    let mut groups: BTreeMap<&str, BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    for s in scores {
        groups
            .entry(&s.speaker_id)
            .or_default()
            .entry(&s.consonant)
            .or_default()
            .push(s.value);
    }
    Ok(groups
        .into_iter()
        .map(|(speaker, by_consonant)| {
            let consonants: BTreeMap<String, ConsonantSummary> = by_consonant
                .into_iter()
                .map(|(c, values)| {
                    let summary = ConsonantSummary {
                        mean: values.iter().sum::<f64>() / values.len() as f64,
                        count: values.len(),
                    };
                    (c.to_string(), summary)
                })
                .collect();
            let speaker_oam =
                consonants.values().map(|c| c.mean).sum::<f64>() / consonants.len() as f64;
            SpeakerReport {
                speaker_id: speaker.to_string(),
                consonants,
                speaker_oam,
            }
        })
        .collect())
}

fn csv_err(e: csv::Error) -> OamError {
    OamError::MalformedCsv(e.to_string())
}

pub fn scores_to_csv(scores: &[OamScore]) -> Result<String, OamError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in scores {
        w.serialize(s).map_err(csv_err)?;
    }
    if scores.is_empty() {
        w.write_record([
            "utterance_id",
            "speaker_id",
            "consonant",
            "onset_s",
            "oam",
            "predicted",
        ])
        .map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| OamError::MalformedCsv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn parse_scores_csv(text: &str) -> Result<Vec<OamScore>, OamError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in r.deserialize::<OamScore>() {
        let s = row.map_err(csv_err)?;
        if !(s.value > 0.0 && s.value <= 1.0) {
            return Err(OamError::MalformedCsv(format!(
                "oam value {} outside (0, 1]",
                s.value
            )));
        }
        out.push(s);
    }
    Ok(out)
}

pub fn load_scores(path: &Path) -> Result<Vec<OamScore>, OamError> {
    let text = std::fs::read_to_string(path).map_err(|source| OamError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scores_csv(&text)
}

/// Speaker report table with one column per inventory consonant (empty when
/// the speaker has no instance of it).
pub fn reports_to_csv(
    reports: &[SpeakerReport],
    inventory: &PhoneInventory,
) -> Result<String, OamError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["speaker_id".to_string()];
    header.extend(inventory.consonants().iter().cloned());
    header.push("speaker_oam".into());
    header.push("instances".into());
    w.write_record(&header).map_err(csv_err)?;
    for r in reports {
        let mut row = vec![r.speaker_id.clone()];
        for c in inventory.consonants() {
            row.push(
                r.consonants
                    .get(c)
                    .map_or(String::new(), |s| crate::format_f64(s.mean)),
            );
        }
        row.push(crate::format_f64(r.speaker_oam));
        row.push(r.instances().to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| OamError::MalformedCsv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn score(speaker: &str, consonant: &str, value: f64) -> OamScore {
        OamScore {
            utterance_id: "u".into(),
            speaker_id: speaker.into(),
            consonant: consonant.into(),
            onset_s: 0.5,
            value,
            predicted: consonant.into(),
        }
    }

    #[test]
    fn tabulated_examples() {
        let top = PosteriorVector::from_probs(vec![0.1, 0.7, 0.2]).unwrap();
        assert_eq!(oam_instance(&top, 1).unwrap(), 1.0);
        let uniform = PosteriorVector::from_probs(vec![0.25; 4]).unwrap();
        for i in 0..4 {
            assert_eq!(oam_instance(&uniform, i).unwrap(), 1.0);
        }
        let p = PosteriorVector::from_probs(vec![0.2, 0.8]).unwrap();
        assert_eq!(oam_instance(&p, 0).unwrap(), 0.25);
        assert!(matches!(
            oam_instance(&p, 2),
            Err(OamError::IndexOutOfRange { index: 2, len: 2 })
        ));
    }

    #[test]
    fn aggregation_examples() {
        let r = aggregate(&[score("s", "P", 0.4), score("s", "P", 0.6)]).unwrap();
        assert_eq!(r[0].consonants["P"].mean, 0.5);
        assert_eq!(r[0].speaker_oam, 0.5);
        let r = aggregate(&[
            score("s", "P", 1.0),
            score("s", "T", 0.25),
            score("s", "T", 0.75),
        ])
        .unwrap();
        assert_eq!(r[0].speaker_oam, 0.75);
        assert_eq!(r[0].instances(), 3);
        assert!(matches!(aggregate(&[]), Err(OamError::EmptyScores)));
    }

    #[test]
    fn reports_sorted_and_csv_columns() {
        let inv = PhoneInventory::default();
        let r = aggregate(&[score("b", "T", 0.5), score("a", "P", 1.0)]).unwrap();
        assert_eq!(r[0].speaker_id, "a");
        let csv = reports_to_csv(&r, &inv).unwrap();
        let mut lines = csv.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("speaker_id,B,D,G,P,T,K"));
        assert!(header.ends_with("R,speaker_oam,instances"));
        assert_eq!(lines.next().unwrap(), "a,,,,1.0,,,,,,,,,,,,,,,,,,1.0,1");
    }

    #[test]
    fn scores_csv_round_trip() {
        let scores = vec![score("s1", "P", 0.125), score("s2", "SH", 1.0)];
        let text = scores_to_csv(&scores).unwrap();
        assert!(text.starts_with("utterance_id,speaker_id,consonant,onset_s,oam,predicted\n"));
        assert_eq!(parse_scores_csv(&text).unwrap(), scores);
        assert!(parse_scores_csv(&scores_to_csv(&[]).unwrap())
            .unwrap()
            .is_empty());
        assert!(matches!(
            parse_scores_csv(
                "utterance_id,speaker_id,consonant,onset_s,oam,predicted\nu,s,P,0,1.5,P\n"
            ),
            Err(OamError::MalformedCsv(_))
        ));
    }

    proptest! {
        #[test]
        fn oam_bounds_and_maximum(raw in prop::collection::vec(0.001f64..1.0, 2..25), pick in 0usize..25) {
            let total: f64 = raw.iter().sum();
            let p = PosteriorVector::from_logits(&raw.iter().map(|v| (v / total).ln()).collect::<Vec<_>>());
            let i = pick % raw.len();
            let v = oam_instance(&p, i).unwrap();
            prop_assert!(v > 0.0 && v <= 1.0);
            prop_assert_eq!(v == 1.0, p.probs()[i] == p.max());
        }

        #[test]
        fn aggregation_permutation_invariant(values in prop::collection::vec((0usize..3, 0usize..4, 0.01f64..1.0), 1..40), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let scores: Vec<OamScore> = values
                .iter()
                .map(|&(s, c, v)| score(&format!("s{s}"), ["P", "T", "K", "B"][c], v))
                .collect();
            let mut shuffled = scores.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = aggregate(&scores).unwrap();
            let b = aggregate(&shuffled).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x.speaker_oam - y.speaker_oam).abs() < 1e-12);
                prop_assert_eq!(x.instances(), y.instances());
            }
        }
    }
}
