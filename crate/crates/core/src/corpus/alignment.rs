use std::path::Path;

use serde::{Deserialize, Serialize};

use super::inventory::{is_silence, normalize_label};
use super::{CorpusError, Result, BOUNDARY_TOLERANCE_S};

/// One time-stamped phone label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhoneInterval {
    pub label: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl PhoneInterval {
    pub fn new(label: impl Into<String>, start_s: f64, end_s: f64) -> Self {
        PhoneInterval {
            label: label.into(),
            start_s,
            end_s,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Phone intervals of one utterance, sorted and non-overlapping.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentTrack {
    utterance_id: String,
    intervals: Vec<PhoneInterval>,
}

impl AlignmentTrack {
    /// Validate and wrap already-normalized intervals.
    pub fn new(utterance_id: impl Into<String>, intervals: Vec<PhoneInterval>) -> Result<Self> {
        for iv in &intervals {
            if iv.label.is_empty() {
                return Err(CorpusError::NonMonotonicIntervals("empty label".into()));
            }
            if !(iv.start_s.is_finite() && iv.end_s.is_finite()) {
                return Err(CorpusError::NonMonotonicIntervals(format!(
                    "non-finite boundary on {}",
                    iv.label
                )));
            }
            if !(0.0 <= iv.start_s && iv.start_s < iv.end_s) {
                return Err(CorpusError::NonMonotonicIntervals(format!(
                    "{} has start {} and end {}",
                    iv.label, iv.start_s, iv.end_s
                )));
            }
        }
        for pair in intervals.windows(2) {
            if pair[1].start_s < pair[0].start_s
                || pair[0].end_s > pair[1].start_s + BOUNDARY_TOLERANCE_S
            {
                return Err(CorpusError::NonMonotonicIntervals(format!(
                    "{}@[{}, {}] overlaps {}@[{}, {}]",
                    pair[0].label,
                    pair[0].start_s,
                    pair[0].end_s,
                    pair[1].label,
                    pair[1].start_s,
                    pair[1].end_s
                )));
            }
        }
        Ok(AlignmentTrack {
            utterance_id: utterance_id.into(),
            intervals,
        })
    }

    /// Normalize raw labels, drop silence, sort by start time and validate.
    pub fn from_raw(utterance_id: impl Into<String>, raw: Vec<PhoneInterval>) -> Result<Self> {
        let mut intervals: Vec<PhoneInterval> = raw
            .into_iter()
            .filter_map(|iv| {
                let label = normalize_label(&iv.label);
                (!is_silence(&label)).then_some(PhoneInterval { label, ..iv })
            })
            .collect();
        intervals.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        AlignmentTrack::new(utterance_id, intervals)
    }

    pub fn utterance_id(&self) -> &str {
        &self.utterance_id
    }

    pub fn intervals(&self) -> &[PhoneInterval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// End time of the last interval, or 0 for an empty track.
    pub fn end_s(&self) -> f64 {
        self.intervals.last().map_or(0.0, |iv| iv.end_s)
    }
}

#[derive(Deserialize)]
struct CsvRow {
    phone: String,
    start_s: f64,
    end_s: f64,
}

pub(crate) fn utterance_id_from_path(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Parse a `phone,start_s,end_s` alignment file. The utterance id is the file stem.
pub fn parse_alignment_csv(path: &Path) -> Result<AlignmentTrack> {
    if !path.exists() {
        return Err(CorpusError::MissingFile(path.to_path_buf()));
    }
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| CorpusError::MalformedCsv(e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::MalformedCsv(e.to_string()))?
        .clone();
    let expected = ["phone", "start_s", "end_s"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h.trim() != e) {
        return Err(CorpusError::MalformedCsv(format!(
            "{}: expected header phone,start_s,end_s",
            path.display()
        )));
    }
    let mut raw = Vec::new();
    for row in reader.deserialize::<CsvRow>() {
        let row = row.map_err(|e| CorpusError::MalformedCsv(format!("{}: {e}", path.display())))?;
        raw.push(PhoneInterval::new(row.phone, row.start_s, row.end_s));
    }
    AlignmentTrack::from_raw(utterance_id_from_path(path), raw)
}

/// Write a track as a `phone,start_s,end_s` CSV.
pub fn write_alignment_csv(path: &Path, track: &AlignmentTrack) -> Result<()> {
    let mut out = String::from("phone,start_s,end_s\n");
    for iv in track.intervals() {
        out.push_str(&format!("{},{},{}\n", iv.label, iv.start_s, iv.end_s));
    }
    std::fs::write(path, out).map_err(|e| CorpusError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn single_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "u1.csv", "phone,start_s,end_s\nP,0.0,0.08\n");
        let track = parse_alignment_csv(&p).unwrap();
        assert_eq!(track.utterance_id(), "u1");
        assert_eq!(track.intervals(), &[PhoneInterval::new("P", 0.0, 0.08)]);
    }

    #[test]
    fn out_of_order_rows_are_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "u.csv",
            "phone,start_s,end_s\ner1,0.08,0.2\nsil,0.2,0.3\np,0.0,0.08\n",
        );
        let track = parse_alignment_csv(&p).unwrap();
        let labels: Vec<_> = track.intervals().iter().map(|i| i.label.as_str()).collect();
        assert_eq!(labels, ["P", "ER"]);
    }

    #[test]
    fn overlapping_rows_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "u.csv",
            "phone,start_s,end_s\nP,0.0,0.1\nAA,0.05,0.2\n",
        );
        assert!(matches!(
            parse_alignment_csv(&p),
            Err(CorpusError::NonMonotonicIntervals(_))
        ));
    }

    #[test]
    fn bad_header_and_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "label,begin,end\nP,0,1\n");
        assert!(matches!(
            parse_alignment_csv(&p),
            Err(CorpusError::MalformedCsv(_))
        ));
        let p = write(dir.path(), "b.csv", "phone,start_s,end_s\nP,zero,1\n");
        assert!(matches!(
            parse_alignment_csv(&p),
            Err(CorpusError::MalformedCsv(_))
        ));
    }

    #[test]
    fn random_track_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let labels = ["P", "T", "AA", "IY", "S", "ER", "N"];
        let mut t = 0.0;
        let mut intervals = Vec::new();
        for _ in 0..100 {
            let start: f64 = t + rng.gen_range(0.0..0.02);
            let end = start + rng.gen_range(0.01..0.2);
            intervals.push(PhoneInterval::new(
                labels[rng.gen_range(0..labels.len())],
                start,
                end,
            ));
            t = end;
        }
        let track = AlignmentTrack::new("rand", intervals).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rand.csv");
        write_alignment_csv(&p, &track).unwrap();
        assert_eq!(parse_alignment_csv(&p).unwrap(), track);
    }
}
