use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CorpusError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub utterance_id: String,
    pub speaker_id: String,
    pub audio_path: PathBuf,
    pub alignment_path: PathBuf,
}

/// Utterance table linking audio to alignments and speakers. Row order is
/// preserved; it fixes the processing order everywhere downstream.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    rows: Vec<ManifestRow>,
}

impl Manifest {
    /// Validate rows: unique utterance ids and existing files.
    pub fn new(rows: Vec<ManifestRow>) -> Result<Self> {
        let mut seen = HashSet::new();
        for row in &rows {
            if !seen.insert(row.utterance_id.as_str()) {
                return Err(CorpusError::DuplicateId(row.utterance_id.clone()));
            }
            for p in [&row.audio_path, &row.alignment_path] {
                if !p.is_file() {
                    return Err(CorpusError::MissingFile(p.clone()));
                }
            }
        }
        Ok(Manifest { rows })
    }

    pub fn rows(&self) -> &[ManifestRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows restricted to the given speakers, order preserved.
    pub fn filter_speakers(&self, keep: impl Fn(&str) -> bool) -> Manifest {
        Manifest {
            rows: self
                .rows
                .iter()
                .filter(|r| keep(&r.speaker_id))
                .cloned()
                .collect(),
        }
    }

    /// Serialize as CSV text with the given paths written verbatim.
    pub fn to_csv_string(&self) -> String {
        Self::csv_string(&self.rows)
    }

    /// CSV text for arbitrary rows (no validation).
    pub fn csv_string(rows: &[ManifestRow]) -> String {
        let mut out = String::from("utterance_id,speaker_id,audio_path,alignment_path\n");
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(Vec::new());
        for r in rows {
            w.write_record([
                r.utterance_id.as_str(),
                r.speaker_id.as_str(),
                &r.audio_path.to_string_lossy(),
                &r.alignment_path.to_string_lossy(),
            ])
            .expect("in-memory csv write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8"));
        out
    }
}

fn check_headers(
    reader: &mut csv::Reader<std::fs::File>,
    expected: &[&str],
    path: &Path,
) -> Result<()> {
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::MalformedCsv(format!("{}: {e}", path.display())))?;
    let found: Vec<&str> = headers.iter().map(str::trim).collect();
    if found != expected {
        return Err(CorpusError::MalformedCsv(format!(
            "{}: expected header {}, found {}",
            path.display(),
            expected.join(","),
            found.join(",")
        )));
    }
    Ok(())
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    if !path.is_file() {
        return Err(CorpusError::MissingFile(path.to_path_buf()));
    }
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CorpusError::MalformedCsv(format!("{}: {e}", path.display())))
}

/// Load an `utterance_id,speaker_id,audio_path,alignment_path` manifest.
/// Relative paths are resolved against the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let mut reader = open_csv(path)?;
    check_headers(
        &mut reader,
        &["utterance_id", "speaker_id", "audio_path", "alignment_path"],
        path,
    )?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut rows = Vec::new();
    for row in reader.deserialize::<ManifestRow>() {
        let mut row =
            row.map_err(|e| CorpusError::MalformedCsv(format!("{}: {e}", path.display())))?;
        if row.utterance_id.is_empty() {
            return Err(CorpusError::MalformedCsv("empty utterance_id".into()));
        }
        for p in [&mut row.audio_path, &mut row.alignment_path] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        rows.push(row);
    }
    Manifest::new(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRow {
    pub speaker_id: String,
    pub rating: f64,
}

/// Perceptual ratings, one per speaker.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RatingTable {
    rows: Vec<RatingRow>,
}

impl RatingTable {
    pub fn new(rows: Vec<RatingRow>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &rows {
            if !seen.insert(r.speaker_id.as_str()) {
                return Err(CorpusError::DuplicateId(r.speaker_id.clone()));
            }
            if !r.rating.is_finite() {
                return Err(CorpusError::MalformedCsv(format!(
                    "rating for {} is not finite",
                    r.speaker_id
                )));
            }
        }
        Ok(RatingTable { rows })
    }

    pub fn rows(&self) -> &[RatingRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, speaker_id: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.speaker_id == speaker_id)
            .map(|r| r.rating)
    }
}

/// Load a `speaker_id,rating` table.
pub fn load_ratings(path: &Path) -> Result<RatingTable> {
    let mut reader = open_csv(path)?;
    check_headers(&mut reader, &["speaker_id", "rating"], path)?;
    let rows = reader
        .deserialize::<RatingRow>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| CorpusError::MalformedCsv(format!("{}: {e}", path.display())))?;
    RatingTable::new(rows)
}

/// Inner join of per-speaker values with ratings, in the order of `values`.
/// Returns `(speaker_id, value, rating)`.
pub fn join_ratings<'a>(
    ratings: &RatingTable,
    values: impl IntoIterator<Item = (&'a str, f64)>,
) -> Vec<(String, f64, f64)> {
    let lookup: std::collections::HashMap<&str, f64> = ratings
        .rows
        .iter()
        .map(|r| (r.speaker_id.as_str(), r.rating))
        .collect();
    values
        .into_iter()
        .filter_map(|(spk, v)| lookup.get(spk).map(|&r| (spk.to_string(), v, r)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(dir: &Path, name: &str) {
        std::fs::write(dir.join(name), b"x").unwrap();
    }

    #[test]
    fn two_row_manifest_with_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        for f in ["a.wav", "a.csv", "b.wav", "b.csv"] {
            touch(dir.path(), f);
        }
        let m = dir.path().join("m.csv");
        std::fs::write(
            &m,
            "utterance_id,speaker_id,audio_path,alignment_path\nu1,s1,a.wav,a.csv\nu2,s1,b.wav,b.csv\n",
        )
        .unwrap();
        let manifest = load_manifest(&m).unwrap();
        assert_eq!(manifest.len(), 2);
        assert_eq!(manifest.rows()[1].audio_path, dir.path().join("b.wav"));
    }

    #[test]
    fn duplicate_utterance_id() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "a.wav");
        touch(dir.path(), "a.csv");
        let m = dir.path().join("m.csv");
        std::fs::write(
            &m,
            "utterance_id,speaker_id,audio_path,alignment_path\nu1,s1,a.wav,a.csv\nu1,s2,a.wav,a.csv\n",
        )
        .unwrap();
        assert!(matches!(load_manifest(&m), Err(CorpusError::DuplicateId(id)) if id == "u1"));
    }

    #[test]
    fn unresolvable_path() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.csv");
        std::fs::write(
            &m,
            "utterance_id,speaker_id,audio_path,alignment_path\nu1,s1,nope.wav,nope.csv\n",
        )
        .unwrap();
        assert!(matches!(
            load_manifest(&m),
            Err(CorpusError::MissingFile(_))
        ));
        assert!(matches!(
            load_manifest(&dir.path().join("absent.csv")),
            Err(CorpusError::MissingFile(_))
        ));
    }

    #[test]
    fn ratings_duplicates_and_join() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        std::fs::write(&p, "speaker_id,rating\ns1,1.5\ns1,2\n").unwrap();
        assert!(matches!(load_ratings(&p), Err(CorpusError::DuplicateId(_))));

        let n = 7;
        let mut body = String::from("speaker_id,rating\n");
        for i in 0..n {
            body.push_str(&format!("s{i},{}\n", i as f64 * 0.5));
        }
        std::fs::write(&p, body).unwrap();
        let table = load_ratings(&p).unwrap();
        let ids: Vec<String> = (0..n).rev().map(|i| format!("s{i}")).collect();
        let scores: Vec<(&str, f64)> = ids.iter().map(|s| (s.as_str(), 1.0)).collect();
        let joined = join_ratings(&table, scores.iter().copied());
        assert_eq!(joined.len(), n);
        // brute-force join
        for (spk, _, rating) in &joined {
            let expect = table
                .rows()
                .iter()
                .find(|r| &r.speaker_id == spk)
                .unwrap()
                .rating;
            assert_eq!(*rating, expect);
        }
        let partial = join_ratings(&table, [("s3", 0.2), ("zz", 0.1)]);
        assert_eq!(partial, vec![("s3".to_string(), 0.2, 1.5)]);
    }
}
