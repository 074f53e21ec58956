use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Result};

const DEFAULT_CONSONANTS: [&str; 21] = [
    "B", "D", "G", "P", "T", "K", "Z", "V", "S", "SH", "F", "HH", "TH", "DH", "CH", "JH", "N", "M",
    "NG", "L", "R",
];

const DEFAULT_VOWELS: [&str; 15] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER", "EY", "IH", "IY", "OW", "OY", "UH", "UW",
];

const SILENCE_LABELS: [&str; 4] = ["", "SIL", "SP", "SPN"];

/// Canonical form of an alignment label: trimmed, upper-cased, trailing
/// ARPABET stress digits removed.
pub fn normalize_label(label: &str) -> String {
    label
        .trim_start()
        .trim_end_matches(|c: char| matches!(c, '0' | '1' | '2') || c.is_whitespace())
        .to_uppercase()
}

pub(crate) fn is_silence(normalized: &str) -> bool {
    SILENCE_LABELS.contains(&normalized)
}

/// Consonant and vowel symbol sets. The consonant order is the classifier's
/// output order and must never be changed for a trained model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawInventory", into = "RawInventory")]
pub struct PhoneInventory {
    consonants: Vec<String>,
    vowels: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct RawInventory {
    consonants: Vec<String>,
    vowels: Vec<String>,
}

impl TryFrom<RawInventory> for PhoneInventory {
    type Error = CorpusError;

    fn try_from(raw: RawInventory) -> Result<Self> {
        PhoneInventory::new(raw.consonants, raw.vowels)
    }
}

impl From<PhoneInventory> for RawInventory {
    fn from(inv: PhoneInventory) -> Self {
        RawInventory {
            consonants: inv.consonants,
            vowels: inv.vowels,
        }
    }
}

impl Default for PhoneInventory {
    fn default() -> Self {
        PhoneInventory::new(
            DEFAULT_CONSONANTS.iter().map(|s| s.to_string()).collect(),
            DEFAULT_VOWELS.iter().map(|s| s.to_string()).collect(),
        )
        .expect("default inventory is valid")
    }
}

impl PhoneInventory {
    pub fn new(consonants: Vec<String>, vowels: Vec<String>) -> Result<Self> {
        let consonants: Vec<String> = consonants.iter().map(|c| normalize_label(c)).collect();
        let vowels: Vec<String> = vowels.iter().map(|v| normalize_label(v)).collect();
        if consonants.is_empty() {
            return Err(CorpusError::InvalidInventory("no consonants".into()));
        }
        let mut index = HashMap::with_capacity(consonants.len());
        for (i, c) in consonants.iter().enumerate() {
            if is_silence(c) {
                return Err(CorpusError::InvalidInventory(format!(
                    "silence label {c:?} cannot be a consonant"
                )));
            }
            if index.insert(c.clone(), i).is_some() {
                return Err(CorpusError::InvalidInventory(format!(
                    "consonant {c} listed twice"
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for v in &vowels {
            if index.contains_key(v) {
                return Err(CorpusError::InvalidInventory(format!(
                    "{v} is both a consonant and a vowel"
                )));
            }
            if is_silence(v) || !seen.insert(v.as_str()) {
                return Err(CorpusError::InvalidInventory(format!(
                    "bad vowel entry {v:?}"
                )));
            }
        }
        Ok(PhoneInventory {
            consonants,
            vowels,
            index,
        })
    }

    /// Load a JSON inventory file of the form `{"consonants": [...], "vowels": [...]}`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CorpusError::InvalidInventory(e.to_string()))
    }

    pub fn consonants(&self) -> &[String] {
        &self.consonants
    }

    pub fn vowels(&self) -> &[String] {
        &self.vowels
    }

    /// Number of consonant classes.
    pub fn len(&self) -> usize {
        self.consonants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.consonants.is_empty()
    }

    pub fn consonant_index(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn consonant(&self, index: usize) -> Option<&str> {
        self.consonants.get(index).map(String::as_str)
    }

    pub fn is_consonant(&self, label: &str) -> bool {
        self.index.contains_key(label)
    }

    pub fn is_vowel(&self, label: &str) -> bool {
        self.vowels.iter().any(|v| v == label)
    }
}
