//! Synthetic data generators for tests, demos and the acceptance suite.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{
    render_textgrid, write_alignment_csv, write_wav, AlignmentTrack, AudioClip, CorpusError,
    Manifest, ManifestRow, PhoneInterval, PhoneInventory, TextGridForm, SAMPLE_RATE_HZ,
};
use crate::network::Example;
use crate::segmenter::WindowMs;

pub const QUADRANT_HEIGHT: usize = 40;
pub const QUADRANT_WIDTH: usize = 32;
const QUADRANT_BOOST: f64 = 2.0;

/// Quadrant index (`0` top-left, `1` top-right, `2` bottom-left,
/// `3` bottom-right) of cell `(row, col)`.
pub fn quadrant_of(row: usize, col: usize, height: usize, width: usize) -> usize {
    2 * usize::from(row >= height / 2) + usize::from(col >= width / 2)
}

/// Balanced 4-class dataset of 40x32 maps: unit-variance noise everywhere and
/// a constant boost on the quadrant named by the label. Every example is its
/// own group.
pub fn quadrant_dataset(n: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    (0..n)
        .map(|i| {
            let label = i % 4;
            let input = (0..QUADRANT_HEIGHT * QUADRANT_WIDTH)
                .map(|idx| {
                    let (r, c) = (idx / QUADRANT_WIDTH, idx % QUADRANT_WIDTH);
                    let boost = if quadrant_of(r, c, QUADRANT_HEIGHT, QUADRANT_WIDTH) == label {
                        QUADRANT_BOOST
                    } else {
                        0.0
                    };
                    (noise.sample(&mut rng) + boost) as f32
                })
                .collect();
            Example {
                input,
                label,
                group: i,
            }
        })
        .collect()
}

/// Reference classifier for the quadrant data: the quadrant with the largest sum.
pub fn quadrant_scan(input: &[f32], height: usize, width: usize) -> usize {
    let mut sums = [0.0f64; 4];
    for (idx, &v) in input.iter().enumerate() {
        sums[quadrant_of(idx / width, idx % width, height, width)] += f64::from(v);
    }
    (0..4).fold(0, |best, q| if sums[q] > sums[best] { q } else { best })
}

const EDGE_FRAMES: usize = 40;

/// First column of the two-frame blob at distance level `level` from the
/// centre of a 40-frame map, on the given side. Level `k` is visible exactly
/// for windows of at least `60 + 20k` ms.
fn edge_column(level: usize, right: bool) -> usize {
    if right {
        24 + 2 * level
    } else {
        14 - 2 * level
    }
}

/// Dataset for window sweeps: each example is a 40-frame (200 ms) map with a
/// band-limited blob whose mel quarter is the class, placed at a random
/// distance from the centre. The centre `window.frames()` columns are kept, so
/// wider windows see strictly more of the discriminative blobs.
pub fn edge_dataset(window: WindowMs, n: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.3).expect("positive std");
    let keep = window.frames();
    let first = (EDGE_FRAMES - keep) / 2;
    (0..n)
        .map(|i| {
            let label = i % 4;
            let level = rng.gen_range(0..8);
            let col = edge_column(level, rng.gen_bool(0.5));
            let mut full = vec![0.0f32; QUADRANT_HEIGHT * EDGE_FRAMES];
            for (idx, v) in full.iter_mut().enumerate() {
                let (r, c) = (idx / EDGE_FRAMES, idx % EDGE_FRAMES);
                let blob = r / 10 == label && (c == col || c == col + 1);
                *v = (noise.sample(&mut rng) + if blob { 3.0 } else { 0.0 }) as f32;
            }
            let input = (0..QUADRANT_HEIGHT)
                .flat_map(|r| {
                    full[r * EDGE_FRAMES + first..r * EDGE_FRAMES + first + keep].to_vec()
                })
                .collect();
            Example {
                input,
                label,
                group: i,
            }
        })
        .collect()
}

/// One generated utterance and the phone sequence it was built from
/// (silences included, labels as written).
#[derive(Debug, Clone)]
pub struct SynthUtterance {
    pub row: ManifestRow,
    pub phones: Vec<PhoneInterval>,
}

impl SynthUtterance {
    /// Number of contiguous (consonant, vowel) pairs in the generated sequence.
    pub fn cv_pairs(&self, inventory: &PhoneInventory) -> usize {
        self.phones
            .windows(2)
            .filter(|p| {
                inventory.is_consonant(&p[0].label)
                    && inventory.is_vowel(&crate::corpus::normalize_label(&p[1].label))
            })
            .count()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SynthCorpusConfig {
    pub utterances: usize,
    pub speakers: usize,
    /// Phones (including pauses) per utterance.
    pub phones: usize,
    pub seed: u64,
}

impl Default for SynthCorpusConfig {
    fn default() -> Self {
        SynthCorpusConfig {
            utterances: 20,
            speakers: 4,
            phones: 12,
            seed: 7,
        }
    }
}

fn consonant_tone(index: usize) -> f64 {
    250.0 + 310.0 * index as f64
}

/// Audio for a phone sequence: each consonant is a tone whose frequency
/// identifies it, each vowel a two-tone chord, pauses are near-silent.
fn render_audio(
    phones: &[PhoneInterval],
    inventory: &PhoneInventory,
    rng: &mut ChaCha8Rng,
) -> Vec<f32> {
    let total = phones.last().map_or(0.0, |p| p.end_s);
    let n = (total * SAMPLE_RATE_HZ as f64).round() as usize;
    let noise = Normal::new(0.0, 0.002).expect("positive std");
    let rate = SAMPLE_RATE_HZ as f64;
    let mut out = vec![0.0f32; n];
    for p in phones {
        let start = (p.start_s * rate).round() as usize;
        let end = ((p.end_s * rate).round() as usize).min(n);
        let label = crate::corpus::normalize_label(&p.label);
        let tones: Vec<f64> = if let Some(c) = inventory.consonant_index(&label) {
            vec![consonant_tone(c)]
        } else if inventory.is_vowel(&label) {
            let v = inventory
                .vowels()
                .iter()
                .position(|x| *x == label)
                .unwrap_or(0) as f64;
            vec![500.0 + 40.0 * v, 1500.0 + 90.0 * v]
        } else {
            Vec::new()
        };
        for (k, slot) in out[start..end].iter_mut().enumerate() {
            let t = (start + k) as f64 / rate;
            let tone: f64 = tones.iter().map(|f| (2.0 * PI * f * t).sin()).sum::<f64>() * 0.3
                / tones.len().max(1) as f64;
            *slot = (tone + noise.sample(rng)).clamp(-1.0, 1.0) as f32;
        }
    }
    out
}

fn random_phones(
    config: &SynthCorpusConfig,
    inventory: &PhoneInventory,
    rng: &mut ChaCha8Rng,
) -> Vec<PhoneInterval> {
    let mut t = 0.05;
    let mut phones = vec![PhoneInterval::new("sil", 0.0, t)];
    for _ in 0..config.phones {
        let draw: f64 = rng.gen();
        let label = if draw < 0.1 {
            "sp".to_string()
        } else if draw < 0.55 {
            inventory.consonants()[rng.gen_range(0..inventory.consonants().len())].clone()
        } else {
            let v = &inventory.vowels()[rng.gen_range(0..inventory.vowels().len())];
            format!("{v}{}", rng.gen_range(0..3))
        };
        let dur = rng.gen_range(0.04..0.16);
        phones.push(PhoneInterval::new(&label, t, t + dur));
        t += dur;
    }
    phones.push(PhoneInterval::new("sil", t, t + 0.05));
    phones
}

/// Write a corpus of WAV files and alignments (TextGrid, alternating long and
/// short form, every third one as CSV) plus `manifest.csv` (paths relative
/// to `dir`) into `dir`.
pub fn write_synthetic_corpus(
    dir: &Path,
    config: &SynthCorpusConfig,
    inventory: &PhoneInventory,
) -> Result<Vec<SynthUtterance>, CorpusError> {
    fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::with_capacity(config.utterances);
    for u in 0..config.utterances {
        let utterance_id = format!("utt{u:03}");
        let speaker_id = format!("spk{}", u % config.speakers.max(1));
        let phones = random_phones(config, inventory, &mut rng);
        let audio = render_audio(&phones, inventory, &mut rng);
        let wav_path = dir.join(format!("{utterance_id}.wav"));
        write_wav(&wav_path, &AudioClip::new(audio)?)?;
        let total = phones.last().map_or(0.0, |p| p.end_s);
        let track = AlignmentTrack::from_raw(&utterance_id, phones.clone())?;
        let alignment_path = if u % 3 == 2 {
            let p = dir.join(format!("{utterance_id}.csv"));
            write_alignment_csv(&p, &track)?;
            p
        } else {
            let form = if u % 2 == 0 {
                TextGridForm::Long
            } else {
                TextGridForm::Short
            };
            let p = dir.join(format!("{utterance_id}.TextGrid"));
            fs::write(&p, render_textgrid(&track, "phones", total, form))
                .map_err(|e| CorpusError::io(&p, e))?;
            p
        };
        out.push(SynthUtterance {
            row: ManifestRow {
                utterance_id,
                speaker_id,
                audio_path: wav_path,
                alignment_path,
            },
            phones,
        });
    }
    // Validates ids and paths; the file itself stores paths relative to `dir`.
    Manifest::new(out.iter().map(|u| u.row.clone()).collect())?;
    let relative: Vec<ManifestRow> = out
        .iter()
        .map(|u| ManifestRow {
            audio_path: u.row.audio_path.file_name().expect("file").into(),
            alignment_path: u.row.alignment_path.file_name().expect("file").into(),
            ..u.row.clone()
        })
        .collect();
    let manifest_path = dir.join("manifest.csv");
    fs::write(&manifest_path, Manifest::csv_string(&relative))
        .map_err(|e| CorpusError::io(&manifest_path, e))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrant_scan_is_perfect() {
        let data = quadrant_dataset(200, 3);
        for ex in &data {
            assert_eq!(
                quadrant_scan(&ex.input, QUADRANT_HEIGHT, QUADRANT_WIDTH),
                ex.label
            );
        }
    }

    #[test]
    fn edge_levels_nest() {
        for level in 0..8 {
            let w = WindowMs::new(60 + 20 * level as u32).unwrap();
            let first = (EDGE_FRAMES - w.frames()) / 2;
            let last = first + w.frames();
            for right in [false, true] {
                let c = edge_column(level, right);
                assert!(
                    c >= first && c + 1 < last,
                    "level {level} visible in its own window"
                );
                if level > 0 {
                    let narrower = WindowMs::new(40 + 20 * level as u32).unwrap();
                    let f = (EDGE_FRAMES - narrower.frames()) / 2;
                    assert!(
                        c + 1 < f || c >= f + narrower.frames(),
                        "level {level} hidden below"
                    );
                }
            }
        }
        assert_eq!(
            edge_dataset(WindowMs::new(100).unwrap(), 3, 1)[0]
                .input
                .len(),
            40 * 20
        );
    }
}
