use std::path::Path;

use super::{CorpusError, Result};

/// The only sample rate accepted by the toolkit.
pub const SAMPLE_RATE_HZ: u32 = 16_000;

/// Mono audio with samples scaled to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate_hz: u32,
}

impl AudioClip {
    /// Build a 16 kHz clip from samples already in [-1, 1].
    pub fn new(samples: Vec<f32>) -> Result<Self> {
        if samples.is_empty() {
            return Err(CorpusError::UnsupportedFormat("empty audio clip".into()));
        }
        if let Some(bad) = samples.iter().find(|s| !(s.abs() <= 1.0)) {
            return Err(CorpusError::UnsupportedFormat(format!(
                "sample {bad} outside [-1, 1]"
            )));
        }
        Ok(AudioClip {
            samples,
            sample_rate_hz: SAMPLE_RATE_HZ,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}

/// Read a 16 kHz, mono, 16-bit PCM WAV file.
pub fn load_wav(path: &Path) -> Result<AudioClip> {
    if !path.exists() {
        return Err(CorpusError::MissingFile(path.to_path_buf()));
    }
    let corrupt = |reason: String| CorpusError::CorruptFile {
        path: path.to_path_buf(),
        reason,
    };
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => corrupt(io.to_string()),
        hound::Error::Unsupported => {
            CorpusError::UnsupportedFormat("unsupported WAV encoding".into())
        }
        other => corrupt(other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(CorpusError::UnsupportedFormat(format!(
            "{}: expected 16-bit PCM, found {:?} {}-bit",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    if spec.channels != 1 {
        return Err(CorpusError::UnsupportedFormat(format!(
            "{}: expected mono, found {} channels",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_rate != SAMPLE_RATE_HZ {
        return Err(CorpusError::UnsupportedFormat(format!(
            "{}: expected {SAMPLE_RATE_HZ} Hz, found {} Hz",
            path.display(),
            spec.sample_rate
        )));
    }
    let declared = reader.len() as usize;
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f32 / 32768.0))
        .collect::<std::result::Result<Vec<f32>, _>>()
        .map_err(|e| corrupt(format!("truncated data chunk: {e}")))?;
    if samples.len() != declared {
        return Err(corrupt(format!(
            "data chunk declares {declared} samples, found {}",
            samples.len()
        )));
    }
    if samples.is_empty() {
        return Err(corrupt("no samples".into()));
    }
    Ok(AudioClip {
        samples,
        sample_rate_hz: SAMPLE_RATE_HZ,
    })
}

/// Write a clip as 16 kHz mono 16-bit PCM (values quantized by rounding).
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let to_io = |e: hound::Error| match e {
        hound::Error::IoError(io) => CorpusError::io(path, io),
        other => CorpusError::io(path, std::io::Error::other(other.to_string())),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(to_io)?;
    for &s in &clip.samples {
        let q = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(to_io)?;
    }
    writer.finalize().map_err(to_io)
}
