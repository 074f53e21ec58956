//! Log-mel front end: 20 ms Hamming frames every 5 ms, 512-point power
//! spectrum, 40 HTK-mel triangular filters between 100 Hz and 7800 Hz,
//! natural log with a 1e-10 floor.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("invalid band: fmin {fmin} Hz must be below fmax {fmax} Hz and fmax at most Nyquist {nyquist} Hz")]
    InvalidBand { fmin: f64, fmax: f64, nyquist: f64 },
    #[error("invalid front-end configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelConfig {
    pub n_mels: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub sample_rate_hz: u32,
    pub n_fft: usize,
    pub frame_len: usize,
    pub hop_len: usize,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            n_mels: 40,
            fmin_hz: 100.0,
            fmax_hz: 7800.0,
            sample_rate_hz: 16_000,
            n_fft: 512,
            frame_len: 320,
            hop_len: 80,
            log_floor: 1e-10,
        }
    }
}

impl MelConfig {
    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frames produced for a segment of `n_samples`.
    pub fn frames_for(&self, n_samples: usize) -> usize {
        n_samples / self.hop_len
    }
}

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Symmetric Hamming window, `w[n] = 0.54 - 0.46 cos(2 pi n / (N - 1))`.
pub fn hamming(len: usize) -> Vec<f64> {
    let denom = (len - 1) as f64;
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / denom).cos())
        .collect()
}

/// Split a segment into windowed frames. Frame `k` covers samples
/// `[k*hop, k*hop + frame_len)`; the segment is right-padded with zeros so
/// that exactly `len / hop` frames exist.
pub fn frame_segment(samples: &[f32], config: &MelConfig) -> Vec<Vec<f64>> {
    let window = hamming(config.frame_len);
    frame_with(samples, config, &window)
}

fn frame_with(samples: &[f32], config: &MelConfig, window: &[f64]) -> Vec<Vec<f64>> {
    let n_frames = config.frames_for(samples.len());
    (0..n_frames)
        .map(|k| {
            let start = k * config.hop_len;
            window
                .iter()
                .enumerate()
                .map(|(n, w)| samples.get(start + n).map_or(0.0, |&s| s as f64) * w)
                .collect()
        })
        .collect()
}

/// Triangular mel filters stored as an `n_mels x n_bins` row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    n_mels: usize,
    n_bins: usize,
    weights: Vec<f64>,
    /// `n_mels + 2` band edges in Hz; filter `m` peaks at `edges[m + 1]`.
    edges_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    pub fn edges_hz(&self) -> &[f64] {
        &self.edges_hz
    }

    pub fn center_hz(&self, m: usize) -> f64 {
        self.edges_hz[m + 1]
    }

    /// Filter energies for one power spectrum.
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        assert_eq!(power.len(), self.n_bins, "power spectrum length");
        (0..self.n_mels)
            .map(|m| self.row(m).iter().zip(power).map(|(w, p)| w * p).sum())
            .collect()
    }
}

pub fn build_filterbank(config: &MelConfig) -> Result<MelFilterbank, FeatureError> {
    let nyquist = config.sample_rate_hz as f64 / 2.0;
    if !(config.fmin_hz >= 0.0 && config.fmin_hz < config.fmax_hz && config.fmax_hz <= nyquist) {
        return Err(FeatureError::InvalidBand {
            fmin: config.fmin_hz,
            fmax: config.fmax_hz,
            nyquist,
        });
    }
    if config.n_mels == 0 || config.n_fft < 2 {
        return Err(FeatureError::InvalidConfig(
            "n_mels and n_fft must be positive".into(),
        ));
    }
    let (lo, hi) = (hz_to_mel(config.fmin_hz), hz_to_mel(config.fmax_hz));
    let n_edges = config.n_mels + 2;
    let edges_hz: Vec<f64> = (0..n_edges)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_edges - 1) as f64))
        .collect();
    let n_bins = config.n_bins();
    let bin_hz = config.sample_rate_hz as f64 / config.n_fft as f64;
    let mut weights = vec![0.0; config.n_mels * n_bins];
    for m in 0..config.n_mels {
        let (left, center, right) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f > left && f <= center {
                (f - left) / (center - left)
            } else if f > center && f < right {
                (right - f) / (right - center)
            } else {
                0.0
            };
            weights[m * n_bins + k] = w;
        }
    }
    Ok(MelFilterbank {
        n_mels: config.n_mels,
        n_bins,
        weights,
        edges_hz,
    })
}

/// Log-mel matrix, `n_mels` rows by `n_frames` columns, row 0 the lowest band.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    n_mels: usize,
    n_frames: usize,
    data: Vec<f64>,
}

impl MelSpectrogram {
    pub fn from_data(n_mels: usize, n_frames: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n_mels * n_frames, "mel data length");
        MelSpectrogram {
            n_mels,
            n_frames,
            data,
        }
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_mels, self.n_frames)
    }

    pub fn get(&self, mel: usize, frame: usize) -> f64 {
        self.data[mel * self.n_frames + frame]
    }

    /// Row-major data (`mel * n_frames + frame`).
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// CSV with one row per mel band and one column per frame, no header.
    pub fn to_csv(&self) -> String {
        matrix_to_csv(&self.data, self.n_mels, self.n_frames)
    }
}

/// Headerless CSV of a row-major matrix.
pub fn matrix_to_csv(data: &[f64], rows: usize, cols: usize) -> String {
    let mut out = String::new();
    for r in 0..rows {
        for c in 0..cols {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&crate::format_f64(data[r * cols + c]));
        }
        out.push('\n');
    }
    out
}

/// Reusable front end: window, FFT plan and filterbank are built once and
/// shared read-only.
#[derive(Clone)]
pub struct MelFrontEnd {
    config: MelConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    filterbank: MelFilterbank,
}

impl std::fmt::Debug for MelFrontEnd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MelFrontEnd")
            .field("config", &self.config)
            .finish()
    }
}

impl MelFrontEnd {
    pub fn new(config: MelConfig) -> Result<Self, FeatureError> {
        if config.frame_len > config.n_fft || config.hop_len == 0 || config.frame_len < 2 {
            return Err(FeatureError::InvalidConfig(format!(
                "frame_len {} / hop_len {} incompatible with n_fft {}",
                config.frame_len, config.hop_len, config.n_fft
            )));
        }
        if !(config.log_floor > 0.0) {
            return Err(FeatureError::InvalidConfig(
                "log_floor must be positive".into(),
            ));
        }
        let filterbank = build_filterbank(&config)?;
        let fft = FftPlanner::new().plan_fft_forward(config.n_fft);
        Ok(MelFrontEnd {
            window: hamming(config.frame_len),
            fft,
            filterbank,
            config,
        })
    }

    pub fn config(&self) -> &MelConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    pub fn frames(&self, samples: &[f32]) -> Vec<Vec<f64>> {
        frame_with(samples, &self.config, &self.window)
    }

    /// `|DFT|^2` of a windowed frame zero-padded to `n_fft`, bins `0..=n_fft/2`.
    pub fn power_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        assert!(frame.len() <= self.config.n_fft, "frame longer than FFT");
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .map(|&x| Complex::new(x, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(self.config.n_fft)
            .collect();
        self.fft.process(&mut buf);
        buf[..self.config.n_bins()]
            .iter()
            .map(|c| c.norm_sqr())
            .collect()
    }

    pub fn melspec(&self, samples: &[f32]) -> MelSpectrogram {
        let frames = self.frames(samples);
        let n_frames = frames.len();
        let n_mels = self.config.n_mels;
        let mut data = vec![0.0; n_mels * n_frames];
        for (t, frame) in frames.iter().enumerate() {
            let energies = self.filterbank.apply(&self.power_spectrum(frame));
            for (m, e) in energies.into_iter().enumerate() {
                data[m * n_frames + t] = e.max(self.config.log_floor).ln();
            }
        }
        MelSpectrogram {
            n_mels,
            n_frames,
            data,
        }
    }
}
