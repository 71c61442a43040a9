//! Audio ingestion and the log-mel front end.

mod mel;
mod resample;
mod wav;

pub use mel::{logmel, MelFilterbank, ENERGY_FLOOR};
pub use resample::to_mono_resampled;
pub use wav::{load_wav, write_wav16};

use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("audio file not found: {0}")]
    MissingFile(PathBuf),
    #[error("unsupported audio encoding in {path}: {detail}")]
    UnsupportedEncoding { path: PathBuf, detail: String },
    #[error("truncated data chunk in {path}: {detail}")]
    Truncated { path: PathBuf, detail: String },
    #[error("empty audio: {0}")]
    EmptyAudio(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid audio clip: {0}")]
    InvalidClip(String),
    #[error("invalid feature configuration: {0}")]
    InvalidConfig(String),
    #[error("clip too short: {samples} samples is less than one {window}-sample window")]
    ClipTooShort { samples: usize, window: usize },
}

/// Channel-separated PCM amplitudes in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    channels: Vec<Vec<f32>>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(channels: Vec<Vec<f32>>, sample_rate: u32) -> Result<Self, DspError> {
        if channels.is_empty() {
            return Err(DspError::InvalidClip("no channels".into()));
        }
        if sample_rate == 0 {
            return Err(DspError::InvalidClip("sample rate must be positive".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(DspError::InvalidClip("channels differ in length".into()));
        }
        if channels.iter().flatten().any(|s| !s.is_finite()) {
            return Err(DspError::InvalidClip("non-finite sample".into()));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn mono(samples: Vec<f32>, sample_rate: u32) -> Result<Self, DspError> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn channels(&self) -> &[Vec<f32>] {
        &self.channels
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_secs(&self) -> f64 {
        self.len() as f64 / f64::from(self.sample_rate)
    }
}

/// Front-end parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    /// Rate clips are resampled to before analysis, Hz.
    pub sample_rate: u32,
    pub window_ms: f64,
    /// Fraction of the window shared by consecutive frames.
    pub overlap: f64,
    pub n_mels: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: 32_000,
            window_ms: 46.0,
            overlap: 1.0 / 3.0,
            n_mels: 64,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), DspError> {
        if self.sample_rate == 0 {
            return Err(DspError::InvalidConfig(
                "sample_rate must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(DspError::InvalidConfig(format!(
                "overlap {} outside [0, 1)",
                self.overlap
            )));
        }
        if self.n_mels == 0 {
            return Err(DspError::InvalidConfig("n_mels must be positive".into()));
        }
        if self.window_len(self.sample_rate) < 2 || self.hop_len(self.sample_rate) == 0 {
            return Err(DspError::InvalidConfig(format!(
                "window of {} ms is too short at {} Hz",
                self.window_ms, self.sample_rate
            )));
        }
        Ok(())
    }

    pub fn window_len(&self, rate: u32) -> usize {
        (self.window_ms / 1000.0 * f64::from(rate)).round() as usize
    }

    pub fn hop_len(&self, rate: u32) -> usize {
        (self.window_len(rate) as f64 * (1.0 - self.overlap)).round() as usize
    }

    pub fn fft_len(&self, rate: u32) -> usize {
        self.window_len(rate).next_power_of_two()
    }

    /// Frames produced for `n_samples` at `rate`, if at least one fits.
    pub fn frame_count(&self, n_samples: usize, rate: u32) -> Option<usize> {
        let win = self.window_len(rate);
        (n_samples >= win).then(|| 1 + (n_samples - win) / self.hop_len(rate))
    }
}

/// `frames x n_mels` natural-log mel energies, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LogMelSpectrogram {
    values: Vec<f32>,
    frames: usize,
    n_mels: usize,
    frame_hop: f64,
    source_rate: u32,
}

impl LogMelSpectrogram {
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    /// Hop between frames, seconds.
    pub fn frame_hop(&self) -> f64 {
        self.frame_hop
    }

    pub fn source_rate(&self) -> u32 {
        self.source_rate
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.values[i * self.n_mels..(i + 1) * self.n_mels]
    }

    pub fn at(&self, frame: usize, band: usize) -> f32 {
        self.values[frame * self.n_mels + band]
    }
}

/// Mono-mixes, resamples to `cfg.sample_rate`, and computes the log-mel matrix.
pub fn featurize(clip: &AudioClip, cfg: &FeatureConfig) -> Result<LogMelSpectrogram, DspError> {
    cfg.validate()?;
    let mono = to_mono_resampled(clip, cfg.sample_rate)?;
    logmel(&mono, cfg)
}
