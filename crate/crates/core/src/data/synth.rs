//! Planted synthetic corpora: each fine class has its own spectral signature
//! and the rating is a fixed logistic function of the class gains.

use super::{
    manifest::write_manifest, DataError, DatasetSplit, Example, LabelSet, Split, AR_MAX, AR_MIN,
};
use crate::dsp::{write_wav16, AudioClip};
use crate::taxonomy::{N_FINE, PARENT};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

/// Rating weight of each coarse class, applied to the gains of its children.
const COARSE_WEIGHT: [f64; 7] = [1.5, 0.3, -2.5, 0.5, 2.5, -2.0, 0.8];

/// Per fine class weight in the planted rating.
pub const SYNTH_AR_WEIGHTS: [f64; N_FINE] = {
    let mut w = [0.0; N_FINE];
    let mut i = 0;
    while i < N_FINE {
        w[i] = COARSE_WEIGHT[PARENT[i]];
        i += 1;
    }
    w
};

pub const SYNTH_AR_THETA: f64 = 1.5;

const PEAK: f64 = 0.04;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_clips: usize,
    pub seed: u64,
    pub sample_rate: u32,
    pub duration_secs: f64,
    /// Chance each class is present in a clip.
    pub presence: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_clips: 64,
            seed: 0,
            sample_rate: 32_000,
            duration_secs: 1.0,
            presence: 0.25,
            val_fraction: 0.125,
            test_fraction: 0.25,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::Invalid(m));
        if self.n_clips < 8 {
            return bad(format!("n_clips must be at least 8, got {}", self.n_clips));
        }
        if self.sample_rate < 8000 {
            return bad(format!("sample_rate {} is below 8000 Hz", self.sample_rate));
        }
        if self.duration_secs.is_nan() || self.duration_secs <= 0.0 {
            return bad("duration_secs must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.presence) {
            return bad("presence must lie in [0, 1]".into());
        }
        let f = self.val_fraction + self.test_fraction;
        if self.val_fraction < 0.0 || self.test_fraction < 0.0 || f >= 1.0 {
            return bad("val_fraction + test_fraction must lie in [0, 1)".into());
        }
        Ok(())
    }
}

/// Planted rating for a gain vector.
pub fn synth_rating(gains: &[f64; N_FINE]) -> f64 {
    let s: f64 = gains.iter().zip(SYNTH_AR_WEIGHTS).map(|(g, w)| g * w).sum();
    (1.0 + 9.0 / (1.0 + (SYNTH_AR_THETA - s).exp())).clamp(AR_MIN, AR_MAX)
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Frequency band reserved for class `k`, Hz.
fn band(k: usize, rate: u32) -> (f64, f64) {
    let lo = hz_to_mel(150.0);
    let hi = hz_to_mel(0.45 * f64::from(rate));
    let step = (hi - lo) / N_FINE as f64;
    (
        mel_to_hz(lo + step * k as f64),
        mel_to_hz(lo + step * (k + 1) as f64),
    )
}

/// Unit-peak signature of class `k`: a tone, an upward chirp, or band noise.
pub fn class_signature(k: usize, rate: u32, n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let (lo, hi) = band(k, rate);
    let (inner_lo, inner_hi) = (lo + 0.25 * (hi - lo), hi - 0.25 * (hi - lo));
    let sr = f64::from(rate);
    let phase: f64 = rng.gen_range(0.0..2.0 * PI);
    let mut s: Vec<f64> = match k % 3 {
        0 => {
            let f = 0.5 * (lo + hi);
            (0..n)
                .map(|i| (2.0 * PI * f * i as f64 / sr + phase).sin())
                .collect()
        }
        1 => {
            let dur = n as f64 / sr;
            let rate_hz = (inner_hi - inner_lo) / dur;
            (0..n)
                .map(|i| {
                    let t = i as f64 / sr;
                    (2.0 * PI * (inner_lo * t + 0.5 * rate_hz * t * t) + phase).sin()
                })
                .collect()
        }
        _ => {
            let partials: Vec<(f64, f64)> = (0..12)
                .map(|_| {
                    (
                        rng.gen_range(inner_lo..inner_hi),
                        rng.gen_range(0.0..2.0 * PI),
                    )
                })
                .collect();
            (0..n)
                .map(|i| {
                    let t = i as f64 / sr;
                    partials
                        .iter()
                        .map(|(f, p)| (2.0 * PI * f * t + p).sin())
                        .sum()
                })
                .collect()
        }
    };
    let peak = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        s.iter_mut().for_each(|v| *v /= peak);
    }
    s
}

fn quantize(v: f64) -> f32 {
    ((v * 32768.0).round().clamp(-32768.0, 32767.0) / 32768.0) as f32
}

/// Generates labels and mono 16-bit-exact audio for `cfg.n_clips` clips.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<(DatasetSplit, Vec<AudioClip>), DataError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = (cfg.duration_secs * f64::from(cfg.sample_rate)).round() as usize;
    let n_test = (cfg.n_clips as f64 * cfg.test_fraction).round() as usize;
    let n_val = (cfg.n_clips as f64 * cfg.val_fraction).round() as usize;
    let mut order: Vec<usize> = (0..cfg.n_clips).collect();
    order.shuffle(&mut rng);
    let mut splits = vec![Split::Train; cfg.n_clips];
    for (rank, &i) in order.iter().enumerate() {
        if rank < n_test {
            splits[i] = Split::Test;
        } else if rank < n_test + n_val {
            splits[i] = Split::Val;
        }
    }

    let mut examples = Vec::with_capacity(cfg.n_clips);
    let mut clips = Vec::with_capacity(cfg.n_clips);
    for (i, split) in splits.into_iter().enumerate() {
        let mut gains = [0.0; N_FINE];
        for g in gains.iter_mut() {
            if rng.gen_bool(cfg.presence) {
                *g = rng.gen_range(0.3..=1.0);
            }
        }
        let mut mix = vec![0.0; n];
        for (k, &g) in gains.iter().enumerate() {
            if g > 0.0 {
                let sig = class_signature(k, cfg.sample_rate, n, &mut rng);
                mix.iter_mut()
                    .zip(sig)
                    .for_each(|(m, s)| *m += PEAK * g * s);
            }
        }
        let fae = gains.map(|g| g > 0.0);
        examples.push(Example {
            id: format!("synth_{i:05}.wav"),
            labels: LabelSet::new(fae, synth_rating(&gains))?,
            split,
        });
        clips.push(AudioClip::mono(
            mix.into_iter().map(quantize).collect(),
            cfg.sample_rate,
        )?);
    }
    Ok((DatasetSplit::new(examples)?, clips))
}

/// Writes `audio/*.wav` and `manifest.csv` under `dir`.
pub fn write_synth(dir: &Path, cfg: &SynthConfig) -> Result<DatasetSplit, DataError> {
    let (data, clips) = synth_dataset(cfg)?;
    let audio = dir.join("audio");
    std::fs::create_dir_all(&audio).map_err(|source| DataError::Io {
        path: audio.clone(),
        source,
    })?;
    for (e, clip) in data.examples.iter().zip(&clips) {
        write_wav16(&audio.join(&e.id), clip)?;
    }
    write_manifest(&dir.join("manifest.csv"), &data)?;
    Ok(data)
}
