use super::{AudioClip, DspError, FeatureConfig, LogMelSpectrogram};
use rustfft::{num_complex::Complex, FftPlanner};

/// Energies below this are clamped before the logarithm.
pub const ENERGY_FLOOR: f64 = 1e-10;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters over the one-sided power spectrum, 0 Hz to Nyquist.
#[derive(Clone, Debug)]
pub struct MelFilterbank {
    /// `n_mels x (n_fft / 2 + 1)`, row-major.
    weights: Vec<f64>,
    n_bins: usize,
    edges_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, n_fft: usize, sample_rate: u32) -> Self {
        let n_bins = n_fft / 2 + 1;
        let nyquist = f64::from(sample_rate) / 2.0;
        let top = hz_to_mel(nyquist);
        let edges_hz: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = f64::from(sample_rate) / n_fft as f64;
        let mut weights = vec![0.0; n_mels * n_bins];
        for m in 0..n_mels {
            let (lo, c, hi) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
            for k in 0..n_bins {
                let f = k as f64 * bin_hz;
                let w = ((f - lo) / (c - lo)).min((hi - f) / (hi - c));
                weights[m * n_bins + k] = w.max(0.0);
            }
        }
        Self {
            weights,
            n_bins,
            edges_hz,
        }
    }

    pub fn n_mels(&self) -> usize {
        self.edges_hz.len() - 2
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn row(&self, band: usize) -> &[f64] {
        &self.weights[band * self.n_bins..(band + 1) * self.n_bins]
    }

    /// Peak frequency of each band, Hz.
    pub fn center_hz(&self, band: usize) -> f64 {
        self.edges_hz[band + 1]
    }

    /// Lower and upper edge of each band, Hz.
    pub fn band_edges_hz(&self, band: usize) -> (f64, f64) {
        (self.edges_hz[band], self.edges_hz[band + 2])
    }

    fn apply(&self, power: &[f64], out: &mut [f64]) {
        for (m, o) in out.iter_mut().enumerate() {
            *o = self.row(m).iter().zip(power).map(|(w, p)| w * p).sum();
        }
    }
}

fn hamming(n: usize) -> Vec<f64> {
    let denom = (n - 1) as f64;
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / denom).cos())
        .collect()
}

/// Log-mel energies of a mono clip at its own sample rate.
pub fn logmel(clip: &AudioClip, cfg: &FeatureConfig) -> Result<LogMelSpectrogram, DspError> {
    cfg.validate()?;
    if clip.channel_count() != 1 {
        return Err(DspError::InvalidClip(format!(
            "log-mel needs a mono clip, got {} channels",
            clip.channel_count()
        )));
    }
    let rate = clip.sample_rate();
    let win = cfg.window_len(rate);
    let hop = cfg.hop_len(rate);
    let n_fft = cfg.fft_len(rate);
    let samples = &clip.channels()[0];
    let frames = cfg
        .frame_count(samples.len(), rate)
        .ok_or(DspError::ClipTooShort {
            samples: samples.len(),
            window: win,
        })?;

    let window = hamming(win);
    let bank = MelFilterbank::new(cfg.n_mels, n_fft, rate);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut power = vec![0.0; bank.n_bins()];
    let mut energies = vec![0.0; cfg.n_mels];
    let mut values = Vec::with_capacity(frames * cfg.n_mels);
    let floor_log = ENERGY_FLOOR.ln();

    for t in 0..frames {
        let seg = &samples[t * hop..t * hop + win];
        for (b, (&s, &w)) in buf.iter_mut().zip(seg.iter().zip(&window)) {
            *b = Complex::new(f64::from(s) * w, 0.0);
        }
        buf[win..].fill(Complex::new(0.0, 0.0));
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr();
        }
        bank.apply(&power, &mut energies);
        // f32 rounding of ln(1e-10) sits just below the f64 value; keep the floor exact
        values.extend(energies.iter().map(|&e| {
            let v = e.max(ENERGY_FLOOR).ln();
            if v <= floor_log {
                floor_log as f32
            } else {
                v as f32
            }
        }));
    }

    Ok(LogMelSpectrogram {
        values,
        frames,
        n_mels: cfg.n_mels,
        frame_hop: hop as f64 / f64::from(rate),
        source_rate: rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, rate: u32, n: usize, amp: f64) -> AudioClip {
        let s = (0..n)
            .map(|i| {
                (amp * (2.0 * std::f64::consts::PI * freq * i as f64 / f64::from(rate)).sin())
                    as f32
            })
            .collect();
        AudioClip::mono(s, rate).unwrap()
    }

    #[test]
    fn silence_hits_the_floor() {
        let cfg = FeatureConfig::default();
        let clip = AudioClip::mono(vec![0.0; 8000], 32_000).unwrap();
        let s = logmel(&clip, &cfg).unwrap();
        assert_eq!(s.n_mels(), 64);
        assert_eq!(s.frames(), cfg.frame_count(8000, 32_000).unwrap());
        assert!(s.values().iter().all(|&v| v == (1e-10f64).ln() as f32));
    }

    #[test]
    fn too_short_is_rejected() {
        let clip = AudioClip::mono(vec![0.0; 1000], 32_000).unwrap();
        assert!(matches!(
            logmel(&clip, &FeatureConfig::default()),
            Err(DspError::ClipTooShort {
                samples: 1000,
                window: 1472
            })
        ));
    }

    #[test]
    fn tone_at_band_center_peaks_there() {
        let cfg = FeatureConfig::default();
        let bank = MelFilterbank::new(64, 2048, 32_000);
        for band in [8, 20, 33, 47, 60] {
            let f = bank.center_hz(band);
            // brute-force oracle: the band whose support contains f with the largest triangle weight
            let expect = (0..64)
                .max_by(|&a, &b| {
                    let tri = |m: usize| {
                        let (lo, hi) = bank.band_edges_hz(m);
                        let c = bank.center_hz(m);
                        ((f - lo) / (c - lo)).min((hi - f) / (hi - c)).max(0.0)
                    };
                    tri(a).partial_cmp(&tri(b)).unwrap()
                })
                .unwrap();
            assert_eq!(expect, band);
            let s = logmel(&tone(f, 32_000, 16_000, 0.5), &cfg).unwrap();
            for t in 0..s.frames() {
                let row = s.frame(t);
                let arg = (0..64)
                    .max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap())
                    .unwrap();
                assert_eq!(arg, band, "frame {t} at {f:.1} Hz");
            }
        }
    }

    #[test]
    fn filterbank_tiles_the_spectrum() {
        let bank = MelFilterbank::new(64, 2048, 32_000);
        assert_eq!(bank.band_edges_hz(0).0, 0.0);
        assert!((bank.band_edges_hz(63).1 - 16_000.0).abs() < 1e-6);
        for m in 0..64 {
            assert!(bank.row(m).iter().all(|&w| w >= 0.0));
            assert!(bank.row(m).iter().sum::<f64>() > 0.0);
            if m > 0 {
                assert_eq!(bank.band_edges_hz(m).0, bank.center_hz(m - 1));
            }
        }
    }
}
