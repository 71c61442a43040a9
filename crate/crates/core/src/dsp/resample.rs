use super::{AudioClip, DspError};

/// Averages channels and linearly interpolates to `target_rate`.
///
/// A mono clip already at `target_rate` is returned bit-identical.
pub fn to_mono_resampled(clip: &AudioClip, target_rate: u32) -> Result<AudioClip, DspError> {
    if target_rate == 0 {
        return Err(DspError::InvalidClip("target rate must be positive".into()));
    }
    let mono: Vec<f32> = if clip.channel_count() == 1 {
        clip.channels()[0].clone()
    } else {
        let k = clip.channel_count() as f64;
        (0..clip.len())
            .map(|i| (clip.channels().iter().map(|c| f64::from(c[i])).sum::<f64>() / k) as f32)
            .collect()
    };
    if clip.sample_rate() == target_rate {
        return AudioClip::mono(mono, target_rate);
    }
    let n = mono.len();
    let ratio = f64::from(clip.sample_rate()) / f64::from(target_rate);
    let n_out =
        (n as f64 * f64::from(target_rate) / f64::from(clip.sample_rate())).round() as usize;
    let out = (0..n_out)
        .map(|j| {
            let pos = j as f64 * ratio;
            let i = pos.floor() as usize;
            if i + 1 >= n {
                return mono[n - 1];
            }
            let frac = pos - i as f64;
            ((1.0 - frac) * f64::from(mono[i]) + frac * f64::from(mono[i + 1])) as f32
        })
        .collect();
    AudioClip::mono(out, target_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn averages_channels() {
        let clip = AudioClip::new(vec![vec![1.0; 3], vec![0.0; 3]], 8000).unwrap();
        let m = to_mono_resampled(&clip, 8000).unwrap();
        assert_eq!(m.channels(), &[vec![0.5f32; 3]]);
    }

    #[test]
    fn resampled_length_matches_duration() {
        let clip = AudioClip::mono(vec![0.0; 44_100 * 15], 44_100).unwrap();
        let m = to_mono_resampled(&clip, 32_000).unwrap();
        assert_eq!(m.len(), 480_000);
        assert!((m.duration_secs() - clip.duration_secs()).abs() <= 1.0 / 32_000.0);
    }

    #[test]
    fn identity_at_target_rate() {
        let s: Vec<f32> = (0..50).map(|i| (i as f32 * 0.37).sin()).collect();
        let clip = AudioClip::mono(s, 16_000).unwrap();
        assert_eq!(to_mono_resampled(&clip, 16_000).unwrap(), clip);
    }

    #[test]
    fn linear_ramp_is_preserved() {
        let clip = AudioClip::mono((0..100).map(|i| i as f32 / 100.0).collect(), 10_000).unwrap();
        let up = to_mono_resampled(&clip, 20_000).unwrap();
        assert_eq!(up.len(), 200);
        for (j, &v) in up.channels()[0].iter().enumerate().take(198) {
            assert!((v - j as f32 / 200.0).abs() < 1e-6);
        }
    }
}
