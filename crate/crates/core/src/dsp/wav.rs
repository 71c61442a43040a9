use super::{AudioClip, DspError};
use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use std::path::Path;

/// Reads a 16-bit integer or 32-bit float PCM WAV file.
pub fn load_wav(path: &Path) -> Result<AudioClip, DspError> {
    if !path.exists() {
        return Err(DspError::MissingFile(path.to_path_buf()));
    }
    let reader = WavReader::open(path).map_err(|e| classify(path, e))?;
    let spec = reader.spec();
    let n_ch = usize::from(spec.channels);
    if n_ch == 0 {
        return Err(unsupported(path, "zero channels".into()));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f32::from(v) / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(|e| classify(path, e))?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(|e| classify(path, e))?,
        (fmt, bits) => return Err(unsupported(path, format!("{bits}-bit {fmt:?} samples"))),
    };
    if interleaved.is_empty() {
        return Err(DspError::EmptyAudio(path.to_path_buf()));
    }
    if !interleaved.len().is_multiple_of(n_ch) {
        return Err(DspError::Truncated {
            path: path.to_path_buf(),
            detail: format!("{} samples do not fill {n_ch} channels", interleaved.len()),
        });
    }
    let frames = interleaved.len() / n_ch;
    let mut channels = vec![Vec::with_capacity(frames); n_ch];
    for frame in interleaved.chunks_exact(n_ch) {
        for (ch, &s) in channels.iter_mut().zip(frame) {
            ch.push(s);
        }
    }
    AudioClip::new(channels, spec.sample_rate)
}

/// Writes `clip` as 16-bit PCM, clamping amplitudes to the representable range.
pub fn write_wav16(path: &Path, clip: &AudioClip) -> Result<(), DspError> {
    let spec = WavSpec {
        channels: clip.channel_count() as u16,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let io = |e: hound::Error| match e {
        hound::Error::IoError(source) => DspError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => unsupported(path, other.to_string()),
    };
    let mut w = WavWriter::create(path, spec).map_err(io)?;
    for i in 0..clip.len() {
        for ch in clip.channels() {
            let v = (f64::from(ch[i]) * 32768.0)
                .round()
                .clamp(-32768.0, 32767.0) as i16;
            w.write_sample(v).map_err(io)?;
        }
    }
    w.finalize().map_err(io)
}

fn unsupported(path: &Path, detail: String) -> DspError {
    DspError::UnsupportedEncoding {
        path: path.to_path_buf(),
        detail,
    }
}

fn classify(path: &Path, err: hound::Error) -> DspError {
    match err {
        hound::Error::IoError(e)
            if e.kind() == std::io::ErrorKind::UnexpectedEof
                || e.to_string().contains("enough bytes") =>
        {
            DspError::Truncated {
                path: path.to_path_buf(),
                detail: e.to_string(),
            }
        }
        hound::Error::IoError(source) => DspError::Io {
            path: path.to_path_buf(),
            source,
        },
        hound::Error::Unsupported => unsupported(path, "unsupported WAV feature".into()),
        hound::Error::FormatError(msg) => {
            if msg.contains("data") || msg.contains("length") {
                DspError::Truncated {
                    path: path.to_path_buf(),
                    detail: msg.to_string(),
                }
            } else {
                unsupported(path, msg.to_string())
            }
        }
        other => unsupported(path, other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_i16(path: &Path, channels: u16, rate: u32, samples: &[i16]) {
        let spec = WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(path, spec).unwrap();
        for &s in samples {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn stereo_16bit_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_i16(&p, 2, 44_100, &[32767, -32768, 0, 16384]);
        let clip = load_wav(&p).unwrap();
        assert_eq!(clip.channel_count(), 2);
        assert_eq!(clip.sample_rate(), 44_100);
        assert_eq!(clip.channels()[0], vec![32767.0 / 32768.0, 0.0]);
        assert_eq!(clip.channels()[1], vec![-1.0, 0.5]);

        let q = dir.path().join("b.wav");
        write_wav16(&q, &clip).unwrap();
        assert_eq!(load_wav(&q).unwrap(), clip);
    }

    #[test]
    fn float32_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        for s in [0.25f32, -0.5, 0.75] {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
        assert_eq!(load_wav(&p).unwrap().channels()[0], vec![0.25, -0.5, 0.75]);
    }

    #[test]
    fn failures_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_wav(&dir.path().join("nope.wav")),
            Err(DspError::MissingFile(_))
        ));

        let empty = dir.path().join("empty.wav");
        write_i16(&empty, 1, 8000, &[]);
        assert!(matches!(load_wav(&empty), Err(DspError::EmptyAudio(_))));

        let pcm8 = dir.path().join("u8.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 8,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&pcm8, spec).unwrap();
        w.write_sample(3i8).unwrap();
        w.finalize().unwrap();
        assert!(matches!(
            load_wav(&pcm8),
            Err(DspError::UnsupportedEncoding { .. })
        ));

        let trunc = dir.path().join("trunc.wav");
        write_i16(&trunc, 1, 8000, &[1; 100]);
        let bytes = std::fs::read(&trunc).unwrap();
        std::fs::write(&trunc, &bytes[..bytes.len() - 51]).unwrap();
        let err = load_wav(&trunc).unwrap_err();
        assert!(matches!(err, DspError::Truncated { .. }), "{err:?}");
    }
}
