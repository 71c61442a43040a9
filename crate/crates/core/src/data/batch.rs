use super::{load_delta, DataError, DatasetSplit, Split};
use crate::dsp::{featurize, load_wav, AudioClip, FeatureConfig, ENERGY_FLOOR};
use crate::model::InputShape;
use crate::taxonomy::{N_COARSE, N_FINE};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

/// A dataset with every clip's log-mel features in memory.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub data: DatasetSplit,
    features: Vec<Vec<f32>>,
    input: InputShape,
}

/// Stacked inputs and targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// `(B, 1, frames, n_mels)`.
    pub x: Tensor<f32>,
    /// `(B, 24)`.
    pub fae: Tensor<f32>,
    /// `(B, 7)`.
    pub cae: Tensor<f32>,
    /// `(B, 1)`.
    pub ar: Tensor<f32>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.x.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Corpus {
    /// Featurizes `clips` (same order as `data.examples`).
    ///
    /// All clips are brought to the frame count of the first: longer ones are
    /// cropped, shorter ones padded with the log energy floor.
    pub fn from_clips(
        data: DatasetSplit,
        clips: &[AudioClip],
        cfg: &FeatureConfig,
    ) -> Result<Self, DataError> {
        if clips.len() != data.examples.len() {
            return Err(DataError::Invalid(format!(
                "{} clips for {} examples",
                clips.len(),
                data.examples.len()
            )));
        }
        let specs = clips
            .iter()
            .map(|c| featurize(c, cfg))
            .collect::<Result<Vec<_>, _>>()?;
        Self::assemble(data, specs, cfg)
    }

    /// Loads and featurizes every clip listed in `manifest`.
    pub fn load(manifest: &Path, audio_dir: &Path, cfg: &FeatureConfig) -> Result<Self, DataError> {
        let data = load_delta(manifest, audio_dir)?;
        let specs = data
            .examples
            .iter()
            .map(|e| featurize(&load_wav(&audio_dir.join(&e.id))?, cfg))
            .collect::<Result<Vec<_>, _>>()?;
        Self::assemble(data, specs, cfg)
    }

    fn assemble(
        data: DatasetSplit,
        specs: Vec<crate::dsp::LogMelSpectrogram>,
        cfg: &FeatureConfig,
    ) -> Result<Self, DataError> {
        let Some(first) = specs.first() else {
            return Err(DataError::Invalid("dataset has no clips".into()));
        };
        let frames = first.frames();
        let n_mels = cfg.n_mels;
        let floor = ENERGY_FLOOR.ln() as f32;
        let mut adjusted = 0;
        let features = specs
            .into_iter()
            .map(|s| {
                let mut v = s.values().to_vec();
                if s.frames() != frames {
                    adjusted += 1;
                    v.resize(frames * n_mels, floor);
                }
                v
            })
            .collect();
        if adjusted > 0 {
            log::warn!("{adjusted} clips cropped or padded to {frames} frames");
        }
        Ok(Self {
            data,
            features,
            input: InputShape { frames, n_mels },
        })
    }

    pub fn input(&self) -> InputShape {
        self.input
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.data.indices(split)
    }

    pub fn features(&self, i: usize) -> &[f32] {
        &self.features[i]
    }

    pub fn batch(&self, idx: &[usize]) -> Batch {
        let per = self.input.frames * self.input.n_mels;
        let b = idx.len();
        let mut x = Vec::with_capacity(b * per);
        let mut fae = Vec::with_capacity(b * N_FINE);
        let mut cae = Vec::with_capacity(b * N_COARSE);
        let mut ar = Vec::with_capacity(b);
        let on = |v: bool| if v { 1.0 } else { 0.0 };
        for &i in idx {
            x.extend_from_slice(&self.features[i]);
            let l = &self.data.examples[i].labels;
            fae.extend(l.fae.iter().map(|&v| on(v)));
            cae.extend(l.cae().iter().map(|&v| on(v)));
            ar.push(l.ar as f32);
        }
        Batch {
            x: Tensor::new(&[b, 1, self.input.frames, self.input.n_mels], x).expect("batch shape"),
            fae: Tensor::new(&[b, N_FINE], fae).expect("batch shape"),
            cae: Tensor::new(&[b, N_COARSE], cae).expect("batch shape"),
            ar: Tensor::new(&[b, 1], ar).expect("batch shape"),
        }
    }
}

/// Splits `indices` into batches, shuffled by `seed` when given; the last
/// batch may be short.
pub fn batch_indices(indices: &[usize], batch_size: usize, seed: Option<u64>) -> Vec<Vec<usize>> {
    assert!(batch_size > 0, "batch size must be positive");
    let mut order = indices.to_vec();
    if let Some(s) = seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(s));
    }
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, SynthConfig};

    #[test]
    fn batch_counts_and_shuffle() {
        let idx: Vec<usize> = (0..2200).collect();
        let b = batch_indices(&idx, 64, Some(3));
        assert_eq!(b.len(), 2200usize.div_ceil(64));
        assert_eq!(b.len(), 35);
        assert_eq!(b.last().unwrap().len(), 2200 - 34 * 64);
        assert_eq!(b, batch_indices(&idx, 64, Some(3)));
        assert_ne!(b, batch_indices(&idx, 64, Some(4)));
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, idx);
    }

    #[test]
    fn corpus_batches() {
        let cfg = SynthConfig {
            n_clips: 8,
            duration_secs: 0.5,
            ..Default::default()
        };
        let (data, clips) = synth_dataset(&cfg).unwrap();
        let corpus = Corpus::from_clips(data, &clips, &FeatureConfig::default()).unwrap();
        let frames = FeatureConfig::default()
            .frame_count(16_000, 32_000)
            .unwrap();
        assert_eq!(corpus.input(), InputShape { frames, n_mels: 64 });
        let b = corpus.batch(&[0, 3, 5]);
        assert_eq!(b.x.shape(), [3, 1, frames, 64]);
        assert_eq!(b.fae.shape(), [3, 24]);
        assert_eq!(b.cae.shape(), [3, 7]);
        assert_eq!(b.ar.at(&[1, 0]), corpus.data.examples[3].labels.ar as f32);
    }
}
