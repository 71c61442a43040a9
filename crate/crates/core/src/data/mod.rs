//! Labels, manifests, synthetic corpora, and batching.

mod batch;
mod manifest;
mod synth;

pub use batch::{batch_indices, Batch, Corpus};
pub use manifest::{load_delta, read_manifest, write_manifest};
pub use synth::{
    class_signature, synth_dataset, synth_rating, write_synth, SynthConfig, SYNTH_AR_THETA,
    SYNTH_AR_WEIGHTS,
};

use crate::dsp::DspError;
use crate::taxonomy::{group_fine_to_coarse, N_COARSE, N_FINE};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("manifest {path}: {msg}")]
    Manifest { path: PathBuf, msg: String },
    #[error("manifest {path}, row {row}: {msg}")]
    Row {
        path: PathBuf,
        row: usize,
        msg: String,
    },
    #[error("audio file for {id} not found at {path}")]
    MissingAudio { id: String, path: PathBuf },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub const AR_MIN: f64 = 1.0;
pub const AR_MAX: f64 = 10.0;

/// OR of each coarse class's children.
pub fn derive_coarse(fae: &[bool; N_FINE]) -> [bool; N_COARSE] {
    let mut out = [false; N_COARSE];
    for (f, &on) in fae.iter().enumerate() {
        if on {
            out[group_fine_to_coarse(f).expect("fine index in range")] = true;
        }
    }
    out
}

/// Targets of one clip.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelSet {
    pub fae: [bool; N_FINE],
    pub ar: f64,
}

impl LabelSet {
    pub fn new(fae: [bool; N_FINE], ar: f64) -> Result<Self, DataError> {
        if !(AR_MIN..=AR_MAX).contains(&ar) {
            return Err(DataError::Invalid(format!(
                "annoyance {ar} outside [1, 10]"
            )));
        }
        Ok(Self { fae, ar })
    }

    pub fn cae(&self) -> [bool; N_COARSE] {
        derive_coarse(&self.fae)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Val => "val",
            Self::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Self::Train),
            "val" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            other => Err(format!(
                "unknown split tag {other:?} (expected train, val or test)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    /// Audio filename relative to the audio directory.
    pub id: String,
    pub labels: LabelSet,
    pub split: Split,
}

/// Examples in manifest order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetSplit {
    pub examples: Vec<Example>,
}

impl DatasetSplit {
    pub fn new(examples: Vec<Example>) -> Result<Self, DataError> {
        let mut seen = std::collections::HashSet::new();
        for e in &examples {
            if !seen.insert(e.id.as_str()) {
                return Err(DataError::Invalid(format!("clip {:?} listed twice", e.id)));
            }
        }
        Ok(Self { examples })
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.examples.len())
            .filter(|&i| self.examples[i].split == split)
            .collect()
    }

    pub fn sizes(&self) -> [usize; 3] {
        [Split::Train, Split::Val, Split::Test].map(|s| self.indices(s).len())
    }
}
