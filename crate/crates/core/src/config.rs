//! TOML run configuration.

use crate::data::SynthConfig;
use crate::dsp::FeatureConfig;
use crate::model::{BaselineConfig, EncoderConfig, GraphConfig, ModelConfig, Variant};
use crate::train::TrainConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Where clips come from: a manifest with its audio directory, or a
/// generated synthetic set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub manifest: Option<PathBuf>,
    pub audio_dir: Option<PathBuf>,
    pub synth: Option<SynthConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub out_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            out_dir: "runs/default".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub variant: Variant,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub graph: GraphConfig,
    #[serde(default)]
    pub baseline: BaselineConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            seed: 0,
            features: FeatureConfig::default(),
            encoder: EncoderConfig::default(),
            graph: GraphConfig::default(),
            baseline: BaselineConfig::default(),
            train: TrainConfig::default(),
            data: DataConfig {
                synth: Some(SynthConfig::default()),
                ..Default::default()
            },
            paths: PathsConfig::default(),
        }
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            msg: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            variant: self.variant,
            encoder: self.encoder.clone(),
            graph: self.graph.clone(),
            baseline: self.baseline.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.features.validate().map_err(|e| bad(&e))?;
        self.model().validate().map_err(|e| bad(&e))?;
        self.train.validate().map_err(|e| bad(&e))?;
        let d = &self.data;
        match (&d.manifest, &d.audio_dir, &d.synth) {
            (Some(_), Some(_), None) => {}
            (None, None, Some(s)) => {
                s.validate().map_err(|e| bad(&e))?;
                if s.sample_rate != self.features.sample_rate {
                    log::info!(
                        "synthetic audio at {} Hz is resampled to {} Hz",
                        s.sample_rate,
                        self.features.sample_rate
                    );
                }
            }
            _ => {
                return Err(ConfigError::Invalid(
                    "[data] needs either manifest and audio_dir, or a [data.synth] table".into(),
                ))
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_and_full_round_trip() {
        let c = RunConfig::from_toml(
            "variant = \"fAR\"\n[data.synth]\nn_clips = 16\n",
            Path::new("x"),
        )
        .unwrap();
        assert_eq!(c.variant, Variant::Far);
        assert_eq!(c.train.epochs, 100);
        assert_eq!(c.data.synth.as_ref().unwrap().n_clips, 16);
        c.validate().unwrap();
        let back = RunConfig::from_toml(&c.to_toml(), Path::new("x")).unwrap();
        assert_eq!(back, c);
        let full = RunConfig::new(Variant::FcarSl);
        assert_eq!(
            RunConfig::from_toml(&full.to_toml(), Path::new("x")).unwrap(),
            full
        );
    }

    #[test]
    fn unknown_keys_are_named() {
        for (text, key) in [
            ("variant = \"fAR\"\nbogus = 1\n", "bogus"),
            (
                "variant = \"fAR\"\n[train]\nlearning_rate = 0.1\n",
                "learning_rate",
            ),
            ("variant = \"fAR\"\n[features]\nhop = 3\n", "hop"),
        ] {
            let e = RunConfig::from_toml(text, Path::new("run.toml"))
                .unwrap_err()
                .to_string();
            assert!(e.contains(key), "{e}");
        }
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::new(Variant::Far);
        c.validate().unwrap();
        c.data.manifest = Some("m.csv".into());
        assert!(c.validate().is_err());
        c.data.synth = None;
        assert!(c.validate().is_err());
        c.data.audio_dir = Some("audio".into());
        c.validate().unwrap();
        c.train.batch_size = 0;
        assert!(c.validate().is_err());
        assert!(RunConfig::from_toml("variant = \"gcn\"\n", Path::new("x")).is_err());
    }
}
