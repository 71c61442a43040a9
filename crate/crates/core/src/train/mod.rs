//! Losses, optimization, the training loop, and evaluation.

mod adam;
mod losses;
mod metrics;
mod pcc;

pub use adam::{Adam, AdamConfig};
pub use losses::{bce, mse, total_loss, LossBreakdown, LossError, Objective, Targets, P_CLAMP};
pub use metrics::{
    auc, classification_metrics, regression_metrics, ClassificationMetrics, RegressionMetrics,
};
pub use pcc::pcc_matrix;

use crate::data::{batch_indices, Batch, Corpus, Split};
use crate::model::{Model, ModelError};
use crate::params::ParamStore;
use crate::taxonomy::{N_COARSE, N_FINE};
use crate::tensor::{Tape, TensorError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {loss:?}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        loss: LossBreakdown,
    },
    #[error("{0}")]
    Invalid(String),
}

pub const THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub objective: Objective,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            lr: 1e-3,
            objective: Objective::Joint,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Invalid(
                "train.batch_size must be positive".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Invalid(
                "train.lr must be a positive number".into(),
            ));
        }
        Ok(())
    }
}

/// Mixes a run seed with loop counters into an independent stream seed.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z =
        seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub fae: ClassificationMetrics,
    pub cae: Option<ClassificationMetrics>,
    pub ar: RegressionMetrics,
}

/// Model outputs over a set of clips, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Outputs {
    pub fae: Vec<f64>,
    pub cae: Option<Vec<f64>>,
    pub ar: Vec<f64>,
    pub rows: usize,
}

impl Outputs {
    /// `rows x 32` (or 25 without coarse outputs) in fine, coarse, rating order.
    pub fn stacked(&self) -> (Vec<f64>, usize) {
        let k = N_FINE + self.cae.as_ref().map_or(0, |_| N_COARSE) + 1;
        let mut out = Vec::with_capacity(self.rows * k);
        for r in 0..self.rows {
            out.extend_from_slice(&self.fae[r * N_FINE..(r + 1) * N_FINE]);
            if let Some(c) = &self.cae {
                out.extend_from_slice(&c[r * N_COARSE..(r + 1) * N_COARSE]);
            }
            out.push(self.ar[r]);
        }
        (out, k)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: LossBreakdown,
    pub metrics: MetricsReport,
    pub outputs: Outputs,
}

fn targets(tape: &Tape<f32>, b: &Batch) -> Targets {
    Targets {
        fae: tape.constant(b.fae.clone()),
        cae: tape.constant(b.cae.clone()),
        ar: tape.constant(b.ar.clone()),
    }
}

/// Eval-mode pass over `idx`.
pub fn evaluate(
    model: &mut Model<f32>,
    corpus: &Corpus,
    idx: &[usize],
    batch_size: usize,
    objective: Objective,
) -> Result<Evaluation, TrainError> {
    if idx.is_empty() {
        return Err(TrainError::Invalid("cannot evaluate an empty split".into()));
    }
    let variant = model.variant();
    let mut out = Outputs {
        fae: Vec::new(),
        cae: variant.has_coarse().then(Vec::new),
        ar: Vec::new(),
        rows: 0,
    };
    let (mut s_fae, mut s_cae, mut s_ar) = (0.0, 0.0, 0.0);
    for chunk in batch_indices(idx, batch_size, None) {
        let b = corpus.batch(&chunk);
        let tape = Tape::new();
        let x = tape.constant(b.x.clone());
        let (preds, _) = model.forward(&tape, x, false, 0, None)?;
        let (_, parts) = total_loss(&tape, variant, objective, &preds, &targets(&tape, &b))?;
        let w = chunk.len() as f64;
        s_fae += w * parts.fae;
        s_cae += w * parts.cae.unwrap_or(0.0);
        s_ar += w * parts.ar;
        let read = |v| {
            tape.value(v)
                .data()
                .iter()
                .map(|&x: &f32| f64::from(x))
                .collect::<Vec<_>>()
        };
        out.fae.extend(read(preds.fae));
        if let (Some(c), Some(dst)) = (preds.cae, out.cae.as_mut()) {
            dst.extend(read(c));
        }
        out.ar.extend(read(preds.ar));
        out.rows += chunk.len();
    }
    let m = out.rows as f64;
    let cae_loss = variant.has_coarse().then_some(s_cae / m);
    let loss = LossBreakdown {
        fae: s_fae / m,
        cae: cae_loss,
        ar: s_ar / m,
        total: LossBreakdown::compose(variant, objective, s_fae / m, cae_loss, s_ar / m),
    };
    let labels = &corpus.data.examples;
    let y_fae: Vec<bool> = idx.iter().flat_map(|&i| labels[i].labels.fae).collect();
    let y_ar: Vec<f64> = idx.iter().map(|&i| labels[i].labels.ar).collect();
    let metrics = MetricsReport {
        fae: classification_metrics(&out.fae, &y_fae, N_FINE, THRESHOLD),
        cae: out.cae.as_ref().map(|c| {
            let y: Vec<bool> = idx.iter().flat_map(|&i| labels[i].labels.cae()).collect();
            classification_metrics(c, &y, N_COARSE, THRESHOLD)
        }),
        ar: regression_metrics(&out.ar, &y_ar),
    };
    Ok(Evaluation {
        loss,
        metrics,
        outputs: out,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub split: Split,
    pub loss: LossBreakdown,
    pub metrics: MetricsReport,
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Clip-weighted mean of the training batch losses.
    pub train: LossBreakdown,
    pub batch_totals: Vec<f64>,
    /// Split used for model selection and its scores.
    pub selection: SplitSummary,
    pub best: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// 0 when no epoch ran.
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

/// Trains `model` on the corpus's train split, leaving the best parameters in
/// `model.store`.
///
/// Selection uses the validation split's total loss, or the train split's
/// eval-mode total when there is no validation data.
pub fn train(
    model: &mut Model<f32>,
    corpus: &Corpus,
    cfg: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let variant = model.variant();
    let train_idx = corpus.indices(Split::Train);
    if train_idx.is_empty() {
        return Err(TrainError::Invalid("train split is empty".into()));
    }
    let val_idx = corpus.indices(Split::Val);
    let (sel_split, sel_idx) = if val_idx.is_empty() {
        log::info!("no validation clips; selecting on the train split");
        (Split::Train, train_idx.clone())
    } else {
        (Split::Val, val_idx)
    };
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut adam = Adam::new(adam_cfg, &model.store);
    let mut best: Option<(f64, usize, ParamStore<f32>)> = None;
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let batches = batch_indices(
            &train_idx,
            cfg.batch_size,
            Some(derive_seed(seed, epoch as u64, 0)),
        );
        let (mut s_fae, mut s_cae, mut s_ar) = (0.0, 0.0, 0.0);
        let mut batch_totals = Vec::with_capacity(batches.len());
        for (bi, chunk) in batches.iter().enumerate() {
            let b = corpus.batch(chunk);
            let tape = Tape::new();
            let x = tape.constant(b.x.clone());
            let dropout_seed = derive_seed(seed, epoch as u64, bi as u64 + 1);
            let (preds, bound) = model.forward(&tape, x, true, dropout_seed, None)?;
            let (total, parts) =
                total_loss(&tape, variant, cfg.objective, &preds, &targets(&tape, &b))?;
            if !parts.total.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: bi + 1,
                    loss: parts,
                });
            }
            let grads = tape.backward(total)?;
            let pairs: Vec<_> = bound
                .into_iter()
                .filter_map(|(id, v)| grads.get(v).map(|g| (id, g.clone())))
                .collect();
            adam.step(&mut model.store, &pairs);
            let w = chunk.len() as f64;
            s_fae += w * parts.fae;
            s_cae += w * parts.cae.unwrap_or(0.0);
            s_ar += w * parts.ar;
            batch_totals.push(parts.total);
        }
        let m = train_idx.len() as f64;
        let cae = variant.has_coarse().then_some(s_cae / m);
        let train = LossBreakdown {
            fae: s_fae / m,
            cae,
            ar: s_ar / m,
            total: LossBreakdown::compose(variant, cfg.objective, s_fae / m, cae, s_ar / m),
        };
        let ev = evaluate(model, corpus, &sel_idx, cfg.batch_size, cfg.objective)?;
        let improved = best.as_ref().is_none_or(|(l, _, _)| ev.loss.total < *l);
        if improved {
            best = Some((ev.loss.total, epoch, model.store.clone()));
        }
        let entry = EpochLog {
            epoch,
            train,
            batch_totals,
            selection: SplitSummary {
                split: sel_split,
                loss: ev.loss,
                metrics: ev.metrics,
            },
            best: improved,
        };
        on_epoch(&entry);
        log.push(entry);
    }
    let best_epoch = match best {
        Some((_, e, store)) => {
            model.store = store;
            e
        }
        None => 0,
    };
    Ok(TrainOutcome { best_epoch, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, SynthConfig};
    use crate::dsp::FeatureConfig;
    use crate::model::{EncoderConfig, ModelConfig, Variant};

    fn tiny_corpus() -> Corpus {
        let cfg = SynthConfig {
            n_clips: 12,
            duration_secs: 0.6,
            val_fraction: 0.25,
            test_fraction: 0.0,
            ..Default::default()
        };
        let (data, clips) = synth_dataset(&cfg).unwrap();
        Corpus::from_clips(data, &clips, &FeatureConfig::default()).unwrap()
    }

    fn tiny_model(corpus: &Corpus, variant: Variant) -> Model<f32> {
        let mut c = ModelConfig::new(variant);
        c.encoder = EncoderConfig {
            channels: vec![4, 4, 4, 4],
            embed_dim: 16,
            node_dim: 8,
            dropout: 0.2,
        };
        Model::new(c, corpus.input(), 1).unwrap()
    }

    #[test]
    fn zero_epochs_keep_initialization() {
        let corpus = tiny_corpus();
        let mut m = tiny_model(&corpus, Variant::FcarSl);
        let init = m.clone();
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let out = train(&mut m, &corpus, &cfg, 0, |_| {}).unwrap();
        assert_eq!(out.best_epoch, 0);
        assert_eq!(m, init);
    }

    #[test]
    fn training_is_deterministic_and_logged() {
        let corpus = tiny_corpus();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            ..Default::default()
        };
        let run = || {
            let mut m = tiny_model(&corpus, Variant::FcarSl);
            let mut lines = Vec::new();
            train(&mut m, &corpus, &cfg, 5, |e| {
                lines.push(serde_json::to_string(e).unwrap())
            })
            .unwrap();
            (m, lines)
        };
        let (a, la) = run();
        let (b, lb) = run();
        assert_eq!(la, lb);
        assert_eq!(a, b);
        assert_eq!(la.len(), 2);
        let first: EpochLog = serde_json::from_str(&la[0]).unwrap();
        assert_eq!(first.batch_totals.len(), 3);
        assert_eq!(first.selection.split, Split::Val);
        assert!(first.selection.metrics.cae.is_some());
    }

    #[test]
    fn stacked_outputs_order() {
        let o = Outputs {
            fae: (0..24).map(f64::from).collect(),
            cae: Some((24..31).map(f64::from).collect()),
            ar: vec![31.0],
            rows: 1,
        };
        let (s, k) = o.stacked();
        assert_eq!(k, 32);
        assert_eq!(s, (0..32).map(f64::from).collect::<Vec<_>>());
    }
}
