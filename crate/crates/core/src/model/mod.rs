//! Model configurations and the assembled networks.

mod baselines;
mod hgrl;

use crate::graph::{GatedGcn, GraphError, GraphVariant, HierarchicalGraph};
use crate::params::{Initializer, ParamError, ParamStore, Session};
use crate::tensor::{Scalar, Tape, TensorError, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("input {frames}x{n_mels} is too small for {blocks} pooling stages (need at least {need} per axis)")]
    InputTooSmall {
        frames: usize,
        n_mels: usize,
        blocks: usize,
        need: usize,
    },
    #[error("expected input (B, 1, {frames}, {n_mels}), got {got:?}")]
    InputShape {
        frames: usize,
        n_mels: usize,
        got: Vec<usize>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "fAR")]
    Far,
    #[serde(rename = "fcAR-UL")]
    FcarUl,
    #[serde(rename = "fcAR-SL")]
    FcarSl,
    #[serde(rename = "dnn")]
    Dnn,
    #[serde(rename = "cnn")]
    Cnn,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Self::Far, Self::FcarUl, Self::FcarSl, Self::Dnn, Self::Cnn];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Far => "fAR",
            Self::FcarUl => "fcAR-UL",
            Self::FcarSl => "fcAR-SL",
            Self::Dnn => "dnn",
            Self::Cnn => "cnn",
        }
    }

    /// Whether the model has coarse-event outputs.
    pub fn has_coarse(self) -> bool {
        matches!(self, Self::FcarUl | Self::FcarSl)
    }

    pub fn graph(self) -> Option<GraphVariant> {
        match self {
            Self::Far => Some(GraphVariant::Far),
            Self::FcarUl | Self::FcarSl => Some(GraphVariant::Fcar),
            Self::Dnn | Self::Cnn => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|v| v.as_str()).collect();
                format!(
                    "unknown variant {s:?}; expected one of {}",
                    names.join(", ")
                )
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Output channels of each conv block.
    pub channels: Vec<usize>,
    pub embed_dim: usize,
    pub node_dim: usize,
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            channels: vec![64, 128, 256, 512],
            embed_dim: 2048,
            node_dim: 64,
            dropout: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphConfig {
    /// Adds complete fine-fine and coarse-coarse edges.
    pub intra_level_edges: bool,
    pub layers: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            intra_level_edges: false,
            layers: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub dnn_widths: Vec<usize>,
    pub cnn_channels: Vec<usize>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            dnn_widths: vec![64, 128, 256, 512],
            cnn_channels: vec![64, 128, 256, 512],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub encoder: EncoderConfig,
    pub graph: GraphConfig,
    pub baseline: BaselineConfig,
}

impl ModelConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            encoder: EncoderConfig::default(),
            graph: GraphConfig::default(),
            baseline: BaselineConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        let e = &self.encoder;
        if e.channels.is_empty() || e.channels.contains(&0) {
            return bad("encoder.channels must be a nonempty list of positive widths");
        }
        if e.embed_dim == 0 || e.node_dim == 0 {
            return bad("encoder widths must be positive");
        }
        if !(0.0..1.0).contains(&e.dropout) {
            return bad("encoder.dropout must lie in [0, 1)");
        }
        if self.graph.layers == 0 {
            return bad("graph.layers must be at least 1");
        }
        let b = &self.baseline;
        if b.dnn_widths.is_empty()
            || b.dnn_widths.contains(&0)
            || b.cnn_channels.is_empty()
            || b.cnn_channels.contains(&0)
        {
            return bad("baseline widths must be nonempty lists of positive values");
        }
        Ok(())
    }
}

/// Spectrogram extent the model is built for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub frames: usize,
    pub n_mels: usize,
}

/// Model outputs for one batch.
#[derive(Clone, Copy, Debug)]
pub struct Predictions {
    /// `(B, 24)` probabilities.
    pub fae: Var,
    /// `(B, 7)` probabilities; fcAR variants only.
    pub cae: Option<Var>,
    /// `(B, 1)` rating, unbounded.
    pub ar: Var,
}

#[derive(Clone, Debug, PartialEq)]
enum Arch {
    Hgrl {
        graph: HierarchicalGraph,
        layers: Vec<GatedGcn>,
    },
    Dnn,
    Cnn,
}

/// Architecture plus parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T: Scalar> {
    config: ModelConfig,
    input: InputShape,
    arch: Arch,
    pub store: ParamStore<T>,
}

impl<T: Scalar> Model<T> {
    pub fn new(config: ModelConfig, input: InputShape, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Initializer {
            store: &mut store,
            rng: &mut rng,
        };
        let arch = match config.variant.graph() {
            Some(gv) => {
                hgrl::check_input(&config.encoder, input)?;
                hgrl::init(&mut init, &config.encoder, config.variant.has_coarse())?;
                let graph = HierarchicalGraph::build(gv, config.graph.intra_level_edges);
                let layers = (0..config.graph.layers)
                    .map(|l| {
                        GatedGcn::init(
                            &mut init,
                            &format!("gcn.layer{l}"),
                            &graph,
                            config.encoder.node_dim,
                        )
                    })
                    .collect::<Result<_, _>>()?;
                Arch::Hgrl { graph, layers }
            }
            None if config.variant == Variant::Dnn => {
                baselines::init_dnn(&mut init, &config.baseline, input)?;
                Arch::Dnn
            }
            None => {
                baselines::init_cnn(&mut init, &config.baseline, input)?;
                Arch::Cnn
            }
        };
        Ok(Self {
            config,
            input,
            arch,
            store,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn input(&self) -> InputShape {
        self.input
    }

    pub fn graph(&self) -> Option<&HierarchicalGraph> {
        match &self.arch {
            Arch::Hgrl { graph, .. } => Some(graph),
            _ => None,
        }
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            input: self.input,
            arch: self.arch.clone(),
            store: self.store.cast(),
        }
    }

    /// Forward pass on `x: (B, 1, frames, n_mels)`.
    ///
    /// Returns the outputs and the `(entry id, var)` binding of every
    /// parameter used. `bound`, when given, supplies one var per parameter in
    /// store order instead of fresh leaves.
    pub fn forward(
        &mut self,
        tape: &Tape<T>,
        x: Var,
        train: bool,
        dropout_seed: u64,
        bound: Option<&[Var]>,
    ) -> Result<(Predictions, Vec<(usize, Var)>), ModelError> {
        let shape = tape.shape(x);
        if shape.len() != 4
            || shape[1] != 1
            || shape[2] != self.input.frames
            || shape[3] != self.input.n_mels
        {
            return Err(ModelError::InputShape {
                frames: self.input.frames,
                n_mels: self.input.n_mels,
                got: shape,
            });
        }
        let mut sess = Session::new(
            &mut self.store,
            tape,
            train,
            ChaCha8Rng::seed_from_u64(dropout_seed),
        );
        if let Some(vars) = bound {
            sess = sess.with_bound(vars);
        }
        let preds = match &self.arch {
            Arch::Hgrl { graph, layers } => {
                hgrl::forward(&mut sess, &self.config, graph, layers, x)?
            }
            Arch::Dnn => baselines::forward_dnn(&mut sess, &self.config.baseline, x)?,
            Arch::Cnn => baselines::forward_cnn(&mut sess, &self.config.baseline, x)?,
        };
        let b = sess.bindings();
        Ok((preds, b))
    }

    /// Human-readable architecture and parameter listing.
    pub fn describe(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "variant: {}", self.config.variant);
        let _ = writeln!(
            s,
            "input: (B, 1, {}, {})",
            self.input.frames, self.input.n_mels
        );
        if let Some(g) = self.graph() {
            let _ = writeln!(s, "graph: {} nodes, {} edges", g.n_nodes(), g.edges().len());
        }
        for e in self.store.entries() {
            let kind = match e.kind {
                crate::params::EntryKind::Param => "param",
                crate::params::EntryKind::Buffer => "buffer",
            };
            let _ = writeln!(s, "  {:<40} {:<7} {:?}", e.name, kind, e.value.shape());
        }
        let _ = writeln!(s, "trainable parameters: {}", self.store.num_params());
        s
    }
}
