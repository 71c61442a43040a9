//! The `hgrl` command line.

use crate::config::{ConfigError, RunConfig};
use crate::data::{read_manifest, synth_dataset, write_synth, Corpus, Split, SynthConfig};
use crate::dsp::{featurize, load_wav, AudioClip, FeatureConfig};
use crate::gradcheck;
use crate::model::{InputShape, Model, Variant};
use crate::report::{heatmap_svg, metrics_table, pcc_csv, EvalReport};
use crate::taxonomy::{output_labels, N_COARSE, N_FINE};
use crate::train::{evaluate, pcc_matrix, train};
use crate::weights::{self, WeightsError, CONV_PREFIX};
use clap::{Args, Parser, Subcommand};
use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Writes to stdout, ignoring errors such as a closed pipe.
macro_rules! say {
    ($($t:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($t)*);
    }};
}

macro_rules! say_raw {
    ($($t:tt)*) => {{
        let _ = write!(std::io::stdout().lock(), $($t)*);
    }};
}

pub const WEIGHTS_FILE: &str = "model.hgw";
pub const LOG_FILE: &str = "log.jsonl";
pub const SNAPSHOT_FILE: &str = "config.snapshot";

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, configuration or inputs; exit code 2.
    Usage(String),
    /// Failure while doing the work; exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Runtime(_) => 1,
        }
    }
}

impl Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(m) | Self::Runtime(m) => f.write_str(m),
        }
    }
}

fn usage(e: impl Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl Display) -> CliError {
    CliError::Runtime(e.to_string())
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        usage(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "hgrl",
    version,
    about = "Joint audio event classification and annoyance rating with hierarchical graphs"
)]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model from a run config.
    Train(TrainArgs),
    /// Score a checkpoint on one split.
    Evaluate(EvalArgs),
    /// Output correlation matrix and heatmap for a checkpoint.
    Analyze(AnalyzeArgs),
    /// Finite-difference check of every differentiable op and the full model.
    Gradcheck(GradcheckArgs),
    /// Write a synthetic dataset (audio and manifest).
    SynthData(SynthArgs),
    /// Write a model's weights, freshly initialized or from a checkpoint.
    ExportWeights(ExportArgs),
    /// Load a weight file into a model built from a config and save it.
    ImportWeights(ImportArgs),
    /// Print a model's architecture.
    Describe(DescribeArgs),
}

#[derive(Args, Debug, Default)]
pub struct FeatureFlags {
    #[arg(long)]
    pub sample_rate: Option<u32>,
    #[arg(long)]
    pub window_ms: Option<f64>,
    #[arg(long)]
    pub overlap: Option<f64>,
    #[arg(long)]
    pub n_mels: Option<usize>,
}

impl FeatureFlags {
    fn apply(&self, f: &mut FeatureConfig) {
        if let Some(v) = self.sample_rate {
            f.sample_rate = v;
        }
        if let Some(v) = self.window_ms {
            f.window_ms = v;
        }
        if let Some(v) = self.overlap {
            f.overlap = v;
        }
        if let Some(v) = self.n_mels {
            f.n_mels = v;
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Output directory (defaults to `paths.out_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Weight file to start from instead of random initialization.
    #[arg(long)]
    pub init_weights: Option<PathBuf>,
    /// With --init-weights, load only conv-block entries.
    #[arg(long, requires = "init_weights")]
    pub allow_partial: bool,
    #[command(flatten)]
    pub features: FeatureFlags,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Run config; defaults to the snapshot next to the checkpoint.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// JSON report path (defaults to `metrics_<split>.json` next to the checkpoint).
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Directory for pcc.csv and heatmap.svg (defaults to the checkpoint's).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Accept models without coarse outputs and emit a 25 x 25 matrix.
    #[arg(long)]
    pub allow_far: bool,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, hide = true)]
    pub with_faulty_fixture: bool,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n_clips: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub duration: Option<f64>,
    /// Sample rate of the written audio.
    #[arg(long)]
    pub sample_rate: Option<u32>,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Checkpoint to re-export; without it the config's initialization is written.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Write only conv-block entries.
    #[arg(long)]
    pub conv_only: bool,
}

#[derive(Args, Debug)]
pub struct ImportArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Load only conv-block entries, keeping the rest at initialization.
    #[arg(long)]
    pub allow_partial: bool,
}

#[derive(Args, Debug)]
pub struct DescribeArgs {
    #[arg(long, conflicts_with = "variant")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Print the node/edge list as JSON instead.
    #[arg(long)]
    pub dump_graph: bool,
    #[command(flatten)]
    pub features: FeatureFlags,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .try_init();
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::SynthData(a) => cmd_synth(a),
        Command::ExportWeights(a) => cmd_export(a),
        Command::ImportWeights(a) => cmd_import(a),
        Command::Describe(a) => cmd_describe(a),
    }
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let cfg = RunConfig::load(path)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    let d = &cfg.data;
    match (&d.manifest, &d.audio_dir, &d.synth) {
        (Some(m), Some(a), _) => Corpus::load(m, a, &cfg.features).map_err(usage),
        (_, _, Some(s)) => {
            let (data, clips) = synth_dataset(s).map_err(usage)?;
            Corpus::from_clips(data, &clips, &cfg.features).map_err(usage)
        }
        _ => Err(usage("config has no data source")),
    }
}

/// Model input shape implied by the config's data, without loading all of it.
pub fn input_shape(cfg: &RunConfig) -> Result<InputShape> {
    let clip = match (&cfg.data.manifest, &cfg.data.audio_dir, &cfg.data.synth) {
        (Some(m), Some(a), _) => {
            let data = read_manifest(m).map_err(usage)?;
            let first = data
                .examples
                .first()
                .ok_or_else(|| usage("manifest lists no clips"))?;
            load_wav(&a.join(&first.id)).map_err(usage)?
        }
        (_, _, Some(s)) => {
            let n = (s.duration_secs * f64::from(s.sample_rate)).round() as usize;
            AudioClip::mono(vec![0.0; n], s.sample_rate).map_err(usage)?
        }
        _ => return Err(usage("config has no data source")),
    };
    let spec = featurize(&clip, &cfg.features).map_err(usage)?;
    Ok(InputShape {
        frames: spec.frames(),
        n_mels: spec.n_mels(),
    })
}

fn build_model(cfg: &RunConfig, input: InputShape) -> Result<Model<f32>> {
    Model::new(cfg.model(), input, cfg.seed).map_err(usage)
}

fn load_weights_into(
    model: &mut Model<f32>,
    path: &Path,
    allow_partial: bool,
) -> Result<weights::ImportSummary> {
    let entries = weights::read_file(path).map_err(|e| match e {
        WeightsError::Io { .. } => usage(e),
        other => runtime(other),
    })?;
    weights::import_into(&mut model.store, entries, allow_partial).map_err(|e| match e {
        WeightsError::Shape { .. } | WeightsError::Missing(_) | WeightsError::Unexpected(_) => {
            usage(format!("checkpoint/config mismatch: {e}"))
        }
        other => usage(other),
    })
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn checkpoint_dir(checkpoint: &Path) -> PathBuf {
    checkpoint
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

/// Config for a checkpoint: the given one, checked against the snapshot next
/// to the checkpoint when both exist, or the snapshot alone.
fn checkpoint_config(checkpoint: &Path, config: Option<&Path>) -> Result<RunConfig> {
    if !checkpoint.exists() {
        return Err(usage(format!(
            "{}: checkpoint not found",
            checkpoint.display()
        )));
    }
    let snapshot = checkpoint_dir(checkpoint).join(SNAPSHOT_FILE);
    let snap = snapshot
        .exists()
        .then(|| load_config(&snapshot))
        .transpose()?;
    match (config, snap) {
        (Some(path), snap) => {
            let cfg = load_config(path)?;
            if let Some(s) = snap {
                if s.variant != cfg.variant {
                    return Err(usage(format!(
                        "checkpoint/config mismatch: checkpoint was trained as {}, config says {}",
                        s.variant, cfg.variant
                    )));
                }
            }
            Ok(cfg)
        }
        (None, Some(s)) => Ok(s),
        (None, None) => Err(usage(format!(
            "no {SNAPSHOT_FILE} next to {}; pass --config",
            checkpoint.display()
        ))),
    }
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(v) = a.variant {
        cfg.variant = v;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(o) = &a.out {
        cfg.paths.out_dir = o.clone();
    }
    a.features.apply(&mut cfg.features);
    cfg.validate()?;

    let corpus = load_corpus(&cfg)?;
    let mut model = build_model(&cfg, corpus.input())?;
    if let Some(w) = &a.init_weights {
        let s = load_weights_into(&mut model, w, a.allow_partial)?;
        log::info!(
            "initialized {} entries from {}",
            s.loaded.len(),
            w.display()
        );
    }
    let [n_train, n_val, n_test] = corpus.data.sizes();
    log::info!(
        "{} clips: {n_train} train, {n_val} val, {n_test} test",
        corpus.len()
    );

    let out = cfg.paths.out_dir.clone();
    create_dir(&out)?;
    write(&out.join(SNAPSHOT_FILE), cfg.to_toml())?;
    let log_path = out.join(LOG_FILE);
    let mut log_file = std::io::BufWriter::new(
        std::fs::File::create(&log_path)
            .map_err(|e| runtime(format!("{}: {e}", log_path.display())))?,
    );
    let mut io_err = None;
    let outcome = train(&mut model, &corpus, &cfg.train, cfg.seed, |e| {
        log::info!(
            "epoch {:>4}  train {:.5}  {} {:.5}{}",
            e.epoch,
            e.train.total,
            e.selection.split,
            e.selection.loss.total,
            if e.best { "  *" } else { "" }
        );
        let line = serde_json::to_string(e).expect("log entries serialize");
        if let Err(err) = writeln!(log_file, "{line}") {
            io_err.get_or_insert(err);
        }
    })
    .map_err(runtime)?;
    if let Some(e) = io_err {
        return Err(runtime(format!("{}: {e}", log_path.display())));
    }
    log_file
        .flush()
        .map_err(|e| runtime(format!("{}: {e}", log_path.display())))?;
    write(&out.join(WEIGHTS_FILE), weights::encode_store(&model.store))?;
    say!(
        "trained {} for {} epochs; best epoch {}; wrote {}",
        cfg.variant,
        cfg.train.epochs,
        outcome.best_epoch,
        out.display()
    );
    Ok(())
}

/// Builds the model for a checkpoint and the corpus it is scored on.
fn restore(checkpoint: &Path, config: Option<&Path>) -> Result<(RunConfig, Model<f32>, Corpus)> {
    let cfg = checkpoint_config(checkpoint, config)?;
    let corpus = load_corpus(&cfg)?;
    let mut model = build_model(&cfg, corpus.input())?;
    load_weights_into(&mut model, checkpoint, false)?;
    Ok((cfg, model, corpus))
}

fn split_indices(corpus: &Corpus, split: Split) -> Result<Vec<usize>> {
    let idx = corpus.indices(split);
    if idx.is_empty() {
        return Err(usage(format!("the {split} split has no clips")));
    }
    Ok(idx)
}

fn cmd_evaluate(a: EvalArgs) -> Result<()> {
    let (cfg, mut model, corpus) = restore(&a.checkpoint, a.config.as_deref())?;
    let idx = split_indices(&corpus, a.split)?;
    let ev = evaluate(
        &mut model,
        &corpus,
        &idx,
        cfg.train.batch_size,
        cfg.train.objective,
    )
    .map_err(runtime)?;
    let report = EvalReport {
        variant: cfg.variant,
        split: a.split,
        n_clips: idx.len(),
        loss: ev.loss,
        metrics: ev.metrics,
    };
    let json_path = a
        .json
        .unwrap_or_else(|| checkpoint_dir(&a.checkpoint).join(format!("metrics_{}.json", a.split)));
    write(
        &json_path,
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
    )?;
    say_raw!("{}", metrics_table(cfg.variant, &report.metrics));
    say!(
        "\n{} clips from the {} split; report written to {}",
        idx.len(),
        a.split,
        json_path.display()
    );
    Ok(())
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<()> {
    let cfg = checkpoint_config(&a.checkpoint, a.config.as_deref())?;
    if !cfg.variant.has_coarse() && !a.allow_far {
        return Err(usage("analysis requires cAE nodes"));
    }
    let (_, mut model, corpus) = restore(&a.checkpoint, a.config.as_deref())?;
    let idx = split_indices(&corpus, a.split)?;
    if idx.len() < 3 {
        return Err(usage(format!(
            "analysis needs at least 3 clips, the {} split has {}",
            a.split,
            idx.len()
        )));
    }
    let ev = evaluate(
        &mut model,
        &corpus,
        &idx,
        cfg.train.batch_size,
        cfg.train.objective,
    )
    .map_err(runtime)?;
    let (data, k) = ev.outputs.stacked();
    let labels: Vec<String> = if k == N_FINE + N_COARSE + 1 {
        output_labels()
    } else {
        let all = output_labels();
        all[..N_FINE].iter().chain(all.last()).cloned().collect()
    };
    let (matrix, constant) = pcc_matrix(&data, k);
    if !constant.is_empty() {
        let names: Vec<&str> = constant.iter().map(|&c| labels[c].as_str()).collect();
        log::warn!(
            "constant outputs recorded as 0 correlation: {}",
            names.join(", ")
        );
    }
    let out = a.out.unwrap_or_else(|| checkpoint_dir(&a.checkpoint));
    create_dir(&out)?;
    write(&out.join("pcc.csv"), pcc_csv(&labels, &matrix))?;
    write(&out.join("heatmap.svg"), heatmap_svg(&labels, &matrix))?;
    say!(
        "{k} x {k} correlation matrix over {} clips written to {}",
        idx.len(),
        out.display()
    );
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<()> {
    let start = std::time::Instant::now();
    let results = gradcheck::run(a.with_faulty_fixture).map_err(runtime)?;
    say!(
        "{:<18} {:>13} {:>10} {:>8}  status",
        "op",
        "max rel err",
        "tolerance",
        "coords"
    );
    for r in &results {
        say!(
            "{:<18} {:>13.3e} {:>10.0e} {:>8}  {}",
            r.name,
            r.max_rel_error,
            r.tolerance,
            r.coordinates,
            if r.passed() { "PASS" } else { "FAIL" }
        );
    }
    let failed: Vec<&str> = results
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.name)
        .collect();
    say!(
        "{} ops in {:.2}s",
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(runtime(format!(
            "gradient check failed for: {}",
            failed.join(", ")
        )))
    }
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut cfg = SynthConfig::default();
    if let Some(n) = a.n_clips {
        cfg.n_clips = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(d) = a.duration {
        cfg.duration_secs = d;
    }
    if let Some(r) = a.sample_rate {
        cfg.sample_rate = r;
    }
    cfg.validate().map_err(usage)?;
    let data = write_synth(&a.out, &cfg).map_err(runtime)?;
    let [tr, va, te] = data.sizes();
    say!(
        "wrote {} clips ({tr} train, {va} val, {te} test) to {}",
        data.examples.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_export(a: ExportArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let mut model = build_model(&cfg, input_shape(&cfg)?)?;
    if let Some(c) = &a.checkpoint {
        load_weights_into(&mut model, c, false)?;
    }
    let entries = model
        .store
        .entries()
        .iter()
        .filter(|e| !a.conv_only || e.name.starts_with(CONV_PREFIX))
        .map(|e| (e.name.as_str(), &e.value));
    let bytes = weights::encode(entries);
    write(&a.out, &bytes)?;
    say!("wrote {} bytes to {}", bytes.len(), a.out.display());
    Ok(())
}

fn cmd_import(a: ImportArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let mut model = build_model(&cfg, input_shape(&cfg)?)?;
    let s = load_weights_into(&mut model, &a.weights, a.allow_partial)?;
    write(&a.out, weights::encode_store(&model.store))?;
    say!(
        "loaded {} entries ({} skipped); wrote {}",
        s.loaded.len(),
        s.skipped.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_describe(a: DescribeArgs) -> Result<()> {
    let mut cfg = match (&a.config, a.variant) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Some(v)) => RunConfig::new(v),
        (None, None) => return Err(usage("describe needs --config or --variant")),
    };
    a.features.apply(&mut cfg.features);
    cfg.validate()?;
    let model = build_model(&cfg, input_shape(&cfg)?)?;
    if a.dump_graph {
        let g = model
            .graph()
            .ok_or_else(|| usage(format!("{} has no graph", cfg.variant)))?;
        say!(
            "{}",
            serde_json::to_string_pretty(g).expect("graph serializes")
        );
    } else {
        say_raw!("{}", model.describe());
    }
    Ok(())
}
