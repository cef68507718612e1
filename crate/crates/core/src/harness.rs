//! Experiment configuration and the command surface behind the `semlink`
//! binary.
//!
//! Every command reads one TOML file. Relative paths in it resolve against
//! the directory holding the file. Exit codes: 0 success, 2 usage or
//! configuration problems (including missing inputs and bad checkpoints),
//! 3 failures while running.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::chancodec::ChanCodecConfig;
use crate::channel::{ChannelKind, SnrDb};
use crate::error::{Error, Result};
use crate::fuzzyctl::{FuzzyParams, TuneOptions};
use crate::kb::{Background, IdentityKb, KbBackend, LlmClientConfig, LlmKb, MockKb};
use crate::metrics::{compression_ratio, fit_classifier, snr_sweep, SweepResult};
use crate::pipeline::{pass_channel, receive, transmit, trial_seed, tune_fuzzy, CodecModel, Link, PublicKbRecord, Stack};
use crate::rng::derive_seed;
use crate::semcodec::SemCodecConfig;
use crate::textcore::{build_vocab, load_corpus, Corpus};
use crate::trainer::{loss_csv, save_checkpoint, load_checkpoint, train_joint, Augment, Checkpoint, TrainConfig, TrainState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// The demo configuration shipped with the crate.
pub const DEMO_CONFIG: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/demo.toml");

// ---------------------------------------------------------------------------
// configuration

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed. Every other seed is derived from it.
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub paths: Paths,
    #[serde(default)]
    pub codec: CodecDims,
    /// `train.seed` is overwritten by the master seed.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub schedule: Schedule,
    /// Initial controller parameters; the defaults when absent.
    #[serde(default)]
    pub fuzzy: Option<FuzzyParams>,
    #[serde(default)]
    pub tune: TuneOptions,
    #[serde(default)]
    pub kb: KbSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub toggles: Toggles,
    #[serde(default)]
    pub public_kb: Option<PublicKbRecord>,
    #[serde(default)]
    pub background: Option<Background>,
}

fn default_seed() -> u64 {
    7
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/model.ckpt`.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodecDims {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub max_len: usize,
    pub chan_hidden: usize,
    pub chan_k: usize,
    pub min_count: usize,
}

impl Default for CodecDims {
    fn default() -> Self {
        CodecDims { d_model: 48, n_layers: 2, n_heads: 4, max_len: 32, chan_hidden: 32, chan_k: 16, min_count: 1 }
    }
}

impl CodecDims {
    pub fn sem(&self, vocab_size: usize) -> SemCodecConfig {
        SemCodecConfig {
            vocab_size,
            d_model: self.d_model,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            max_len: self.max_len,
        }
    }

    pub fn chan(&self) -> ChanCodecConfig {
        ChanCodecConfig { d_model: self.d_model, hidden: self.chan_hidden, k: self.chan_k }
    }
}

/// Alternation between codec training and fuzzy tuning, and the baseline.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Schedule {
    /// Rounds of (tune fuzzy, resume training) after the first training run.
    pub alternations: usize,
    pub resume_epochs: usize,
    /// SNRs the fuzzy objective averages over during alternations.
    pub tune_snr_db: Vec<f64>,
    /// Fixed training SNR of the separate-coding baseline.
    pub baseline_snr_db: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule { alternations: 1, resume_epochs: 10, tune_snr_db: vec![-5.0, 0.0, 5.0, 10.0], baseline_snr_db: 20.0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Llm,
    Identity,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KbSection {
    pub backend: BackendKind,
    pub llm: LlmClientConfig,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub channel: ChannelKind,
    pub snr_db: Vec<f64>,
    pub seeds: Vec<u64>,
    pub classifier_smoothing: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            channel: ChannelKind::Awgn,
            snr_db: vec![-5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            seeds: vec![1, 2, 3, 4, 5],
            classifier_smoothing: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Toggles {
    /// Print the stage trace from `transmit`.
    pub tracing: bool,
    /// Give the LLM backend a response cache in the output directory when
    /// none is configured.
    pub caching: bool,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn resolve(&mut self, base: &Path) {
        let abs = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
        self.paths.corpus = abs(&self.paths.corpus);
        self.paths.output_dir = abs(&self.paths.output_dir);
        self.paths.checkpoint = Some(match &self.paths.checkpoint {
            Some(p) => abs(p),
            None => self.paths.output_dir.join("model.ckpt"),
        });
        if let Some(p) = &self.kb.llm.cache_path {
            self.kb.llm.cache_path = Some(abs(p));
        } else if self.toggles.caching {
            self.kb.llm.cache_path = Some(self.paths.output_dir.join("kb_cache.jsonl"));
        }
        if let Some(p) = &self.kb.llm.audit_log {
            self.kb.llm.audit_log = Some(abs(p));
        }
        if let Some(rec) = &mut self.public_kb {
            rec.face_image_path = abs(&rec.face_image_path);
        }
        self.train.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.codec.sem(4).validate()?;
        self.codec.chan().validate()?;
        if self.codec.chan_k % 2 != 0 {
            return Err(Error::Config("codec: chan_k must be even".into()));
        }
        if let Some(f) = &self.fuzzy {
            f.validate().map_err(|e| Error::Config(format!("fuzzy: {e}")))?;
        }
        if self.sweep.snr_db.is_empty() || self.sweep.seeds.is_empty() {
            return Err(Error::Config("sweep: snr_db and seeds must be non-empty".into()));
        }
        if self.sweep.snr_db.iter().chain(&self.schedule.tune_snr_db).any(|s| !s.is_finite()) {
            return Err(Error::Config("SNR lists must be finite".into()));
        }
        if self.schedule.alternations > 0 && self.schedule.tune_snr_db.is_empty() {
            return Err(Error::Config("schedule: tune_snr_db must be non-empty when alternating".into()));
        }
        if !self.schedule.baseline_snr_db.is_finite() {
            return Err(Error::Config("schedule: baseline_snr_db must be finite".into()));
        }
        if !(self.sweep.classifier_smoothing > 0.0) {
            return Err(Error::Config("sweep: classifier_smoothing must be positive".into()));
        }
        if self.tune.q_grid.is_empty() && self.tune.p_grid.is_empty() {
            return Err(Error::Config("tune: grids must not both be empty".into()));
        }
        Ok(())
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.paths.checkpoint.clone().unwrap_or_else(|| self.paths.output_dir.join("model.ckpt"))
    }

    pub fn fuzzy_params(&self) -> FuzzyParams {
        self.fuzzy.unwrap_or_default()
    }

    pub fn corpus(&self) -> Result<Corpus> {
        load_corpus(&self.paths.corpus)
    }

    pub fn kb_backend(&self, corpus: &Corpus) -> Result<Arc<dyn KbBackend>> {
        Ok(match self.kb.backend {
            BackendKind::Mock => Arc::new(MockKb::with_corpus(corpus)),
            BackendKind::Identity => Arc::new(IdentityKb),
            BackendKind::Llm => {
                if let Some(dir) = self.kb.llm.cache_path.as_ref().and_then(|p| p.parent()) {
                    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                }
                Arc::new(LlmKb::new(self.kb.llm.clone())?)
            }
        })
    }

    /// A stack around `model` with everything the config asks for.
    pub fn stack(&self, model: CodecModel, fuzzy: FuzzyParams, corpus: &Corpus) -> Result<Stack> {
        let mut s = Stack::new(Link::Codec(Arc::new(model)), self.kb_backend(corpus)?);
        s.fuzzy = fuzzy;
        s.background = self.background.clone().unwrap_or_default();
        s.public_kb = self.public_kb.clone();
        s.tracing = self.toggles.tracing;
        Ok(s)
    }
}

// ---------------------------------------------------------------------------
// CLI

#[derive(Debug, Parser)]
#[command(name = "semlink", version, about = "Semantic communication lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the codecs jointly and write a checkpoint and loss CSV.
    Train(TrainArgs),
    /// Sweep SNR × seeds and write the metrics CSV.
    Sweep(SweepArgs),
    /// Send one sentence and print the stage trace.
    Transmit(TransmitArgs),
    /// Tune the fuzzy controller and update the checkpoint.
    TuneFuzzy(TuneArgs),
    /// Print the compression ratio of a transcript against its media.
    Ratio(RatioArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    #[arg(long, short)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Train the fixed-SNR baseline instead.
    #[arg(long)]
    pub baseline: bool,
    /// Checkpoint destination (default: from the config, or
    /// `<output_dir>/baseline.ckpt` with --baseline).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Also sweep this checkpoint and compare cliff statistics.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[arg(long)]
    pub channel: Option<ChannelKind>,
    /// CSV destination (default `<output_dir>/sweep_<channel>.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TransmitArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub text: String,
    #[arg(long, allow_hyphen_values = true)]
    pub snr: f64,
    #[arg(long, default_value = "awgn")]
    pub channel: ChannelKind,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Print the full stage trace even if the config has tracing off.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Where to write the tuned checkpoint (default: overwrite the input).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub channel: Option<ChannelKind>,
}

#[derive(Debug, Args)]
pub struct RatioArgs {
    pub media: PathBuf,
    pub transcript: PathBuf,
}

/// A command failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure { code: EXIT_USAGE, message: e.to_string() }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure { code: EXIT_RUNTIME, message: e.to_string() }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(&a, out),
        Command::Sweep(a) => cmd_sweep(&a, out),
        Command::Transmit(a) => cmd_transmit(&a, out),
        Command::TuneFuzzy(a) => cmd_tune_fuzzy(&a, out),
        Command::Ratio(a) => cmd_ratio(&a.media, &a.transcript, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn load_config(arg: &ConfigArg) -> std::result::Result<ExperimentConfig, Failure> {
    ExperimentConfig::load(&arg.config).map_err(usage)
}

fn load_ckpt(path: &Path) -> std::result::Result<Checkpoint, Failure> {
    if !path.is_file() {
        return Err(usage(format!("checkpoint {} not found", path.display())));
    }
    load_checkpoint(path).map_err(usage)
}

/// What `train` produces, for callers that want it in memory.
pub struct TrainRun {
    pub checkpoint: Checkpoint,
    pub history_csv: String,
    pub seconds: f64,
}

/// Trains the joint system (or the baseline) described by `cfg`.
pub fn train_from_config(cfg: &ExperimentConfig, corpus: &Corpus, baseline: bool) -> Result<TrainRun> {
    let start = Instant::now();
    let vocab = build_vocab(corpus, cfg.codec.min_count)?;
    let sem = cfg.codec.sem(vocab.size());
    let mut state = TrainState::init(vocab, sem, cfg.codec.chan(), derive_seed(cfg.seed, "model", 0))?;
    let train = if baseline { cfg.train.fixed_snr(cfg.schedule.baseline_snr_db) } else { cfg.train.clone() };
    let kb = cfg.kb_backend(corpus)?;
    let mut fuzzy = cfg.fuzzy_params();
    let mut history = train_joint(corpus, &mut state, &train, Some(Augment { kb: kb.as_ref(), fuzzy: &fuzzy }))?.history;
    if !baseline {
        for round in 0..cfg.schedule.alternations {
            let stack = cfg.stack(state.model.clone(), fuzzy, corpus)?;
            let snrs: Vec<SnrDb> = cfg.schedule.tune_snr_db.iter().map(|&s| SnrDb(s)).collect();
            let tuned = tune_fuzzy(corpus, &stack, train.channel, &snrs, derive_seed(cfg.seed, "alternate", round as u64), &cfg.tune)?;
            log::info!("alternation {round}: cosine {:.4} → {:.4}", tuned.objective_before, tuned.objective_after);
            fuzzy = tuned.params;
            let resume = TrainConfig {
                epochs: cfg.schedule.resume_epochs,
                seed: derive_seed(cfg.seed, "resume", round as u64),
                learning_rate: train.learning_rate * train.lr_final_fraction,
                lr_final_fraction: 1.0,
                ..train.clone()
            };
            let offset = history.last().map_or(0, |r| r.step + 1);
            let more = train_joint(corpus, &mut state, &resume, Some(Augment { kb: kb.as_ref(), fuzzy: &fuzzy }))?.history;
            history.extend(more.into_iter().map(|mut r| {
                r.step += offset;
                r
            }));
        }
    }
    Ok(TrainRun {
        checkpoint: Checkpoint { state, fuzzy, train_config: Some(train) },
        history_csv: loss_csv(&history),
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> CmdResult {
    let cfg = load_config(&a.config)?;
    let corpus = cfg.corpus().map_err(usage)?;
    let run = train_from_config(&cfg, &corpus, a.baseline).map_err(runtime)?;
    let ckpt_path = match (&a.out, a.baseline) {
        (Some(p), _) => p.clone(),
        (None, true) => cfg.paths.output_dir.join("baseline.ckpt"),
        (None, false) => cfg.checkpoint_path(),
    };
    let loss_path = cfg.paths.output_dir.join(if a.baseline { "baseline_loss.csv" } else { "loss.csv" });
    let hash = save_checkpoint(&ckpt_path, &run.checkpoint).map_err(runtime)?;
    write_file(&loss_path, run.history_csv.as_bytes()).map_err(runtime)?;
    let last = run.history_csv.lines().last().unwrap_or("");
    let _ = writeln!(out, "final step,ce,mi_lb,total: {last}");
    let _ = writeln!(out, "checkpoint {} sha256 {hash}", ckpt_path.display());
    let _ = writeln!(out, "loss history {}", loss_path.display());
    log::info!("training took {:.1}s", run.seconds);
    Ok(())
}

/// Sweeps `checkpoint` under the config's sweep section.
pub fn sweep_checkpoint(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    checkpoint: Checkpoint,
    channel: ChannelKind,
) -> Result<SweepResult> {
    let clf = fit_classifier(corpus, cfg.sweep.classifier_smoothing)?;
    let stack = cfg.stack(checkpoint.state.model, checkpoint.fuzzy, corpus)?;
    let snrs: Vec<SnrDb> = cfg.sweep.snr_db.iter().map(|&s| SnrDb(s)).collect();
    let seeds: Vec<u64> = cfg.sweep.seeds.iter().map(|&s| derive_seed(cfg.seed, "sweep.seed", s)).collect();
    let mut result = snr_sweep(corpus, &stack, channel, &snrs, &seeds, &clf)?;
    // Report the configured seed numbers, not the derived streams.
    for (i, r) in result.records.iter_mut().enumerate() {
        r.seed = cfg.sweep.seeds[i % seeds.len()] as i64;
    }
    Ok(result)
}

fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> CmdResult {
    let cfg = load_config(&a.config)?;
    let ckpt = load_ckpt(&a.checkpoint.clone().unwrap_or_else(|| cfg.checkpoint_path()))?;
    let base = a.baseline.as_deref().map(load_ckpt).transpose()?;
    let corpus = cfg.corpus().map_err(usage)?;
    let channel = a.channel.unwrap_or(cfg.sweep.channel);
    let csv_path = a.out.clone().unwrap_or_else(|| cfg.paths.output_dir.join(format!("sweep_{}.csv", channel.name())));
    let result = sweep_checkpoint(&cfg, &corpus, ckpt, channel).map_err(runtime)?;
    write_file(&csv_path, result.to_csv().as_bytes()).map_err(runtime)?;
    let _ = writeln!(out, "{:>8} {:>9} {:>7} {:>7} {:>10}", "snr_db", "token_acc", "bleu2", "cosine", "downstream");
    for r in &result.summary {
        let _ = writeln!(
            out,
            "{:>8} {:>9.4} {:>7.4} {:>7.4} {:>10.4}",
            r.snr_db, r.token_accuracy, r.bleu2, r.cosine, r.downstream_accuracy
        );
    }
    let _ = writeln!(out, "cliff {:.4}", result.cliff);
    let _ = writeln!(out, "wrote {}", csv_path.display());
    if let Some(b) = base {
        let bpath = csv_path.with_extension("baseline.csv");
        let br = sweep_checkpoint(&cfg, &corpus, b, channel).map_err(runtime)?;
        write_file(&bpath, br.to_csv().as_bytes()).map_err(runtime)?;
        let verdict = if result.cliff <= br.cliff { "no worse" } else { "worse" };
        let _ = writeln!(out, "baseline cliff {:.4}; joint is {verdict} than baseline", br.cliff);
        let _ = writeln!(out, "wrote {}", bpath.display());
    }
    Ok(())
}

fn cmd_transmit(a: &TransmitArgs, out: &mut dyn Write) -> CmdResult {
    let cfg = load_config(&a.config)?;
    let ckpt = load_ckpt(&a.checkpoint.clone().unwrap_or_else(|| cfg.checkpoint_path()))?;
    let snr = SnrDb::new(a.snr).map_err(usage)?;
    let corpus = cfg.corpus().map_err(usage)?;
    let stack = cfg.stack(ckpt.state.model, ckpt.fuzzy, &corpus).map_err(runtime)?;
    let tx = transmit(&a.text, &stack, snr).map_err(runtime)?;
    let rx = receive(&pass_channel(&tx, a.channel, trial_seed(a.seed, 0)), &stack).map_err(runtime)?;
    let d = &tx.directive;
    let _ = writeln!(out, "T:  {}", a.text);
    let _ = writeln!(
        out,
        "directive: {} range [{:.2}, {:.2}] ratio {:.4}",
        d.snr_class.name(),
        d.length_ratio_range.0,
        d.length_ratio_range.1,
        d.recommended_ratio
    );
    let _ = writeln!(out, "sent: {}", tx.sent_text);
    if a.trace || stack.tracing {
        let _ = write!(out, "trace ({} over {}):\n{}{}", snr, a.channel.name(), tx.trace, rx.trace);
    }
    match &rx.text {
        Some(t) => {
            let _ = writeln!(out, "T^: {t}");
        }
        None => {
            let _ = writeln!(out, "T^: <failed: deep fade>");
        }
    }
    if let Some(m) = &rx.manifest {
        let path = cfg.paths.output_dir.join("manifest.json");
        let json = serde_json::to_string_pretty(m).map_err(runtime)?;
        write_file(&path, json.as_bytes()).map_err(runtime)?;
        let _ = writeln!(out, "manifest {}", path.display());
    }
    Ok(())
}

fn cmd_tune_fuzzy(a: &TuneArgs, out: &mut dyn Write) -> CmdResult {
    let cfg = load_config(&a.config)?;
    if cfg.kb.backend == BackendKind::Llm {
        let cached = cfg.kb.llm.cache_path.as_ref().is_some_and(|p| p.is_file());
        let keyed = std::env::var_os(&cfg.kb.llm.api_key_env).is_some_and(|v| !v.is_empty());
        if !cached && !keyed {
            return Err(usage(format!(
                "llm backend needs a response cache or the {} environment variable",
                cfg.kb.llm.api_key_env
            )));
        }
    }
    let in_path = a.checkpoint.clone().unwrap_or_else(|| cfg.checkpoint_path());
    let mut ckpt = load_ckpt(&in_path)?;
    let corpus = cfg.corpus().map_err(usage)?;
    let stack = cfg.stack(ckpt.state.model.clone(), ckpt.fuzzy, &corpus).map_err(runtime)?;
    let snrs: Vec<SnrDb> = cfg.schedule.tune_snr_db.iter().map(|&s| SnrDb(s)).collect();
    let channel = a.channel.unwrap_or(cfg.sweep.channel);
    let outcome =
        tune_fuzzy(&corpus, &stack, channel, &snrs, derive_seed(cfg.seed, "tune-fuzzy", 0), &cfg.tune).map_err(runtime)?;
    ckpt.fuzzy = outcome.params;
    let out_path = a.out.clone().unwrap_or(in_path);
    let hash = save_checkpoint(&out_path, &ckpt).map_err(runtime)?;
    let _ = writeln!(out, "objective before {:.6}", outcome.objective_before);
    let _ = writeln!(out, "objective after  {:.6}", outcome.objective_after);
    let _ = writeln!(out, "evaluations {}", outcome.evaluations);
    let _ = writeln!(out, "q = {:?}, p = {:?}", outcome.params.q, outcome.params.p);
    let _ = writeln!(out, "checkpoint {} sha256 {hash}", out_path.display());
    Ok(())
}

fn file_len(path: &Path) -> std::result::Result<u64, Failure> {
    std::fs::metadata(path)
        .map(|m| m.len())
        .map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn cmd_ratio(media: &Path, transcript: &Path, out: &mut dyn Write) -> CmdResult {
    let m = file_len(media)?;
    let t = file_len(transcript)?;
    let ratio = compression_ratio(m, t).map_err(usage)?;
    let _ = writeln!(out, "media bytes      {m}");
    let _ = writeln!(out, "transcript bytes {t}");
    let _ = writeln!(out, "compression ratio {ratio:.6}");
    Ok(())
}
