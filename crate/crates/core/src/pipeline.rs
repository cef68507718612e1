//! End-to-end transmitter and receiver chains.
//!
//! Transmitter: GSE adapter → fuzzy directive → KB disambiguate → KB encode
//! → tokenize → semantic encode → channel encode. Receiver: (equalize) →
//! channel decode → semantic decode → greedy decode → detokenize → KB correct
//! → KB decode → synthesis manifest.
//!
//! One SNR value drives both the fuzzy directive and the channel in a trial.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chancodec::{channel_decode, channel_encode, ChanCodecConfig, ChanCodecParams, ChannelSymbols};
use crate::channel::{self, ChannelKind, ChannelRealization, SnrDb};
use crate::error::{Error, Result};
use crate::fuzzyctl::{directive_for, tune, FuzzyParams, PromptDirective, TuneOptions, TuneOutcome};
use crate::kb::{words, Background, IdentityKb, KbBackend, MockKb};
use crate::metrics::text_cosine;
use crate::rng::{derive_seed, seeded};
use crate::semcodec::{greedy_decode, semantic_decode, semantic_encode, SemCodecConfig, SemCodecParams};
use crate::textcore::{detokenize, tokenize_with_max, Corpus, Vocab};

// ---------------------------------------------------------------------------
// adapters

/// Turns a media reference into text.
pub trait GseAdapter: Send + Sync {
    fn extract(&self, media_ref: &str) -> Result<String>;
}

/// Reads the transcript stored next to a media file as `<basename>.txt`.
#[derive(Clone, Copy, Debug, Default)]
pub struct FileTranscriptGse;

impl FileTranscriptGse {
    pub fn sidecar_path(media: &Path) -> PathBuf {
        media.with_extension("txt")
    }
}

impl GseAdapter for FileTranscriptGse {
    fn extract(&self, media_ref: &str) -> Result<String> {
        let sidecar = Self::sidecar_path(Path::new(media_ref));
        if !sidecar.is_file() {
            return Err(Error::MissingTranscript(sidecar));
        }
        std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))
    }
}

/// The media reference already is the text.
#[derive(Clone, Copy, Debug, Default)]
pub struct PassThroughText;

impl GseAdapter for PassThroughText {
    fn extract(&self, media_ref: &str) -> Result<String> {
        Ok(media_ref.to_string())
    }
}

/// Per-user assets the receiver's synthesizer would need.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublicKbRecord {
    pub user_id: String,
    pub face_image_path: PathBuf,
    pub vocal_features: Vec<f64>,
}

/// Receiver output standing in for audio/video synthesis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisManifest {
    pub user_id: String,
    pub face_image_path: PathBuf,
    pub vocal_dim: usize,
    pub text: String,
    pub snr_db: f64,
    pub channel: String,
    pub flags: Vec<String>,
}

// ---------------------------------------------------------------------------
// stacks

/// Trained semantic and channel codecs with their vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct CodecModel {
    pub vocab: Vocab,
    pub sem: SemCodecParams,
    pub chan: ChanCodecParams,
}

impl CodecModel {
    pub fn init(vocab: Vocab, sem: SemCodecConfig, chan: ChanCodecConfig, seed: u64) -> Result<Self> {
        if sem.vocab_size != vocab.size() {
            return Err(Error::InvalidArgument(format!(
                "codec vocab size {} does not match vocabulary of {}",
                sem.vocab_size,
                vocab.size()
            )));
        }
        if chan.d_model != sem.d_model {
            return Err(Error::InvalidArgument("channel codec width must match d_model".into()));
        }
        let mut rng = seeded(derive_seed(seed, "init.sem", 0));
        let sem = SemCodecParams::init(sem, &mut rng)?;
        let mut rng = seeded(derive_seed(seed, "init.chan", 0));
        let chan = ChanCodecParams::init(chan, &mut rng)?;
        Ok(CodecModel { vocab, sem, chan })
    }

    /// Default toy dimensions for `vocab`.
    pub fn toy(vocab: Vocab, seed: u64) -> Result<Self> {
        let sem = SemCodecConfig::toy(vocab.size());
        let chan = ChanCodecConfig::toy(sem.d_model);
        Self::init(vocab, sem, chan, seed)
    }

    pub fn max_len(&self) -> usize {
        self.sem.config.max_len
    }

    pub fn encode_ids(&self, ids: &[u32]) -> Result<ChannelSymbols> {
        let f = semantic_encode(ids, &self.sem)?;
        channel_encode(&f, &self.chan)
    }

    pub fn decode_symbols(&self, symbols: &[Complex64]) -> Result<Vec<u32>> {
        let f = channel_decode(symbols, &self.chan)?;
        Ok(greedy_decode(&semantic_decode(&f, &self.sem)?))
    }
}

/// What carries token ids between the ends.
#[derive(Clone, Debug)]
pub enum Link {
    Codec(Arc<CodecModel>),
    /// Error-free: the receiver gets the transmitted ids. Used to isolate
    /// the KB path.
    Ideal { vocab: Arc<Vocab>, max_len: usize },
}

impl Link {
    pub fn vocab(&self) -> &Vocab {
        match self {
            Link::Codec(m) => &m.vocab,
            Link::Ideal { vocab, .. } => vocab,
        }
    }

    pub fn max_len(&self) -> usize {
        match self {
            Link::Codec(m) => m.max_len(),
            Link::Ideal { max_len, .. } => *max_len,
        }
    }
}

/// Transmitter and receiver share this stack, so both ends always use the
/// same fuzzy parameters.
#[derive(Clone)]
pub struct Stack {
    pub link: Link,
    pub kb: Arc<dyn KbBackend>,
    pub fuzzy: FuzzyParams,
    pub background: Background,
    /// When false every KB stage is skipped (ablation).
    pub kb_enabled: bool,
    pub public_kb: Option<PublicKbRecord>,
    pub tracing: bool,
}

impl fmt::Debug for Stack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Stack")
            .field("link", &self.link)
            .field("kb", &self.kb.id())
            .field("fuzzy", &self.fuzzy)
            .field("kb_enabled", &self.kb_enabled)
            .finish_non_exhaustive()
    }
}

impl Stack {
    pub fn new(link: Link, kb: Arc<dyn KbBackend>) -> Self {
        Stack {
            link,
            kb,
            fuzzy: FuzzyParams::default(),
            background: Background::default(),
            kb_enabled: true,
            public_kb: None,
            tracing: false,
        }
    }

    /// Codec link with the mock KB primed on `corpus`.
    pub fn with_mock_kb(model: Arc<CodecModel>, corpus: &Corpus) -> Self {
        Stack::new(Link::Codec(model), Arc::new(MockKb::with_corpus(corpus)))
    }

    pub fn without_kb(mut self) -> Self {
        self.kb_enabled = false;
        self
    }

    fn kb(&self) -> &dyn KbBackend {
        if self.kb_enabled {
            self.kb.as_ref()
        } else {
            &IdentityKb
        }
    }
}

// ---------------------------------------------------------------------------
// traces

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub stages: Vec<StageRecord>,
    pub flags: Vec<String>,
}

impl StageTrace {
    fn push(&mut self, stage: &str, detail: impl Into<String>) {
        self.stages.push(StageRecord { stage: stage.to_string(), detail: detail.into() });
    }

    fn flag(&mut self, flag: &str) {
        if !self.flags.iter().any(|f| f == flag) {
            self.flags.push(flag.to_string());
        }
    }

    pub fn stage_names(&self) -> Vec<&str> {
        self.stages.iter().map(|s| s.stage.as_str()).collect()
    }
}

impl fmt::Display for StageTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.stages {
            writeln!(f, "  {:<16} {}", s.stage, s.detail)?;
        }
        if !self.flags.is_empty() {
            writeln!(f, "  flags            {}", self.flags.join(", "))?;
        }
        Ok(())
    }
}

pub const TRANSMIT_STAGES: [&str; 6] =
    ["directive", "disambiguate", "kb_encode", "tokenize", "semantic_encode", "channel_encode"];
pub const RECEIVE_STAGES: [&str; 7] =
    ["equalize", "channel_decode", "semantic_decode", "detokenize", "kb_correct", "kb_decode", "gsr"];

// ---------------------------------------------------------------------------
// transmit / receive

#[derive(Clone, Debug, PartialEq)]
pub struct Transmission {
    pub snr: SnrDb,
    pub directive: PromptDirective,
    /// Text after the KB stages, as tokenized.
    pub sent_text: String,
    pub ids: Vec<u32>,
    /// Empty on an ideal link.
    pub symbols: ChannelSymbols,
    pub trace: StageTrace,
}

/// Channel output before equalization.
#[derive(Clone, Debug, PartialEq)]
pub struct Received {
    pub symbols: Vec<Complex64>,
    pub realization: Option<ChannelRealization>,
    pub channel: ChannelKind,
    pub snr: SnrDb,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reception {
    /// `None` when the trial failed (deep fade).
    pub text: Option<String>,
    pub ids: Vec<u32>,
    pub failed: bool,
    pub manifest: Option<SynthesisManifest>,
    pub trace: StageTrace,
}

pub fn transmit(text: &str, stack: &Stack, snr: SnrDb) -> Result<Transmission> {
    let mut trace = StageTrace::default();
    let kb = stack.kb();
    let directive = directive_for(snr, &stack.fuzzy)?;
    trace.push(
        "directive",
        format!(
            "snr {snr} → {} [{:.2}, {:.2}] ratio {:.3}",
            directive.snr_class.name(),
            directive.length_ratio_range.0,
            directive.length_ratio_range.1,
            directive.recommended_ratio
        ),
    );
    let d = kb.disambiguate(text, &stack.background);
    if d.pass_through && stack.kb_enabled {
        trace.flag("kb_pass_through");
    }
    trace.push("disambiguate", d.text.clone());
    let e = kb.kb_encode(&d.text, &directive);
    if e.pass_through && stack.kb_enabled {
        trace.flag("kb_pass_through");
    }
    if e.ratio_unreachable {
        trace.flag("ratio_unreachable");
    }
    trace.push("kb_encode", e.text.clone());
    let seq = tokenize_with_max(&e.text, stack.link.vocab(), stack.link.max_len());
    trace.push("tokenize", format!("{} ids {:?}", seq.ids.len(), seq.ids));
    let symbols = match &stack.link {
        Link::Codec(model) => {
            let f = semantic_encode(&seq.ids, &model.sem)?;
            trace.push("semantic_encode", format!("{}×{}", f.rows(), f.width()));
            let s = channel_encode(&f, &model.chan)?;
            if s.degenerate {
                trace.flag("degenerate_power");
            }
            trace.push("channel_encode", format!("{} symbols, power {:.9}", s.len(), s.avg_power));
            s
        }
        Link::Ideal { .. } => {
            trace.push("semantic_encode", "ideal link");
            trace.push("channel_encode", "ideal link");
            ChannelSymbols { symbols: Vec::new(), avg_power: 0.0, degenerate: false }
        }
    };
    if !stack.kb_enabled {
        trace.flag("kb_disabled");
    }
    Ok(Transmission { snr, directive, sent_text: e.text, ids: seq.ids, symbols, trace })
}

/// Sends `tx` through the channel. No equalization here.
pub fn pass_channel(tx: &Transmission, kind: ChannelKind, seed: u64) -> Received {
    let (symbols, realization) = match kind {
        ChannelKind::Awgn => (channel::awgn(&tx.symbols.symbols, tx.snr, seed), None),
        ChannelKind::Rayleigh => {
            let (y, r) = channel::rayleigh_fade(&tx.symbols.symbols, tx.snr, seed);
            (y, Some(r))
        }
    };
    Received { symbols, realization, channel: kind, snr: tx.snr }
}

/// Receiver chain for a codec link.
pub fn receive(rx: &Received, stack: &Stack) -> Result<Reception> {
    let Link::Codec(model) = &stack.link else {
        return Err(Error::InvalidArgument("receive needs a codec link; ideal links use run_round_trip".into()));
    };
    let mut trace = StageTrace::default();
    let equalized = match &rx.realization {
        Some(r) => match channel::equalize(&rx.symbols, r) {
            Ok(eq) => {
                trace.push("equalize", format!("|h| = {:.4}", r.h.norm()));
                eq
            }
            Err(Error::DeepFade { magnitude }) => {
                trace.push("equalize", format!("deep fade |h| = {magnitude:e}"));
                trace.flag("deep_fade");
                return Ok(Reception { text: None, ids: Vec::new(), failed: true, manifest: None, trace });
            }
            Err(e) => return Err(e),
        },
        None => {
            trace.push("equalize", "none (awgn)");
            rx.symbols.clone()
        }
    };
    let f = channel_decode(&equalized, &model.chan)?;
    trace.push("channel_decode", format!("{}×{}", f.rows(), f.width()));
    let ids = greedy_decode(&semantic_decode(&f, &model.sem)?);
    trace.push("semantic_decode", format!("{} ids {:?}", ids.len(), ids));
    let text = finish_text(&ids, stack, rx.snr, &mut trace)?;
    let manifest = manifest_for(stack, &text, rx.snr, rx.channel, &trace);
    if manifest.is_some() {
        trace.push("gsr", "manifest emitted");
    } else {
        trace.push("gsr", "no public KB record");
    }
    Ok(Reception { text: Some(text), ids, failed: false, manifest, trace })
}

fn finish_text(ids: &[u32], stack: &Stack, snr: SnrDb, trace: &mut StageTrace) -> Result<String> {
    let kb = stack.kb();
    let raw = detokenize(ids, stack.link.vocab())?;
    trace.push("detokenize", raw.clone());
    let c = kb.correct(&raw, &stack.background);
    if c.pass_through && stack.kb_enabled {
        trace.flag("kb_pass_through");
    }
    trace.push("kb_correct", c.text.clone());
    let directive = directive_for(snr, &stack.fuzzy)?;
    let context: Vec<String> =
        std::iter::once(directive.snr_class.name().to_string()).chain(stack.background.facts.iter().cloned()).collect();
    let d = kb.kb_decode(&c.text, &context);
    if d.pass_through && stack.kb_enabled {
        trace.flag("kb_pass_through");
    }
    trace.push("kb_decode", d.text.clone());
    Ok(d.text)
}

fn manifest_for(
    stack: &Stack,
    text: &str,
    snr: SnrDb,
    kind: ChannelKind,
    trace: &StageTrace,
) -> Option<SynthesisManifest> {
    stack.public_kb.as_ref().map(|rec| SynthesisManifest {
        user_id: rec.user_id.clone(),
        face_image_path: rec.face_image_path.clone(),
        vocal_dim: rec.vocal_features.len(),
        text: text.to_string(),
        snr_db: snr.db(),
        channel: kind.name().to_string(),
        flags: trace.flags.clone(),
    })
}

// ---------------------------------------------------------------------------
// round trips

#[derive(Clone, Debug, PartialEq)]
pub struct RoundTrip {
    pub index: usize,
    pub original: String,
    pub sent_text: String,
    pub sent_ids: Vec<u32>,
    pub decoded_ids: Vec<u32>,
    pub reconstructed: Option<String>,
    pub directive: PromptDirective,
    pub failed: bool,
    pub trace: Option<StageTrace>,
}

impl RoundTrip {
    /// Wire-level token accuracy over the body (framing tokens excluded).
    /// A failed trial scores 0.
    pub fn token_accuracy(&self) -> f64 {
        if self.failed {
            return 0.0;
        }
        crate::metrics::token_accuracy(body(&self.sent_ids), body(&self.decoded_ids))
    }
}

fn body(ids: &[u32]) -> &[u32] {
    if ids.len() >= 2 {
        &ids[1..ids.len() - 1]
    } else {
        &[]
    }
}

/// Seed for sentence `index` of a trial seeded with `seed`.
pub fn trial_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, "trial", index as u64)
}

pub fn round_trip_one(text: &str, index: usize, stack: &Stack, kind: ChannelKind, snr: SnrDb, seed: u64) -> Result<RoundTrip> {
    let tx = transmit(text, stack, snr)?;
    let s = trial_seed(seed, index);
    let (decoded_ids, reconstructed, failed, rx_trace) = match &stack.link {
        Link::Codec(_) => {
            let rx = receive(&pass_channel(&tx, kind, s), stack)?;
            (rx.ids, rx.text, rx.failed, rx.trace)
        }
        Link::Ideal { .. } => {
            let mut trace = StageTrace::default();
            trace.push("equalize", "ideal link");
            trace.push("channel_decode", "ideal link");
            trace.push("semantic_decode", format!("{} ids", tx.ids.len()));
            let text = finish_text(&tx.ids, stack, snr, &mut trace)?;
            trace.push("gsr", "ideal link");
            (tx.ids.clone(), Some(text), false, trace)
        }
    };
    let trace = stack.tracing.then(|| {
        let mut t = tx.trace.clone();
        t.stages.extend(rx_trace.stages);
        for f in &rx_trace.flags {
            t.flag(f);
        }
        t
    });
    Ok(RoundTrip {
        index,
        original: text.to_string(),
        sent_text: tx.sent_text,
        sent_ids: tx.ids,
        decoded_ids,
        reconstructed,
        directive: tx.directive,
        failed,
        trace,
    })
}

/// One record per sentence, ordered by sentence index. Deterministic given
/// the stack and `seed`.
pub fn run_round_trip(corpus: &Corpus, stack: &Stack, kind: ChannelKind, snr: SnrDb, seed: u64) -> Result<Vec<RoundTrip>> {
    corpus
        .sentences
        .par_iter()
        .enumerate()
        .map(|(i, s)| round_trip_one(&s.text, i, stack, kind, snr, seed))
        .collect()
}

/// Tunes the stack's fuzzy consequents for mean word-level cosine
/// similarity between original and reconstructed text, averaged over
/// `snrs`. The codecs are left untouched.
pub fn tune_fuzzy(
    corpus: &Corpus,
    stack: &Stack,
    kind: ChannelKind,
    snrs: &[SnrDb],
    seed: u64,
    opts: &TuneOptions,
) -> Result<TuneOutcome> {
    if snrs.is_empty() {
        return Err(Error::InvalidArgument("tuning needs at least one SNR".into()));
    }
    let mut objective = |params: &FuzzyParams| -> Result<f64> {
        let mut s = stack.clone();
        s.fuzzy = *params;
        s.tracing = false;
        let mut total = 0.0;
        let mut n = 0usize;
        for (j, &snr) in snrs.iter().enumerate() {
            for rt in run_round_trip(corpus, &s, kind, snr, derive_seed(seed, "tune", j as u64))? {
                total += match &rt.reconstructed {
                    Some(t) => text_cosine(&rt.original, t),
                    None => 0.0,
                };
                n += 1;
            }
        }
        Ok(total / n as f64)
    };
    tune(&stack.fuzzy, &mut objective, opts)
}

/// Word-level equality, ignoring case, spacing and punctuation.
pub fn same_words(a: &str, b: &str) -> bool {
    words(a) == words(b)
}
