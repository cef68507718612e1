//! Joint training of the semantic and channel codecs through the noisy
//! channel, gradient checking, and checkpoints.
//!
//! Each step draws one SNR for the batch, sends every sentence through
//! encoder → channel encoder → (normalize, add channel sample) → channel
//! decoder → decoder, and minimizes
//! `λ_ce · CE − λ_mi · MI_lb` where CE is averaged per token and `MI_lb` is
//! the InfoNCE bound between semantic features and received channel reals.
//! The channel sample is a constant: gradients flow through the signal path
//! only.

use std::io::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chancodec::{channel_pass_backward, channel_pass_cached, mi_lower_bound_with_grad, ChanCodecConfig, ChanCodecParams, Critic};
use crate::channel::{ChannelKind, EffectiveChannel, SnrDb};
use crate::error::{Error, Result};
use crate::fuzzyctl::{directive_for, FuzzyParams};
use crate::kb::KbBackend;
use crate::pipeline::CodecModel;
use crate::rng::{derive_seed, seeded, Rng};
use crate::semcodec::{
    reconstruction_loss, semantic_decode, semantic_decode_backward, semantic_encode_backward, semantic_encode_cached,
    CeMode, SemCodecConfig, SemCodecParams,
};
use crate::tensor::{Adam, Mat};
use crate::textcore::{tokenize_with_max, Corpus, Vocab};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate at the last step as a fraction of `learning_rate`;
    /// the rate follows a cosine from one to the other. 1 keeps it flat.
    pub lr_final_fraction: f64,
    /// Global gradient-norm clip; 0 disables it.
    pub grad_clip: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub snr_lo_db: f64,
    pub snr_hi_db: f64,
    pub lambda_ce: f64,
    pub lambda_mi: f64,
    /// In-batch negatives per pair for the MI bound.
    pub mi_negatives: usize,
    pub channel: ChannelKind,
    pub seed: u64,
    pub ce_mode: CeMode,
    /// Run the KB encoder (with the directive for the sampled SNR) on each
    /// sentence before tokenizing, so the codecs see compressed text too.
    pub kb_augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 16,
            learning_rate: 1e-3,
            lr_final_fraction: 1.0,
            grad_clip: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            snr_lo_db: -5.0,
            snr_hi_db: 20.0,
            lambda_ce: 1.0,
            lambda_mi: 0.1,
            mi_negatives: 8,
            channel: ChannelKind::Awgn,
            seed: 7,
            ce_mode: CeMode::Reference,
            kb_augment: true,
        }
    }
}

impl TrainConfig {
    /// Degenerate intervals (`lo == hi`) are allowed and give a fixed SNR.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.snr_lo_db.is_finite() && self.snr_hi_db.is_finite()) || self.snr_lo_db > self.snr_hi_db {
            return bad("train: need finite snr_lo_db ≤ snr_hi_db");
        }
        if self.batch_size == 0 {
            return bad("train: batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0) {
            return bad("train: learning_rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.lr_final_fraction) || !(self.grad_clip >= 0.0) {
            return bad("train: lr_final_fraction must lie in [0, 1] and grad_clip must be non-negative");
        }
        if !(self.lambda_ce >= 0.0 && self.lambda_mi >= 0.0) {
            return bad("train: loss weights must be non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return bad("train: invalid Adam moments");
        }
        Ok(())
    }

    /// The separate-coding baseline: same everything, trained at one SNR.
    pub fn fixed_snr(&self, snr_db: f64) -> Self {
        TrainConfig { snr_lo_db: snr_db, snr_hi_db: snr_db, ..self.clone() }
    }
}

/// Uniform draw from `[lo, hi]` dB.
pub fn sample_snr(config: &TrainConfig, rng: &mut Rng) -> SnrDb {
    let (lo, hi) = (config.snr_lo_db, config.snr_hi_db);
    if lo == hi {
        return SnrDb(lo);
    }
    SnrDb(lo + (hi - lo) * rng.random::<f64>())
}

// ---------------------------------------------------------------------------
// state and gradients

/// Everything trained jointly.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub model: CodecModel,
    pub critic: Critic,
}

impl TrainState {
    pub fn init(vocab: Vocab, sem: SemCodecConfig, chan: ChanCodecConfig, seed: u64) -> Result<Self> {
        let model = CodecModel::init(vocab, sem, chan, seed)?;
        let critic = Critic::init(sem.d_model, chan.k, &mut seeded(derive_seed(seed, "init.critic", 0)));
        Ok(TrainState { model, critic })
    }

    pub fn toy(vocab: Vocab, seed: u64) -> Result<Self> {
        let sem = SemCodecConfig::toy(vocab.size());
        Self::init(vocab, sem, ChanCodecConfig::toy(sem.d_model), seed)
    }

    pub fn named_tensors(&self) -> Vec<(String, &Mat)> {
        let mut v = self.model.sem.named_tensors();
        v.extend(self.model.chan.named_tensors());
        v.push(("critic.w".into(), &self.critic.w));
        v
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Mat)> {
        let mut v = self.model.sem.named_tensors_mut();
        v.extend(self.model.chan.named_tensors_mut());
        v.push(("critic.w".into(), &mut self.critic.w));
        v
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, m)| m.is_finite())
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.named_tensors().iter().flat_map(|(_, m)| m.data().iter().copied()).collect()
    }

    pub fn unflatten(&mut self, flat: &[f64]) {
        let mut off = 0;
        for (_, m) in self.named_tensors_mut() {
            let n = m.data().len();
            m.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        assert_eq!(off, flat.len(), "flat parameter length mismatch");
    }
}

#[derive(Clone, Debug)]
struct Grads {
    sem: SemCodecParams,
    chan: ChanCodecParams,
    critic: Mat,
}

impl Grads {
    fn zeros(state: &TrainState) -> Self {
        Grads {
            sem: state.model.sem.zeros_like(),
            chan: state.model.chan.zeros_like(),
            critic: Mat::zeros(state.critic.w.rows(), state.critic.w.cols()),
        }
    }

    fn tensors(&self) -> Vec<&Mat> {
        let mut v: Vec<&Mat> = self.sem.named_tensors().into_iter().map(|(_, m)| m).collect();
        v.extend(self.chan.named_tensors().into_iter().map(|(_, m)| m));
        v.push(&self.critic);
        v
    }

    fn add(&mut self, other: &Grads) {
        for ((_, a), (_, b)) in self.sem.named_tensors_mut().into_iter().zip(other.sem.named_tensors()) {
            a.add_assign(b);
        }
        for ((_, a), (_, b)) in self.chan.named_tensors_mut().into_iter().zip(other.chan.named_tensors()) {
            a.add_assign(b);
        }
        self.critic.add_assign(&other.critic);
    }

    fn flatten(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|m| m.data().iter().copied()).collect()
    }
}

// ---------------------------------------------------------------------------
// the joint loss

/// Loss components for one batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    /// Mean reconstruction loss per token.
    pub ce: f64,
    pub mi_lb: f64,
    pub total: f64,
}

/// One sentence ready for the wire: token ids and the channel sample added
/// to its normalized transmit block.
#[derive(Clone, Debug, PartialEq)]
pub struct WireSample {
    pub ids: Vec<u32>,
    pub perturbation: Vec<Complex64>,
}

impl WireSample {
    pub fn sample(ids: Vec<u32>, k: usize, kind: ChannelKind, snr: SnrDb, seed: u64) -> Result<Self> {
        let len = ids.len() * k / 2;
        let perturbation = EffectiveChannel::sample(kind, len, snr, seed)?.perturbation;
        Ok(WireSample { ids, perturbation })
    }
}

/// Loss and full gradient of `λ_ce · CE − λ_mi · MI_lb` over `batch`.
fn joint_loss_and_grad(state: &TrainState, batch: &[WireSample], config: &TrainConfig) -> Result<(LossRecord, Grads)> {
    let model = &state.model;
    let forwards = batch
        .par_iter()
        .map(|s| -> Result<_> {
            let (x, enc) = semantic_encode_cached(&s.ids, &model.sem)?;
            let (xhat, chan) = channel_pass_cached(x.matrix(), &model.chan, &s.perturbation)?;
            let xhat = crate::semcodec::SemanticFeatures(xhat);
            let logits = semantic_decode(&xhat, &model.sem)?;
            let (ce, dlogits) = reconstruction_loss(&logits, &s.ids, config.ce_mode)?;
            Ok((x, enc, chan, xhat, ce, dlogits))
        })
        .collect::<Result<Vec<_>>>()?;

    let tokens: usize = batch.iter().map(|s| s.ids.len()).sum();
    let ce_sum: f64 = forwards.iter().map(|f| f.4).sum();
    let ce = ce_sum / tokens as f64;

    let xs: Vec<Vec<f64>> = forwards.iter().flat_map(|f| (0..f.0.rows()).map(|r| f.0.matrix().row(r).to_vec()).collect::<Vec<_>>()).collect();
    let ys: Vec<Vec<f64>> = forwards.iter().flat_map(|f| (0..f.2.received.rows()).map(|r| f.2.received.row(r).to_vec()).collect::<Vec<_>>()).collect();
    let mi = if config.lambda_mi > 0.0 {
        Some(mi_lower_bound_with_grad(&Mat::from_rows(&xs)?, &Mat::from_rows(&ys)?, config.mi_negatives, &state.critic)?)
    } else {
        None
    };
    let mi_lb = mi.as_ref().map_or(0.0, |m| m.value);
    let total = config.lambda_ce * ce - config.lambda_mi * mi_lb;

    let ce_scale = config.lambda_ce / tokens as f64;
    let mut offsets = Vec::with_capacity(batch.len());
    let mut off = 0;
    for s in batch {
        offsets.push(off);
        off += s.ids.len();
    }
    let rows = |m: &Mat, start: usize, n: usize, scale: f64| -> Mat {
        let mut out = Mat::from_rows(&(start..start + n).map(|r| m.row(r).to_vec()).collect::<Vec<_>>()).expect("rows");
        out.scale(scale);
        out
    };
    let partial: Vec<Grads> = forwards
        .into_par_iter()
        .zip(offsets.par_iter())
        .map(|((_x, enc, chan, xhat, _ce, mut dlogits), &start)| {
            let mut g = Grads::zeros(state);
            dlogits.scale(ce_scale);
            let n = dlogits.rows();
            let dxhat = semantic_decode_backward(&xhat, &dlogits, &model.sem, &mut g.sem);
            let dy = mi.as_ref().map(|m| rows(&m.dy, start, n, -config.lambda_mi));
            let mut dx = channel_pass_backward(&dxhat, dy.as_ref(), &chan, &model.chan, &mut g.chan);
            if let Some(m) = &mi {
                dx.add_assign(&rows(&m.dx, start, n, -config.lambda_mi));
            }
            semantic_encode_backward(&dx, &enc, &model.sem, &mut g.sem);
            g
        })
        .collect();
    let mut grads = Grads::zeros(state);
    for g in &partial {
        grads.add(g);
    }
    if let Some(m) = &mi {
        let mut dw = m.dw.clone();
        dw.scale(-config.lambda_mi);
        grads.critic.add_assign(&dw);
    }
    Ok((LossRecord { step: 0, ce, mi_lb, total }, grads))
}

/// Loss only (no gradient), for finite differences.
pub fn joint_loss(state: &TrainState, batch: &[WireSample], config: &TrainConfig) -> Result<LossRecord> {
    joint_loss_and_grad(state, batch, config).map(|(l, _)| l)
}

/// Loss and flattened gradient in [`TrainState::flatten`] order.
pub fn joint_loss_with_flat_grad(
    state: &TrainState,
    batch: &[WireSample],
    config: &TrainConfig,
) -> Result<(LossRecord, Vec<f64>)> {
    joint_loss_and_grad(state, batch, config).map(|(l, g)| (l, g.flatten()))
}

// ---------------------------------------------------------------------------
// training loop

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: Vec<LossRecord>,
    pub steps: usize,
}

/// Optional text preprocessing during training: the KB encoder steered by
/// the fuzzy directive for each batch's SNR. It never sees gradients.
pub struct Augment<'a> {
    pub kb: &'a dyn KbBackend,
    pub fuzzy: &'a FuzzyParams,
}

/// Trains `state` in place. Deterministic given the config seed.
pub fn train_joint(
    corpus: &Corpus,
    state: &mut TrainState,
    config: &TrainConfig,
    augment: Option<Augment<'_>>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let augment = if config.kb_augment { augment } else { None };
    let vocab = state.model.vocab.clone();
    let max_len = state.model.max_len();
    let k = state.model.chan.config.k;
    let mut adam = Adam::new(config.learning_rate, config.beta1, config.beta2, config.adam_eps);
    let mut history = Vec::new();
    let mut step = 0usize;
    let n = corpus.len();
    let total_steps = config.epochs * n.div_ceil(config.batch_size);
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        let mut shuffle = seeded(derive_seed(config.seed, "train.shuffle", epoch as u64));
        for i in (1..n).rev() {
            let j = shuffle.random_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(config.batch_size) {
            let mut snr_rng = seeded(derive_seed(config.seed, "train.snr", step as u64));
            let snr = sample_snr(config, &mut snr_rng);
            let directive = match &augment {
                Some(a) => Some(directive_for(snr, a.fuzzy)?),
                None => None,
            };
            let noise_seed = derive_seed(config.seed, "train.noise", step as u64);
            let mut batch = Vec::with_capacity(chunk.len());
            for (slot, &i) in chunk.iter().enumerate() {
                let text = &corpus.sentences[i].text;
                let text = match (&augment, &directive) {
                    (Some(a), Some(d)) => a.kb.kb_encode(text, d).text,
                    _ => text.clone(),
                };
                let ids = tokenize_with_max(&text, &vocab, max_len).ids;
                match WireSample::sample(ids, k, config.channel, snr, derive_seed(noise_seed, "sentence", slot as u64)) {
                    Ok(s) => batch.push(s),
                    Err(Error::DeepFade { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
            if batch.is_empty() {
                step += 1;
                continue;
            }
            let (mut rec, grads) = joint_loss_and_grad(state, &batch, config)?;
            rec.step = step;
            if !rec.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step,
                    detail: format!("ce={} mi_lb={} at snr {snr} (epoch {epoch})", rec.ce, rec.mi_lb),
                });
            }
            adam.lr = scheduled_lr(config, step, total_steps);
            let mut grads = grads;
            if config.grad_clip > 0.0 {
                clip_global_norm(&mut grads, config.grad_clip);
            }
            let gs = grads.tensors();
            let gslices: Vec<&[f64]> = gs.iter().map(|m| m.data()).collect();
            let mut ps: Vec<&mut [f64]> = state.named_tensors_mut().into_iter().map(|(_, m)| m.data_mut()).collect();
            adam.update(&mut ps, &gslices);
            history.push(rec);
            step += 1;
        }
        if let Some(last) = history.last() {
            log::debug!("epoch {epoch}: ce {:.5} mi {:.4}", last.ce, last.mi_lb);
        }
    }
    if !state.is_finite() {
        return Err(Error::NonFiniteLoss { step, detail: "parameters became non-finite".into() });
    }
    Ok(TrainOutcome { history, steps: step })
}

/// Cosine schedule from `learning_rate` to `learning_rate · lr_final_fraction`.
pub fn scheduled_lr(config: &TrainConfig, step: usize, total_steps: usize) -> f64 {
    let f = config.lr_final_fraction;
    if f == 1.0 || total_steps <= 1 {
        return config.learning_rate;
    }
    let progress = step.min(total_steps - 1) as f64 / (total_steps - 1) as f64;
    let cos = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
    config.learning_rate * (f + (1.0 - f) * cos)
}

fn clip_global_norm(grads: &mut Grads, max_norm: f64) {
    let norm = grads.tensors().iter().map(|m| m.sum_sq()).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for (_, m) in grads.sem.named_tensors_mut() {
            m.scale(s);
        }
        for (_, m) in grads.chan.named_tensors_mut() {
            m.scale(s);
        }
        grads.critic.scale(s);
    }
}

pub const LOSS_CSV_HEADER: &str = "step,ce,mi_lb,total";

pub fn loss_csv(history: &[LossRecord]) -> String {
    let mut s = String::from(LOSS_CSV_HEADER);
    s.push('\n');
    for r in history {
        s.push_str(&format!("{},{:.9},{:.9},{:.9}\n", r.step, r.ce, r.mi_lb, r.total));
    }
    s
}

/// Moving average over `window` steps.
pub fn smoothed(history: &[LossRecord], window: usize) -> Vec<f64> {
    let w = window.max(1);
    history
        .windows(w.min(history.len()).max(1))
        .map(|ws| ws.iter().map(|r| r.total).sum::<f64>() / ws.len() as f64)
        .collect()
}

// ---------------------------------------------------------------------------
// gradient checking

/// Smallest denominator used for relative errors, so gradients that are
/// zero up to rounding do not blow the ratio up.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Central differences of `loss` at the entries `sample` of `params`,
/// compared against `analytic`. Returns the worst relative error.
pub fn finite_diff_check(
    loss: &mut dyn FnMut(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
    sample: &[usize],
    step: f64,
) -> f64 {
    let mut p = params.to_vec();
    let mut worst = 0.0f64;
    for &i in sample {
        let orig = p[i];
        p[i] = orig + step;
        let up = loss(&p);
        p[i] = orig - step;
        let down = loss(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

/// Up to `per_tensor` evenly spaced entries from every tensor of `state`,
/// as flat indices.
pub fn gradient_sample(state: &TrainState, per_tensor: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut off = 0;
    for (_, m) in state.named_tensors() {
        let n = m.data().len();
        let take = per_tensor.min(n);
        for j in 0..take {
            out.push(off + j * n / take.max(1));
        }
        off += n;
    }
    out
}

/// Finite-difference check of the full joint loss on `batch`.
pub fn joint_gradient_check(
    state: &TrainState,
    batch: &[WireSample],
    config: &TrainConfig,
    per_tensor: usize,
    step: f64,
) -> Result<f64> {
    let (_, analytic) = joint_loss_with_flat_grad(state, batch, config)?;
    let params = state.flatten();
    let sample = gradient_sample(state, per_tensor);
    let mut scratch = state.clone();
    let mut failure = None;
    let mut loss = |p: &[f64]| {
        scratch.unflatten(p);
        match joint_loss(&scratch, batch, config) {
            Ok(l) => l.total,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };
    let worst = finite_diff_check(&mut loss, &params, &analytic, &sample, step);
    match failure {
        Some(e) => Err(e),
        None => Ok(worst),
    }
}

// ---------------------------------------------------------------------------
// checkpoints

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"SEMCKPT\0";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub state: TrainState,
    pub fuzzy: FuzzyParams,
    pub train_config: Option<TrainConfig>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    vocab: Vocab,
    sem_config: SemCodecConfig,
    chan_config: ChanCodecConfig,
    fuzzy: FuzzyParams,
    train_config: Option<TrainConfig>,
    tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    /// Body bytes: `u64` header length, JSON header, then every tensor as
    /// row-major little-endian `f64`.
    fn body(&self) -> Result<Vec<u8>> {
        let named = self.state.named_tensors();
        let header = Header {
            vocab: self.state.model.vocab.clone(),
            sem_config: self.state.model.sem.config,
            chan_config: self.state.model.chan.config,
            fuzzy: self.fuzzy,
            train_config: self.train_config.clone(),
            tensors: named.iter().map(|(n, m)| TensorEntry { name: n.clone(), shape: [m.rows(), m.cols()] }).collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let floats: usize = named.iter().map(|(_, m)| m.data().len()).sum();
        let mut body = Vec::with_capacity(8 + json.len() + 8 * floats);
        body.extend_from_slice(&(json.len() as u64).to_le_bytes());
        body.extend_from_slice(&json);
        for (_, m) in &named {
            for v in m.data() {
                body.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(body)
    }

    /// SHA-256 of the serialized body, hex.
    pub fn content_hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.body()?)))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let body = self.body()?;
        let mut out = Vec::with_capacity(body.len() + 52);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(body.len() as u64).to_le_bytes());
        out.extend_from_slice(&body);
        out.extend_from_slice(&Sha256::digest(&body));
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion { found: version, expected: CHECKPOINT_VERSION });
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let rest = &bytes[20..];
        if rest.len() != len.saturating_add(32) {
            return Err(bad("content hash mismatch (file truncated or padded)"));
        }
        let (body, digest) = rest.split_at(len);
        if Sha256::digest(body).as_slice() != digest {
            return Err(bad("content hash mismatch"));
        }
        if body.len() < 8 {
            return Err(bad("empty body"));
        }
        let hlen = u64::from_le_bytes(body[..8].try_into().unwrap()) as usize;
        if body.len() < 8 + hlen {
            return Err(bad("header overruns body"));
        }
        let header: Header = serde_json::from_slice(&body[8..8 + hlen])?;
        let mut state = TrainState::init(header.vocab, header.sem_config, header.chan_config, 0)?;
        let mut data = &body[8 + hlen..];
        {
            let named = state.named_tensors_mut();
            if named.len() != header.tensors.len() {
                return Err(bad("tensor count does not match the architecture"));
            }
            for ((name, m), entry) in named.into_iter().zip(&header.tensors) {
                if name != entry.name || [m.rows(), m.cols()] != entry.shape {
                    return Err(Error::Checkpoint(format!(
                        "tensor {} {:?} does not match expected {name} {:?}",
                        entry.name,
                        entry.shape,
                        m.shape()
                    )));
                }
                let n = m.data().len() * 8;
                if data.len() < n {
                    return Err(bad("tensor data truncated"));
                }
                for (dst, chunk) in m.data_mut().iter_mut().zip(data[..n].chunks_exact(8)) {
                    *dst = f64::from_le_bytes(chunk.try_into().unwrap());
                }
                data = &data[n..];
            }
        }
        if !data.is_empty() {
            return Err(bad("trailing tensor data"));
        }
        header.fuzzy.validate()?;
        Ok(Checkpoint { state, fuzzy: header.fuzzy, train_config: header.train_config })
    }
}

/// Writes the checkpoint and returns its content hash.
pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<String> {
    let path = path.as_ref();
    let bytes = checkpoint.to_bytes()?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    checkpoint.content_hash()
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textcore::build_vocab;

    fn tiny_state(seed: u64) -> (Corpus, TrainState) {
        let c = Corpus::from_texts(&["the dog ran home .", "a cat sat down ."]).unwrap();
        let v = build_vocab(&c, 1).unwrap();
        let sem = SemCodecConfig { vocab_size: v.size(), d_model: 12, n_layers: 1, n_heads: 2, max_len: 10 };
        let chan = ChanCodecConfig { d_model: 12, hidden: 8, k: 4 };
        (c, TrainState::init(v, sem, chan, seed).unwrap())
    }

    #[test]
    fn snr_draws() {
        let cfg = TrainConfig::default().fixed_snr(3.0);
        assert_eq!(sample_snr(&cfg, &mut seeded(1)), SnrDb(3.0));
        let cfg = TrainConfig::default();
        let a = sample_snr(&cfg, &mut seeded(9));
        assert_eq!(a, sample_snr(&cfg, &mut seeded(9)));
        let mut rng = seeded(5);
        let n = 100_000;
        let mean = (0..n).map(|_| sample_snr(&cfg, &mut rng).db()).sum::<f64>() / n as f64;
        assert!((mean - 7.5).abs() < 0.1, "{mean}");
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { snr_lo_db: 5.0, snr_hi_db: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { lambda_mi: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn quadratic_and_constant_losses_check_exactly() {
        let params = vec![0.3, -1.2, 2.0];
        let analytic: Vec<f64> = params.iter().map(|p| 2.0 * p).collect();
        let mut quad = |p: &[f64]| p.iter().map(|x| x * x).sum::<f64>();
        assert!(finite_diff_check(&mut quad, &params, &analytic, &[0, 1, 2], 1e-5) < 1e-8);
        let mut constant = |_: &[f64]| 4.0;
        assert_eq!(finite_diff_check(&mut constant, &params, &[0.0; 3], &[0, 1, 2], 1e-5), 0.0);
    }

    #[test]
    fn joint_gradient_matches_finite_differences() {
        let (c, state) = tiny_state(3);
        let cfg = TrainConfig { mi_negatives: 3, ..Default::default() };
        let batch: Vec<WireSample> = c
            .texts()
            .enumerate()
            .map(|(i, t)| {
                let ids = tokenize_with_max(t, &state.model.vocab, 10).ids;
                WireSample::sample(ids, 4, ChannelKind::Awgn, SnrDb(5.0), i as u64).unwrap()
            })
            .collect();
        let worst = joint_gradient_check(&state, &batch, &cfg, 4, 1e-5).unwrap();
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn noise_sample_does_not_change_the_gradient_formula() {
        // With σ² = 0 the gradient equals the noise-free autoencoder path.
        let (c, state) = tiny_state(4);
        let cfg = TrainConfig { lambda_mi: 0.0, ..Default::default() };
        let ids: Vec<Vec<u32>> = c.texts().map(|t| tokenize_with_max(t, &state.model.vocab, 10).ids).collect();
        let silent: Vec<WireSample> = ids
            .iter()
            .map(|i| WireSample { ids: i.clone(), perturbation: vec![Complex64::new(0.0, 0.0); i.len() * 2] })
            .collect();
        let noiseless: Vec<WireSample> = ids
            .iter()
            .enumerate()
            .map(|(n, i)| WireSample::sample(i.clone(), 4, ChannelKind::Awgn, SnrDb(200.0), n as u64).unwrap())
            .collect();
        let (_, g0) = joint_loss_with_flat_grad(&state, &silent, &cfg).unwrap();
        let (_, g1) = joint_loss_with_flat_grad(&state, &noiseless, &cfg).unwrap();
        assert_eq!(g0, g1);
    }

    #[test]
    fn zero_epochs_leave_params_alone() {
        let (c, mut state) = tiny_state(5);
        let before = state.clone();
        let out = train_joint(&c, &mut state, &TrainConfig { epochs: 0, ..Default::default() }, None).unwrap();
        assert!(out.history.is_empty());
        assert_eq!(state, before);
    }

    #[test]
    fn training_is_deterministic() {
        let (c, s0) = tiny_state(6);
        let cfg = TrainConfig { epochs: 3, batch_size: 2, kb_augment: false, ..Default::default() };
        let (mut a, mut b) = (s0.clone(), s0);
        let ha = train_joint(&c, &mut a, &cfg, None).unwrap().history;
        let hb = train_joint(&c, &mut b, &cfg, None).unwrap().history;
        assert_eq!(ha, hb);
        assert_eq!(a, b);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let (_, state) = tiny_state(7);
        let ck = Checkpoint { state, fuzzy: FuzzyParams::default(), train_config: Some(TrainConfig::default()) };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let h = save_checkpoint(&p, &ck).unwrap();
        let back = load_checkpoint(&p).unwrap();
        assert_eq!(back.content_hash().unwrap(), h);
        for ((n1, a), (n2, b)) in ck.state.named_tensors().into_iter().zip(back.state.named_tensors()) {
            assert_eq!(n1, n2);
            let ba: Vec<u64> = a.data().iter().map(|x| x.to_bits()).collect();
            let bb: Vec<u64> = b.data().iter().map(|x| x.to_bits()).collect();
            assert_eq!(ba, bb, "{n1}");
        }
        assert_eq!(back, ck);
    }

    #[test]
    fn damaged_checkpoints_are_refused() {
        let (_, state) = tiny_state(8);
        let ck = Checkpoint { state, fuzzy: FuzzyParams::default(), train_config: None };
        let bytes = ck.to_bytes().unwrap();
        let truncated = &bytes[..bytes.len() - 100];
        assert!(matches!(Checkpoint::from_bytes(truncated), Err(Error::Checkpoint(m)) if m.contains("hash")));
        let mut flipped = bytes.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 1;
        assert!(matches!(Checkpoint::from_bytes(&flipped), Err(Error::Checkpoint(m)) if m.contains("hash")));
        let mut v99 = bytes;
        v99[8..12].copy_from_slice(&99u32.to_le_bytes());
        assert!(matches!(Checkpoint::from_bytes(&v99), Err(Error::CheckpointVersion { found: 99, .. })));
    }
}
