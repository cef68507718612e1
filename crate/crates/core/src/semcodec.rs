//! Toy semantic codec: token + learned position embeddings, a stack of
//! post-norm encoder layers, a final layer norm, and a single linear
//! projection back to the vocabulary.
//!
//! Each encoder layer computes
//!
//! ```text
//! M_msa = Norm(MSA(X) + X)
//! M_ff  = Norm(GeLU(M_msa · W + b) + M_msa)
//! ```
//!
//! so the feed-forward projection is square (`d × d`). All passes keep a
//! cache so the hand-written backward can run without recomputation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{gelu, gelu_grad, softmax, Mat};

/// Clamp applied to probabilities before any logarithm.
pub const PROB_EPS: f64 = 1e-12;
pub const LN_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemCodecConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub max_len: usize,
}

impl SemCodecConfig {
    pub fn toy(vocab_size: usize) -> Self {
        SemCodecConfig { vocab_size, d_model: 48, n_layers: 2, n_heads: 4, max_len: 32 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 {
            return Err(Error::InvalidArgument("at least one encoder layer".into()));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.n_heads
            )));
        }
        if self.vocab_size < 4 || self.max_len < 2 {
            return Err(Error::InvalidArgument("vocab_size ≥ 4 and max_len ≥ 2 required".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderLayerParams {
    pub n_heads: usize,
    pub wq: Mat,
    pub bq: Mat,
    pub wk: Mat,
    pub bk: Mat,
    pub wv: Mat,
    pub bv: Mat,
    pub wo: Mat,
    pub bo: Mat,
    pub ln1_g: Mat,
    pub ln1_b: Mat,
    pub w_ff: Mat,
    pub b_ff: Mat,
    pub ln2_g: Mat,
    pub ln2_b: Mat,
}

impl EncoderLayerParams {
    pub fn init<R: Rng + ?Sized>(d: usize, n_heads: usize, rng: &mut R) -> Self {
        let std = 1.0 / (d as f64).sqrt();
        EncoderLayerParams {
            n_heads,
            wq: Mat::randn(d, d, std, rng),
            bq: Mat::zeros(1, d),
            wk: Mat::randn(d, d, std, rng),
            bk: Mat::zeros(1, d),
            wv: Mat::randn(d, d, std, rng),
            bv: Mat::zeros(1, d),
            wo: Mat::randn(d, d, std, rng),
            bo: Mat::zeros(1, d),
            ln1_g: Mat::filled(1, d, 1.0),
            ln1_b: Mat::zeros(1, d),
            w_ff: Mat::randn(d, d, std, rng),
            b_ff: Mat::zeros(1, d),
            ln2_g: Mat::filled(1, d, 1.0),
            ln2_b: Mat::zeros(1, d),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Mat| Mat::zeros(m.rows(), m.cols());
        EncoderLayerParams {
            n_heads: self.n_heads,
            wq: z(&self.wq),
            bq: z(&self.bq),
            wk: z(&self.wk),
            bk: z(&self.bk),
            wv: z(&self.wv),
            bv: z(&self.bv),
            wo: z(&self.wo),
            bo: z(&self.bo),
            ln1_g: z(&self.ln1_g),
            ln1_b: z(&self.ln1_b),
            w_ff: z(&self.w_ff),
            b_ff: z(&self.b_ff),
            ln2_g: z(&self.ln2_g),
            ln2_b: z(&self.ln2_b),
        }
    }

    pub fn d_model(&self) -> usize {
        self.wq.rows()
    }

    fn named(&self) -> [(&'static str, &Mat); 14] {
        [
            ("wq", &self.wq),
            ("bq", &self.bq),
            ("wk", &self.wk),
            ("bk", &self.bk),
            ("wv", &self.wv),
            ("bv", &self.bv),
            ("wo", &self.wo),
            ("bo", &self.bo),
            ("ln1_g", &self.ln1_g),
            ("ln1_b", &self.ln1_b),
            ("w_ff", &self.w_ff),
            ("b_ff", &self.b_ff),
            ("ln2_g", &self.ln2_g),
            ("ln2_b", &self.ln2_b),
        ]
    }

    fn named_mut(&mut self) -> [(&'static str, &mut Mat); 14] {
        [
            ("wq", &mut self.wq),
            ("bq", &mut self.bq),
            ("wk", &mut self.wk),
            ("bk", &mut self.bk),
            ("wv", &mut self.wv),
            ("bv", &mut self.bv),
            ("wo", &mut self.wo),
            ("bo", &mut self.bo),
            ("ln1_g", &mut self.ln1_g),
            ("ln1_b", &mut self.ln1_b),
            ("w_ff", &mut self.w_ff),
            ("b_ff", &mut self.b_ff),
            ("ln2_g", &mut self.ln2_g),
            ("ln2_b", &mut self.ln2_b),
        ]
    }
}

/// Encoder and decoder parameters (the semantic encoder and decoder share
/// nothing but the vocabulary).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemCodecParams {
    pub config: SemCodecConfig,
    pub embedding: Mat,
    pub positions: Mat,
    pub layers: Vec<EncoderLayerParams>,
    pub final_g: Mat,
    pub final_b: Mat,
    pub out_w: Mat,
    pub out_b: Mat,
}

impl SemCodecParams {
    pub fn init<R: Rng + ?Sized>(config: SemCodecConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let embedding = Mat::randn(config.vocab_size, d, 1.0, rng);
        let positions = Mat::randn(config.max_len, d, 0.1, rng);
        let layers = (0..config.n_layers)
            .map(|_| EncoderLayerParams::init(d, config.n_heads, rng))
            .collect();
        let out_w = Mat::randn(d, config.vocab_size, 1.0 / (d as f64).sqrt(), rng);
        Ok(SemCodecParams {
            config,
            embedding,
            positions,
            layers,
            final_g: Mat::filled(1, d, 1.0),
            final_b: Mat::zeros(1, d),
            out_w,
            out_b: Mat::zeros(1, config.vocab_size),
        })
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Mat| Mat::zeros(m.rows(), m.cols());
        SemCodecParams {
            config: self.config,
            embedding: z(&self.embedding),
            positions: z(&self.positions),
            layers: self.layers.iter().map(EncoderLayerParams::zeros_like).collect(),
            final_g: z(&self.final_g),
            final_b: z(&self.final_b),
            out_w: z(&self.out_w),
            out_b: z(&self.out_b),
        }
    }

    pub fn d_model(&self) -> usize {
        self.config.d_model
    }

    pub fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    /// Every tensor with a stable dotted name, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &Mat)> {
        let mut out = vec![
            ("sem.embedding".to_string(), &self.embedding),
            ("sem.positions".to_string(), &self.positions),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            for (n, m) in layer.named() {
                out.push((format!("sem.layer{i}.{n}"), m));
            }
        }
        out.push(("sem.final_g".into(), &self.final_g));
        out.push(("sem.final_b".into(), &self.final_b));
        out.push(("sem.out_w".into(), &self.out_w));
        out.push(("sem.out_b".into(), &self.out_b));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Mat)> {
        let mut out = vec![
            ("sem.embedding".to_string(), &mut self.embedding),
            ("sem.positions".to_string(), &mut self.positions),
        ];
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for (n, m) in layer.named_mut() {
                out.push((format!("sem.layer{i}.{n}"), m));
            }
        }
        out.push(("sem.final_g".into(), &mut self.final_g));
        out.push(("sem.final_b".into(), &mut self.final_b));
        out.push(("sem.out_w".into(), &mut self.out_w));
        out.push(("sem.out_b".into(), &mut self.out_b));
        out
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, m)| m.is_finite())
    }
}

/// `L_seq × d` activations exchanged between the semantic and channel codecs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemanticFeatures(pub Mat);

impl SemanticFeatures {
    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn width(&self) -> usize {
        self.0.cols()
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }
}

// ---------------------------------------------------------------------------
// layer norm

#[derive(Clone, Debug)]
pub(crate) struct LnCache {
    xhat: Mat,
    inv_std: Vec<f64>,
}

pub(crate) fn layer_norm(x: &Mat, g: &Mat, b: &Mat) -> (Mat, LnCache) {
    let (n, d) = x.shape();
    let mut xhat = Mat::zeros(n, d);
    let mut y = Mat::zeros(n, d);
    let mut inv_std = Vec::with_capacity(n);
    for r in 0..n {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(is);
        for c in 0..d {
            let h = (row[c] - mean) * is;
            xhat[(r, c)] = h;
            y[(r, c)] = g.data()[c] * h + b.data()[c];
        }
    }
    (y, LnCache { xhat, inv_std })
}

pub(crate) fn layer_norm_backward(
    dy: &Mat,
    cache: &LnCache,
    g: &Mat,
    dg: &mut Mat,
    db: &mut Mat,
) -> Mat {
    let (n, d) = dy.shape();
    let mut dx = Mat::zeros(n, d);
    for r in 0..n {
        let dyr = dy.row(r);
        let xh = cache.xhat.row(r);
        let mut dxhat = vec![0.0; d];
        for c in 0..d {
            dg.data_mut()[c] += dyr[c] * xh[c];
            db.data_mut()[c] += dyr[c];
            dxhat[c] = dyr[c] * g.data()[c];
        }
        let mean_dxhat = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dxhat_xhat = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        let is = cache.inv_std[r];
        let out = dx.row_mut(r);
        for c in 0..d {
            out[c] = is * (dxhat[c] - mean_dxhat - xh[c] * mean_dxhat_xhat);
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// encoder layer

/// Everything the backward pass of one layer needs.
#[derive(Clone, Debug)]
pub struct LayerCache {
    x: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    /// Attention probabilities per head, each `n × n`.
    pub attn: Vec<Mat>,
    ctx: Mat,
    ln1: LnCache,
    m_msa: Mat,
    f_pre: Mat,
    ln2: LnCache,
}

fn linear(x: &Mat, w: &Mat, b: &Mat) -> Mat {
    let mut y = x.matmul(w);
    y.add_row_vec(b.data());
    y
}

pub(crate) fn encoder_layer_cached(x: &Mat, p: &EncoderLayerParams) -> Result<(Mat, LayerCache)> {
    let d = p.d_model();
    if x.cols() != d {
        return Err(Error::Shape(format!("encoder layer expects width {d}, got {}", x.cols())));
    }
    let n = x.rows();
    let h = p.n_heads;
    let dh = d / h;
    let scale = 1.0 / (dh as f64).sqrt();

    let q = linear(x, &p.wq, &p.bq);
    let k = linear(x, &p.wk, &p.bk);
    let v = linear(x, &p.wv, &p.bv);
    let mut ctx = Mat::zeros(n, d);
    let mut attn = Vec::with_capacity(h);
    for head in 0..h {
        let qh = q.col_block(head * dh, dh);
        let kh = k.col_block(head * dh, dh);
        let vh = v.col_block(head * dh, dh);
        let mut s = qh.matmul_t(&kh);
        s.scale(scale);
        let mut a = Mat::zeros(n, n);
        for r in 0..n {
            a.row_mut(r).copy_from_slice(&softmax(s.row(r)));
        }
        ctx.set_col_block(head * dh, &a.matmul(&vh));
        attn.push(a);
    }
    let mut r1 = linear(&ctx, &p.wo, &p.bo);
    r1.add_assign(x);
    let (m_msa, ln1) = layer_norm(&r1, &p.ln1_g, &p.ln1_b);

    let f_pre = linear(&m_msa, &p.w_ff, &p.b_ff);
    let mut r2 = f_pre.map(gelu);
    r2.add_assign(&m_msa);
    let (out, ln2) = layer_norm(&r2, &p.ln2_g, &p.ln2_b);

    Ok((out, LayerCache { x: x.clone(), q, k, v, attn, ctx, ln1, m_msa, f_pre, ln2 }))
}

pub(crate) fn encoder_layer_backward(
    dout: &Mat,
    cache: &LayerCache,
    p: &EncoderLayerParams,
    grad: &mut EncoderLayerParams,
) -> Mat {
    let d = p.d_model();
    let h = p.n_heads;
    let dh = d / h;
    let scale = 1.0 / (dh as f64).sqrt();

    // out = LN2(gelu(f_pre) + m_msa)
    let dr2 = layer_norm_backward(dout, &cache.ln2, &p.ln2_g, &mut grad.ln2_g, &mut grad.ln2_b);
    let mut dm = dr2.clone();
    let mut df = dr2;
    for (g, &f) in df.data_mut().iter_mut().zip(cache.f_pre.data()) {
        *g *= gelu_grad(f);
    }
    grad.w_ff.add_assign(&cache.m_msa.t_matmul(&df));
    add_row(&mut grad.b_ff, &df.col_sums());
    dm.add_assign(&df.matmul_t(&p.w_ff));

    // m_msa = LN1(ctx·Wo + bo + x)
    let dr1 = layer_norm_backward(&dm, &cache.ln1, &p.ln1_g, &mut grad.ln1_g, &mut grad.ln1_b);
    let mut dx = dr1.clone();
    grad.wo.add_assign(&cache.ctx.t_matmul(&dr1));
    add_row(&mut grad.bo, &dr1.col_sums());
    let dctx = dr1.matmul_t(&p.wo);

    let n = cache.x.rows();
    let mut dq = Mat::zeros(n, d);
    let mut dk = Mat::zeros(n, d);
    let mut dv = Mat::zeros(n, d);
    for head in 0..h {
        let a = &cache.attn[head];
        let qh = cache.q.col_block(head * dh, dh);
        let kh = cache.k.col_block(head * dh, dh);
        let vh = cache.v.col_block(head * dh, dh);
        let dch = dctx.col_block(head * dh, dh);
        let da = dch.matmul_t(&vh);
        dv.set_col_block(head * dh, &a.t_matmul(&dch));
        let mut ds = Mat::zeros(n, n);
        for r in 0..n {
            let ar = a.row(r);
            let dar = da.row(r);
            let inner: f64 = ar.iter().zip(dar).map(|(x, y)| x * y).sum();
            for c in 0..n {
                ds[(r, c)] = ar[c] * (dar[c] - inner) * scale;
            }
        }
        dq.set_col_block(head * dh, &ds.matmul(&kh));
        dk.set_col_block(head * dh, &ds.t_matmul(&qh));
    }
    for (dproj, w, gw, gb) in [
        (&dq, &p.wq, &mut grad.wq, &mut grad.bq),
        (&dk, &p.wk, &mut grad.wk, &mut grad.bk),
        (&dv, &p.wv, &mut grad.wv, &mut grad.bv),
    ] {
        gw.add_assign(&cache.x.t_matmul(dproj));
        add_row(gb, &dproj.col_sums());
        dx.add_assign(&dproj.matmul_t(w));
    }
    dx
}

fn add_row(dst: &mut Mat, src: &[f64]) {
    for (a, b) in dst.data_mut().iter_mut().zip(src) {
        *a += b;
    }
}

/// One post-norm encoder layer (MSA block followed by the GeLU feed-forward
/// block), shape-preserving.
pub fn encoder_layer(features: &SemanticFeatures, layer: &EncoderLayerParams) -> Result<SemanticFeatures> {
    encoder_layer_cached(&features.0, layer).map(|(m, _)| SemanticFeatures(m))
}

// ---------------------------------------------------------------------------
// full encoder / decoder

#[derive(Clone, Debug)]
pub struct EncoderCache {
    ids: Vec<u32>,
    layers: Vec<LayerCache>,
    final_ln: LnCache,
}

impl EncoderCache {
    pub fn layer_caches(&self) -> &[LayerCache] {
        &self.layers
    }
}

pub(crate) fn check_ids(ids: &[u32], params: &SemCodecParams) -> Result<()> {
    if ids.len() > params.config.max_len {
        return Err(Error::InvalidArgument(format!(
            "sequence of {} tokens exceeds max_len {}",
            ids.len(),
            params.config.max_len
        )));
    }
    if let Some(&id) = ids.iter().find(|&&id| id as usize >= params.vocab_size()) {
        return Err(Error::TokenOutOfRange { id, size: params.vocab_size() });
    }
    Ok(())
}

pub fn semantic_encode_cached(ids: &[u32], params: &SemCodecParams) -> Result<(SemanticFeatures, EncoderCache)> {
    check_ids(ids, params)?;
    let d = params.d_model();
    let mut x = Mat::zeros(ids.len(), d);
    for (r, &id) in ids.iter().enumerate() {
        let e = params.embedding.row(id as usize);
        let p = params.positions.row(r);
        for (c, o) in x.row_mut(r).iter_mut().enumerate() {
            *o = e[c] + p[c];
        }
    }
    let mut caches = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let (y, c) = encoder_layer_cached(&x, layer)?;
        caches.push(c);
        x = y;
    }
    let (out, final_ln) = layer_norm(&x, &params.final_g, &params.final_b);
    Ok((SemanticFeatures(out), EncoderCache { ids: ids.to_vec(), layers: caches, final_ln }))
}

/// Embeds, runs every encoder layer, and applies the final layer norm.
pub fn semantic_encode(ids: &[u32], params: &SemCodecParams) -> Result<SemanticFeatures> {
    semantic_encode_cached(ids, params).map(|(f, _)| f)
}

/// Accumulates encoder parameter gradients given `d features`.
pub fn semantic_encode_backward(
    dfeatures: &Mat,
    cache: &EncoderCache,
    params: &SemCodecParams,
    grad: &mut SemCodecParams,
) {
    let mut dx = layer_norm_backward(
        dfeatures,
        &cache.final_ln,
        &params.final_g,
        &mut grad.final_g,
        &mut grad.final_b,
    );
    for (i, layer) in params.layers.iter().enumerate().rev() {
        dx = encoder_layer_backward(&dx, &cache.layers[i], layer, &mut grad.layers[i]);
    }
    for (r, &id) in cache.ids.iter().enumerate() {
        let src = dx.row(r);
        for (g, s) in grad.embedding.row_mut(id as usize).iter_mut().zip(src) {
            *g += s;
        }
        for (g, s) in grad.positions.row_mut(r).iter_mut().zip(src) {
            *g += s;
        }
    }
}

/// Final linear projection to vocabulary logits.
pub fn semantic_decode(features: &SemanticFeatures, params: &SemCodecParams) -> Result<Mat> {
    if features.width() != params.d_model() {
        return Err(Error::Shape(format!(
            "semantic decoder expects width {}, got {}",
            params.d_model(),
            features.width()
        )));
    }
    Ok(linear(&features.0, &params.out_w, &params.out_b))
}

/// Returns `d features` and accumulates decoder gradients.
pub fn semantic_decode_backward(
    features: &SemanticFeatures,
    dlogits: &Mat,
    params: &SemCodecParams,
    grad: &mut SemCodecParams,
) -> Mat {
    grad.out_w.add_assign(&features.0.t_matmul(dlogits));
    add_row(&mut grad.out_b, &dlogits.col_sums());
    dlogits.matmul_t(&params.out_w)
}

/// Per-position argmax, lowest id on ties.
pub fn greedy_decode(logits: &Mat) -> Vec<u32> {
    (0..logits.rows()).map(|r| crate::tensor::argmax(logits.row(r)) as u32).collect()
}

// ---------------------------------------------------------------------------
// losses

/// Per-word binary cross entropy `−Σ [q ln p + (1−q) ln(1−p)]`, with `p`
/// clamped to `[ε, 1−ε]`.
pub fn ce_loss(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!("ce_loss: {} probabilities vs {} targets", p.len(), q.len())));
    }
    Ok(p.iter()
        .zip(q)
        .map(|(&p, &q)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            -(q * p.ln() + (1.0 - q) * (1.0 - p).ln())
        })
        .sum())
}

/// How the reconstruction loss is read off the decoder's softmax.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CeMode {
    /// Binary CE with `q = 1` on each position's reference token and `p` its
    /// softmax probability.
    #[default]
    Reference,
    /// Binary CE over every vocabulary entry with one-hot `q`.
    Vocabulary,
    /// Standard categorical CE (diagnostic).
    Categorical,
}

/// Summed loss over positions and `d loss / d logits`.
pub fn reconstruction_loss(logits: &Mat, targets: &[u32], mode: CeMode) -> Result<(f64, Mat)> {
    if logits.rows() != targets.len() {
        return Err(Error::Shape(format!(
            "{} logit rows vs {} targets",
            logits.rows(),
            targets.len()
        )));
    }
    let v = logits.cols();
    let mut total = 0.0;
    let mut dlogits = Mat::zeros(logits.rows(), v);
    for (r, &t) in targets.iter().enumerate() {
        let t = t as usize;
        if t >= v {
            return Err(Error::TokenOutOfRange { id: t as u32, size: v });
        }
        let s = softmax(logits.row(r));
        let out = dlogits.row_mut(r);
        match mode {
            CeMode::Reference | CeMode::Categorical => {
                let p = s[t];
                let clamped = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
                total += -clamped.ln();
                let active = mode == CeMode::Categorical || clamped == p;
                if active {
                    for (j, o) in out.iter_mut().enumerate() {
                        *o = s[j] - if j == t { 1.0 } else { 0.0 };
                    }
                }
            }
            CeMode::Vocabulary => {
                // dL/dp_w, then through the softmax Jacobian.
                let mut g = vec![0.0; v];
                for (w, &p) in s.iter().enumerate() {
                    let pc = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
                    let inside = pc == p;
                    if w == t {
                        total += -pc.ln();
                        if inside {
                            g[w] = -1.0 / p;
                        }
                    } else {
                        total += -(1.0 - pc).ln();
                        if inside {
                            g[w] = 1.0 / (1.0 - p);
                        }
                    }
                }
                let inner: f64 = g.iter().zip(&s).map(|(a, b)| a * b).sum();
                for (j, o) in out.iter_mut().enumerate() {
                    *o = s[j] * (g[j] - inner);
                }
            }
        }
    }
    Ok((total, dlogits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::rng::seeded;

    fn toy_params(vocab: usize, d: usize, heads: usize, layers: usize, seed: u64) -> SemCodecParams {
        let cfg = SemCodecConfig { vocab_size: vocab, d_model: d, n_layers: layers, n_heads: heads, max_len: 8 };
        SemCodecParams::init(cfg, &mut seeded(seed)).unwrap()
    }

    #[test]
    fn encoder_layer_preserves_shape_and_normalizes_attention() {
        let mut rng = seeded(3);
        let layer = EncoderLayerParams::init(48, 4, &mut rng);
        let x = Mat::randn(5, 48, 1.0, &mut rng);
        let (y, cache) = encoder_layer_cached(&x, &layer).unwrap();
        assert_eq!(y.shape(), (5, 48));
        for a in &cache.attn {
            for r in 0..a.rows() {
                let s: f64 = a.row(r).iter().sum();
                assert!((s - 1.0).abs() < 1e-9);
            }
        }
        assert!(encoder_layer_cached(&Mat::zeros(5, 47), &layer).is_err());
    }

    /// Independent step-by-step evaluation of one layer on a 2×4 input with
    /// two heads, written with explicit loops and no shared helpers.
    fn layer_oracle(x: &[[f64; 4]; 2], p: &EncoderLayerParams) -> [[f64; 4]; 2] {
        let w = |m: &Mat, i: usize, j: usize| m.data()[i * 4 + j];
        let b = |m: &Mat, j: usize| m.data()[j];
        let proj = |m: &Mat, bias: &Mat| {
            let mut out = [[0.0; 4]; 2];
            for t in 0..2 {
                for j in 0..4 {
                    let mut s = b(bias, j);
                    for i in 0..4 {
                        s += x[t][i] * w(m, i, j);
                    }
                    out[t][j] = s;
                }
            }
            out
        };
        let q = proj(&p.wq, &p.bq);
        let k = proj(&p.wk, &p.bk);
        let v = proj(&p.wv, &p.bv);
        let mut ctx = [[0.0; 4]; 2];
        for head in 0..2 {
            let off = head * 2;
            for t in 0..2 {
                let mut scores = [0.0; 2];
                for u in 0..2 {
                    scores[u] = (q[t][off] * k[u][off] + q[t][off + 1] * k[u][off + 1]) / 2f64.sqrt();
                }
                let m = scores[0].max(scores[1]);
                let e0 = (scores[0] - m).exp();
                let e1 = (scores[1] - m).exp();
                let (a0, a1) = (e0 / (e0 + e1), e1 / (e0 + e1));
                for j in 0..2 {
                    ctx[t][off + j] = a0 * v[0][off + j] + a1 * v[1][off + j];
                }
            }
        }
        let norm = |r: [f64; 4], g: &Mat, bb: &Mat| {
            let mean = (r[0] + r[1] + r[2] + r[3]) / 4.0;
            let var = r.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / 4.0;
            let mut o = [0.0; 4];
            for j in 0..4 {
                o[j] = g.data()[j] * (r[j] - mean) / (var + LN_EPS).sqrt() + bb.data()[j];
            }
            o
        };
        let gelu_ref = |z: f64| {
            0.5 * z * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (z + 0.044715 * z.powi(3))).tanh())
        };
        let mut out = [[0.0; 4]; 2];
        for t in 0..2 {
            let mut r1 = [0.0; 4];
            for j in 0..4 {
                let mut s = b(&p.bo, j);
                for i in 0..4 {
                    s += ctx[t][i] * w(&p.wo, i, j);
                }
                r1[j] = s + x[t][j];
            }
            let m = norm(r1, &p.ln1_g, &p.ln1_b);
            let mut r2 = [0.0; 4];
            for j in 0..4 {
                let mut s = b(&p.b_ff, j);
                for i in 0..4 {
                    s += m[i] * w(&p.w_ff, i, j);
                }
                r2[j] = gelu_ref(s) + m[j];
            }
            out[t] = norm(r2, &p.ln2_g, &p.ln2_b);
        }
        out
    }

    #[test]
    fn encoder_layer_matches_hand_oracle() {
        let mut rng = seeded(11);
        let mut layer = EncoderLayerParams::init(4, 2, &mut rng);
        layer.bq = Mat::randn(1, 4, 0.3, &mut rng);
        layer.bo = Mat::randn(1, 4, 0.3, &mut rng);
        layer.b_ff = Mat::randn(1, 4, 0.3, &mut rng);
        layer.ln1_g = Mat::randn(1, 4, 1.0, &mut rng);
        layer.ln2_b = Mat::randn(1, 4, 0.5, &mut rng);
        let x = [[0.3, -1.2, 0.8, 0.05], [1.1, 0.4, -0.7, 2.0]];
        let xm = Mat::from_rows(&[x[0].to_vec(), x[1].to_vec()]).unwrap();
        let got = encoder_layer(&SemanticFeatures(xm), &layer).unwrap();
        let want = layer_oracle(&x, &layer);
        for t in 0..2 {
            for j in 0..4 {
                assert!((got.0[(t, j)] - want[t][j]).abs() < 1e-9, "({t},{j})");
            }
        }
    }

    #[test]
    fn semantic_encode_shape_determinism_and_final_norm() {
        let p = toy_params(10, 48, 4, 2, 5);
        let f = semantic_encode(&[2, 3], &p).unwrap();
        assert_eq!((f.rows(), f.width()), (2, 48));
        let ids = [2, 5, 7, 9, 3];
        let a = semantic_encode(&ids, &p).unwrap();
        let b = semantic_encode(&ids, &p).unwrap();
        assert_eq!(a.0.data(), b.0.data());
        for r in 0..a.rows() {
            let row = a.0.row(r);
            let mean = row.iter().sum::<f64>() / 48.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 48.0;
            assert!(mean.abs() < 1e-6 && (var - 1.0).abs() < 1e-6);
        }
        assert!(matches!(semantic_encode(&[2, 10], &p), Err(Error::TokenOutOfRange { id: 10, .. })));
    }

    #[test]
    fn decode_tie_break_and_scale_invariance() {
        let mut p = toy_params(6, 4, 2, 1, 1);
        p.out_w = Mat::zeros(4, 6);
        let logits = semantic_decode(&SemanticFeatures(Mat::zeros(3, 4)), &p).unwrap();
        assert_eq!(greedy_decode(&logits), vec![0, 0, 0]);

        let mut rng = seeded(2);
        let logits = Mat::randn(7, 6, 1.0, &mut rng);
        let mut scaled = logits.clone();
        scaled.scale(2.5);
        assert_eq!(greedy_decode(&logits), greedy_decode(&scaled));
        assert!(semantic_decode(&SemanticFeatures(Mat::zeros(1, 5)), &p).is_err());
    }

    #[test]
    fn one_hot_projection_recovers_tokens() {
        // vocab of 3 (ids 4..6 after the reserved block would need 7; use raw 3-d)
        let features = Mat::from_rows(&[vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let cfg = SemCodecConfig { vocab_size: 4, d_model: 3, n_layers: 1, n_heads: 1, max_len: 4 };
        let mut p = SemCodecParams::init(cfg, &mut seeded(0)).unwrap();
        p.out_w = Mat::from_rows(&[vec![0.0, 5.0, 0.0, 0.0], vec![0.0, 0.0, 5.0, 0.0], vec![0.0, 0.0, 0.0, 5.0]]).unwrap();
        p.out_b = Mat::zeros(1, 4);
        let logits = semantic_decode(&SemanticFeatures(features), &p).unwrap();
        assert_eq!(greedy_decode(&logits), vec![3, 1, 2]);
    }

    #[test]
    fn ce_loss_examples() {
        let e = PROB_EPS;
        assert!(ce_loss(&[1.0 - e, 1.0 - e], &[1.0, 1.0]).unwrap() < 1e-11);
        let v = ce_loss(&[0.9, 0.8], &[1.0, 1.0]).unwrap();
        assert!((v - 0.328_504_066_972_034_2).abs() < 1e-12);
        let v = ce_loss(&[0.2], &[0.0]).unwrap();
        assert!((v - 0.223_143_551_314_209_76).abs() < 1e-12);
        assert!(ce_loss(&[0.5], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn reference_mode_equals_categorical_in_range() {
        let mut rng = seeded(8);
        let logits = Mat::randn(4, 6, 1.0, &mut rng);
        let t = [1, 5, 0, 2];
        let (a, ga) = reconstruction_loss(&logits, &t, CeMode::Reference).unwrap();
        let (b, gb) = reconstruction_loss(&logits, &t, CeMode::Categorical).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert_eq!(ga, gb);
    }

    #[test]
    fn reconstruction_loss_gradients_match_finite_difference() {
        let mut rng = seeded(9);
        let logits = Mat::randn(3, 5, 1.0, &mut rng);
        let t = [4, 0, 2];
        for mode in [CeMode::Reference, CeMode::Vocabulary] {
            let (_, g) = reconstruction_loss(&logits, &t, mode).unwrap();
            for i in 0..logits.data().len() {
                let h = 1e-6;
                let mut lp = logits.clone();
                lp.data_mut()[i] += h;
                let mut lm = logits.clone();
                lm.data_mut()[i] -= h;
                let fd = (reconstruction_loss(&lp, &t, mode).unwrap().0
                    - reconstruction_loss(&lm, &t, mode).unwrap().0)
                    / (2.0 * h);
                assert!((fd - g.data()[i]).abs() < 1e-7, "{mode:?} {i}");
            }
        }
    }

    proptest! {
        #[test]
        fn greedy_decode_ignores_positive_affine_maps(seed in 0u64..1000, scale in 0.01f64..100.0, shifts in proptest::collection::vec(-50.0f64..50.0, 5)) {
            let logits = Mat::randn(5, 7, 1.0, &mut seeded(seed));
            let mut mapped = logits.clone();
            for (r, shift) in shifts.iter().enumerate() {
                for x in mapped.row_mut(r) {
                    *x = scale * *x + shift;
                }
            }
            prop_assert_eq!(greedy_decode(&logits), greedy_decode(&mapped));
        }

        #[test]
        fn ce_loss_is_non_negative(pq in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..10)) {
            let (p, q): (Vec<f64>, Vec<f64>) = pq.into_iter().unzip();
            prop_assert!(ce_loss(&p, &q).unwrap() >= 0.0);
            let hard: Vec<f64> = q.iter().map(|v| v.round()).collect();
            prop_assert!(ce_loss(&hard, &hard).unwrap() < 1e-10);
        }
    }
}
