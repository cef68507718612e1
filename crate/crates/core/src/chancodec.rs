//! Stacked-autoencoder channel codec (`d → 32 → k` and mirror), real/complex
//! symbol packing, power normalization, and an InfoNCE mutual-information
//! lower bound used by the joint loss.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::semcodec::SemanticFeatures;
use crate::tensor::{gelu, gelu_grad, log_sum_exp, Adam, Mat};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChanCodecConfig {
    pub d_model: usize,
    pub hidden: usize,
    /// Real outputs per position; two per complex symbol.
    pub k: usize,
}

impl ChanCodecConfig {
    pub fn toy(d_model: usize) -> Self {
        ChanCodecConfig { d_model, hidden: 32, k: d_model / 3 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k % 2 != 0 {
            return Err(Error::InvalidArgument(format!("channel width k={} must be even and positive", self.k)));
        }
        if self.d_model == 0 || self.hidden == 0 {
            return Err(Error::InvalidArgument("zero-width channel codec layer".into()));
        }
        Ok(())
    }

    pub fn symbols_per_position(&self) -> usize {
        self.k / 2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChanCodecParams {
    pub config: ChanCodecConfig,
    pub enc1_w: Mat,
    pub enc1_b: Mat,
    pub enc2_w: Mat,
    pub enc2_b: Mat,
    pub dec1_w: Mat,
    pub dec1_b: Mat,
    pub dec2_w: Mat,
    pub dec2_b: Mat,
}

impl ChanCodecParams {
    pub fn init<R: Rng + ?Sized>(config: ChanCodecConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (d, h, k) = (config.d_model, config.hidden, config.k);
        let s = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        Ok(ChanCodecParams {
            config,
            enc1_w: Mat::randn(d, h, s(d), rng),
            enc1_b: Mat::zeros(1, h),
            enc2_w: Mat::randn(h, k, s(h), rng),
            enc2_b: Mat::zeros(1, k),
            dec1_w: Mat::randn(k, h, s(k), rng),
            dec1_b: Mat::zeros(1, h),
            dec2_w: Mat::randn(h, d, s(h), rng),
            dec2_b: Mat::zeros(1, d),
        })
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Mat| Mat::zeros(m.rows(), m.cols());
        ChanCodecParams {
            config: self.config,
            enc1_w: z(&self.enc1_w),
            enc1_b: z(&self.enc1_b),
            enc2_w: z(&self.enc2_w),
            enc2_b: z(&self.enc2_b),
            dec1_w: z(&self.dec1_w),
            dec1_b: z(&self.dec1_b),
            dec2_w: z(&self.dec2_w),
            dec2_b: z(&self.dec2_b),
        }
    }

    pub fn named_tensors(&self) -> Vec<(String, &Mat)> {
        vec![
            ("chan.enc1_w".into(), &self.enc1_w),
            ("chan.enc1_b".into(), &self.enc1_b),
            ("chan.enc2_w".into(), &self.enc2_w),
            ("chan.enc2_b".into(), &self.enc2_b),
            ("chan.dec1_w".into(), &self.dec1_w),
            ("chan.dec1_b".into(), &self.dec1_b),
            ("chan.dec2_w".into(), &self.dec2_w),
            ("chan.dec2_b".into(), &self.dec2_b),
        ]
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Mat)> {
        vec![
            ("chan.enc1_w".into(), &mut self.enc1_w),
            ("chan.enc1_b".into(), &mut self.enc1_b),
            ("chan.enc2_w".into(), &mut self.enc2_w),
            ("chan.enc2_b".into(), &mut self.enc2_b),
            ("chan.dec1_w".into(), &mut self.dec1_w),
            ("chan.dec1_b".into(), &mut self.dec1_b),
            ("chan.dec2_w".into(), &mut self.dec2_w),
            ("chan.dec2_b".into(), &mut self.dec2_b),
        ]
    }
}

/// Power-normalized complex symbols for one transmission block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSymbols {
    pub symbols: Vec<Complex64>,
    /// Mean `|y|²` after normalization (1 unless degenerate).
    pub avg_power: f64,
    pub degenerate: bool,
}

impl ChannelSymbols {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// Consecutive real pairs become `(re, im)`.
pub fn pack(reals: &[f64]) -> Result<Vec<Complex64>> {
    if reals.len() % 2 != 0 {
        return Err(Error::Shape(format!("cannot pack {} reals into complex pairs", reals.len())));
    }
    Ok(reals.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect())
}

pub fn unpack(symbols: &[Complex64]) -> Vec<f64> {
    symbols.iter().flat_map(|c| [c.re, c.im]).collect()
}

pub fn mean_power(symbols: &[Complex64]) -> f64 {
    if symbols.is_empty() {
        return 0.0;
    }
    symbols.iter().map(|c| c.norm_sqr()).sum::<f64>() / symbols.len() as f64
}

/// Scales to unit mean power. An all-zero block passes through with the
/// degenerate flag set.
pub fn power_normalize(symbols: &[Complex64]) -> ChannelSymbols {
    let p = mean_power(symbols);
    if p == 0.0 {
        return ChannelSymbols { symbols: symbols.to_vec(), avg_power: 0.0, degenerate: true };
    }
    let s = 1.0 / p.sqrt();
    let out: Vec<Complex64> = symbols.iter().map(|c| c * s).collect();
    let avg_power = mean_power(&out);
    ChannelSymbols { symbols: out, avg_power, degenerate: false }
}

fn dense(x: &Mat, w: &Mat, b: &Mat) -> Mat {
    let mut y = x.matmul(w);
    y.add_row_vec(b.data());
    y
}

fn check_width(features: &Mat, d: usize) -> Result<()> {
    if features.cols() != d {
        return Err(Error::Shape(format!("channel codec expects width {d}, got {}", features.cols())));
    }
    Ok(())
}

/// Dense stack to width `k` per position, packed to complex and
/// power-normalized over the block.
pub fn channel_encode(features: &SemanticFeatures, params: &ChanCodecParams) -> Result<ChannelSymbols> {
    check_width(features.matrix(), params.config.d_model)?;
    let h1 = dense(features.matrix(), &params.enc1_w, &params.enc1_b).map(gelu);
    let z = dense(&h1, &params.enc2_w, &params.enc2_b);
    Ok(power_normalize(&pack(z.data())?))
}

/// Unpacks complex symbols to `L × k` and runs the mirrored dense stack.
pub fn channel_decode(symbols: &[Complex64], params: &ChanCodecParams) -> Result<SemanticFeatures> {
    let per = params.config.symbols_per_position();
    if symbols.is_empty() || symbols.len() % per != 0 {
        return Err(Error::Shape(format!(
            "{} symbols is not a whole number of {per}-symbol positions",
            symbols.len()
        )));
    }
    let n = symbols.len() / per;
    let z = Mat::from_vec(n, params.config.k, unpack(symbols))?;
    Ok(SemanticFeatures(decode_reals(&z, params)))
}

fn decode_reals(z: &Mat, params: &ChanCodecParams) -> Mat {
    let h3 = dense(z, &params.dec1_w, &params.dec1_b).map(gelu);
    dense(&h3, &params.dec2_w, &params.dec2_b)
}

/// Cached forward of encode → normalize → `+ perturbation` → decode.
#[derive(Clone, Debug)]
pub struct ChannelPassCache {
    x: Mat,
    a1: Mat,
    h1: Mat,
    /// Normalized transmitted reals, `n × k`.
    pub sent: Mat,
    inv_sqrt_p: f64,
    /// Received reals after the channel, `n × k`.
    pub received: Mat,
    a3: Mat,
    h3: Mat,
}

pub fn channel_pass_cached(
    features: &Mat,
    params: &ChanCodecParams,
    perturbation: &[Complex64],
) -> Result<(Mat, ChannelPassCache)> {
    check_width(features, params.config.d_model)?;
    let n = features.rows();
    let k = params.config.k;
    if perturbation.len() * 2 != n * k {
        return Err(Error::Shape(format!(
            "perturbation has {} symbols, block needs {}",
            perturbation.len(),
            n * k / 2
        )));
    }
    let a1 = dense(features, &params.enc1_w, &params.enc1_b);
    let h1 = a1.map(gelu);
    let z = dense(&h1, &params.enc2_w, &params.enc2_b);
    let m = (n * k / 2) as f64;
    let p = z.sum_sq() / m;
    let inv_sqrt_p = if p > 0.0 { 1.0 / p.sqrt() } else { 1.0 };
    let mut sent = z;
    sent.scale(inv_sqrt_p);
    let mut received = sent.clone();
    for (r, pert) in received.data_mut().chunks_exact_mut(2).zip(perturbation) {
        r[0] += pert.re;
        r[1] += pert.im;
    }
    let a3 = dense(&received, &params.dec1_w, &params.dec1_b);
    let h3 = a3.map(gelu);
    let out = dense(&h3, &params.dec2_w, &params.dec2_b);
    Ok((out, ChannelPassCache { x: features.clone(), a1, h1, sent, inv_sqrt_p, received, a3, h3 }))
}

/// Backward through the channel pass. `dreceived_extra` carries any loss
/// gradient applied directly to the received reals (the MI term). The
/// channel perturbation is a constant sample and gets no gradient.
pub fn channel_pass_backward(
    dout: &Mat,
    dreceived_extra: Option<&Mat>,
    cache: &ChannelPassCache,
    params: &ChanCodecParams,
    grad: &mut ChanCodecParams,
) -> Mat {
    grad.dec2_w.add_assign(&cache.h3.t_matmul(dout));
    add_row(&mut grad.dec2_b, &dout.col_sums());
    let mut da3 = dout.matmul_t(&params.dec2_w);
    for (g, &a) in da3.data_mut().iter_mut().zip(cache.a3.data()) {
        *g *= gelu_grad(a);
    }
    grad.dec1_w.add_assign(&cache.received.t_matmul(&da3));
    add_row(&mut grad.dec1_b, &da3.col_sums());
    let mut ds = da3.matmul_t(&params.dec1_w);
    if let Some(extra) = dreceived_extra {
        ds.add_assign(extra);
    }
    // s = z / sqrt(P), P = Σz²/M
    let m = (cache.sent.data().len() / 2) as f64;
    let s_dot_ds: f64 = cache.sent.data().iter().zip(ds.data()).map(|(a, b)| a * b).sum();
    let mut dz = ds;
    for (g, &s) in dz.data_mut().iter_mut().zip(cache.sent.data()) {
        *g = cache.inv_sqrt_p * (*g - s * s_dot_ds / m);
    }
    grad.enc2_w.add_assign(&cache.h1.t_matmul(&dz));
    add_row(&mut grad.enc2_b, &dz.col_sums());
    let mut da1 = dz.matmul_t(&params.enc2_w);
    for (g, &a) in da1.data_mut().iter_mut().zip(cache.a1.data()) {
        *g *= gelu_grad(a);
    }
    grad.enc1_w.add_assign(&cache.x.t_matmul(&da1));
    add_row(&mut grad.enc1_b, &da1.col_sums());
    da1.matmul_t(&params.enc1_w)
}

fn add_row(dst: &mut Mat, src: &[f64]) {
    for (a, b) in dst.data_mut().iter_mut().zip(src) {
        *a += b;
    }
}

/// Noiseless autoencoder pretraining on a fixed set of feature blocks,
/// full-batch Adam on mean squared reconstruction error. Returns the MSE
/// before each step and after the last one.
pub fn pretrain_autoencoder(
    params: &mut ChanCodecParams,
    blocks: &[Mat],
    steps: usize,
    lr: f64,
) -> Result<Vec<f64>> {
    let mut adam = Adam::new(lr, 0.9, 0.999, 1e-8);
    let mut history = Vec::with_capacity(steps + 1);
    let total: usize = blocks.iter().map(|b| b.data().len()).sum();
    for step in 0..=steps {
        let mut grad = params.zeros_like();
        let mut loss = 0.0;
        for block in blocks {
            let silent = vec![Complex64::new(0.0, 0.0); block.rows() * params.config.k / 2];
            let (out, cache) = channel_pass_cached(block, params, &silent)?;
            let mut dout = out.clone();
            for (g, &t) in dout.data_mut().iter_mut().zip(block.data()) {
                let e = *g - t;
                loss += e * e;
                *g = 2.0 * e / total as f64;
            }
            channel_pass_backward(&dout, None, &cache, params, &mut grad);
        }
        history.push(loss / total as f64);
        if step == steps {
            break;
        }
        let mut ps: Vec<&mut [f64]> = params.named_tensors_mut().into_iter().map(|(_, m)| m.data_mut()).collect();
        let gs: Vec<&[f64]> = grad.named_tensors().into_iter().map(|(_, m)| m.data()).collect();
        adam.update(&mut ps, &gs);
    }
    Ok(history)
}

// ---------------------------------------------------------------------------
// mutual information

/// Bilinear critic `f(x, y) = xᵀ W y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Critic {
    pub w: Mat,
}

impl Critic {
    pub fn new(w: Mat) -> Self {
        Critic { w }
    }

    pub fn init<R: Rng + ?Sized>(dx: usize, dy: usize, rng: &mut R) -> Self {
        Critic { w: Mat::randn(dx, dy, 0.01, rng) }
    }
}

#[derive(Clone, Debug)]
pub struct MiEstimate {
    /// Lower bound in nats, never above `ln(K+1)`.
    pub value: f64,
    pub negatives: usize,
    pub dx: Mat,
    pub dy: Mat,
    pub dw: Mat,
}

/// InfoNCE bound with `K` in-batch negatives per pair: pair `i` is scored
/// against `y[(i+m) mod N]` for `m = 1..=K` (`K` is capped at `N−1`).
///
/// `I ≥ ln(K+1) + mean_i [ f(x_i, y_i) − ln Σ_{j ∈ {i} ∪ neg(i)} exp f(x_i, y_j) ]`
pub fn mi_lower_bound(x: &Mat, y: &Mat, negatives_per_pair: usize, critic: &Critic) -> Result<f64> {
    mi_lower_bound_with_grad(x, y, negatives_per_pair, critic).map(|e| e.value)
}

pub fn mi_lower_bound_with_grad(
    x: &Mat,
    y: &Mat,
    negatives_per_pair: usize,
    critic: &Critic,
) -> Result<MiEstimate> {
    let n = x.rows();
    if n < 2 || y.rows() != n {
        return Err(Error::InvalidArgument(format!(
            "MI bound needs ≥ 2 paired samples (got {n} x, {} y)",
            y.rows()
        )));
    }
    if critic.w.shape() != (x.cols(), y.cols()) {
        return Err(Error::Shape("critic shape does not match sample widths".into()));
    }
    let kneg = negatives_per_pair.min(n - 1).max(1);
    let xw = x.matmul(&critic.w); // n × dy
    let mut dxw = Mat::zeros(n, y.cols());
    let mut dy = Mat::zeros(n, y.cols());
    let mut total = 0.0;
    let inv_n = 1.0 / n as f64;
    let mut scores = vec![0.0; kneg + 1];
    let mut idx = vec![0usize; kneg + 1];
    for i in 0..n {
        for (m, slot) in idx.iter_mut().enumerate() {
            *slot = (i + m) % n;
        }
        for (s, &j) in scores.iter_mut().zip(&idx) {
            *s = crate::tensor::dot(xw.row(i), y.row(j));
        }
        let lse = log_sum_exp(&scores);
        total += scores[0] - lse;
        // d/ds_j of (s_0 − lse) = δ_{j0} − softmax_j
        for (m, &j) in idx.iter().enumerate() {
            let p = (scores[m] - lse).exp();
            let coef = (if m == 0 { 1.0 } else { 0.0 } - p) * inv_n;
            if coef == 0.0 {
                continue;
            }
            for c in 0..y.cols() {
                dxw[(i, c)] += coef * y[(j, c)];
                dy[(j, c)] += coef * xw[(i, c)];
            }
        }
    }
    let value = ((kneg + 1) as f64).ln() + total * inv_n;
    let dw = x.t_matmul(&dxw);
    let dx = dxw.matmul_t(&critic.w);
    Ok(MiEstimate { value, negatives: kneg, dx, dy, dw })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::rng::seeded;

    fn toy(seed: u64) -> ChanCodecParams {
        ChanCodecParams::init(ChanCodecConfig::toy(48), &mut seeded(seed)).unwrap()
    }

    #[test]
    fn toy_ratio_is_three_to_one() {
        let c = ChanCodecConfig::toy(48);
        assert_eq!((c.k, c.hidden), (16, 32));
        assert!(ChanCodecConfig { d_model: 48, hidden: 32, k: 15 }.validate().is_err());
    }

    #[test]
    fn encode_shape_and_power() {
        let p = toy(1);
        let f = SemanticFeatures(Mat::randn(4, 48, 1.0, &mut seeded(2)));
        let s = channel_encode(&f, &p).unwrap();
        assert_eq!(s.len(), 32);
        assert!((mean_power(&s.symbols) - 1.0).abs() < 1e-9);
        let back = channel_decode(&s.symbols, &p).unwrap();
        assert_eq!((back.rows(), back.width()), (4, 48));
        assert!(channel_decode(&s.symbols[..31], &p).is_err());
        assert!(channel_encode(&SemanticFeatures(Mat::zeros(2, 40)), &p).is_err());
    }

    #[test]
    fn pack_normalize_examples() {
        let c = power_normalize(&pack(&[3.0, 4.0]).unwrap());
        assert!((c.symbols[0] - Complex64::new(0.6, 0.8)).norm() < 1e-15);

        let c = power_normalize(&[Complex64::new(2.0, 0.0), Complex64::new(0.0, 0.0)]);
        assert!((c.symbols[0].re - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(c.symbols[1], Complex64::new(0.0, 0.0));

        let zero = power_normalize(&[Complex64::new(0.0, 0.0); 3]);
        assert!(zero.degenerate);
        assert!(zero.symbols.iter().all(|c| c.norm() == 0.0));
        assert!(pack(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn pass_gradients_match_finite_difference() {
        let mut rng = seeded(4);
        let cfg = ChanCodecConfig { d_model: 6, hidden: 5, k: 4 };
        let p = ChanCodecParams::init(cfg, &mut rng).unwrap();
        let x = Mat::randn(3, 6, 1.0, &mut rng);
        let target = Mat::randn(3, 6, 1.0, &mut rng);
        let pert: Vec<Complex64> = (0..6).map(|i| Complex64::new(0.1 * i as f64, -0.05)).collect();
        let loss = |p: &ChanCodecParams, x: &Mat| {
            let (out, _) = channel_pass_cached(x, p, &pert).unwrap();
            out.data().iter().zip(target.data()).map(|(a, b)| a * b).sum::<f64>()
        };
        let (_, cache) = channel_pass_cached(&x, &p, &pert).unwrap();
        let mut g = p.zeros_like();
        let dx = channel_pass_backward(&target, None, &cache, &p, &mut g);
        let h = 1e-6;
        for (ti, (_, gm)) in g.named_tensors().into_iter().enumerate() {
            for i in 0..gm.data().len() {
                let mut pp = p.clone();
                pp.named_tensors_mut()[ti].1.data_mut()[i] += h;
                let mut pm = p.clone();
                pm.named_tensors_mut()[ti].1.data_mut()[i] -= h;
                let fd = (loss(&pp, &x) - loss(&pm, &x)) / (2.0 * h);
                assert!((fd - gm.data()[i]).abs() < 1e-6, "tensor {ti} entry {i}");
            }
        }
        for i in 0..x.data().len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let fd = (loss(&p, &xp) - loss(&p, &xm)) / (2.0 * h);
            assert!((fd - dx.data()[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn mi_gradients_match_finite_difference() {
        let mut rng = seeded(5);
        let x = Mat::randn(5, 3, 1.0, &mut rng);
        let y = Mat::randn(5, 2, 1.0, &mut rng);
        let critic = Critic::new(Mat::randn(3, 2, 0.5, &mut rng));
        let est = mi_lower_bound_with_grad(&x, &y, 3, &critic).unwrap();
        let h = 1e-6;
        let check = |base: &Mat, grad: &Mat, f: &dyn Fn(&Mat) -> f64| {
            for i in 0..base.data().len() {
                let mut p = base.clone();
                p.data_mut()[i] += h;
                let mut m = base.clone();
                m.data_mut()[i] -= h;
                let fd = (f(&p) - f(&m)) / (2.0 * h);
                assert!((fd - grad.data()[i]).abs() < 1e-7);
            }
        };
        check(&x, &est.dx, &|xx| mi_lower_bound(xx, &y, 3, &critic).unwrap());
        check(&y, &est.dy, &|yy| mi_lower_bound(&x, yy, 3, &critic).unwrap());
        check(&critic.w, &est.dw, &|w| mi_lower_bound(&x, &y, 3, &Critic::new(w.clone())).unwrap());
    }

    #[test]
    fn mi_requires_two_samples() {
        let c = Critic::new(Mat::identity(2));
        assert!(mi_lower_bound(&Mat::zeros(1, 2), &Mat::zeros(1, 2), 1, &c).is_err());
    }

    #[test]
    fn noiseless_pretraining_reconstructs_features() {
        use crate::semcodec::{semantic_encode, SemCodecConfig, SemCodecParams};
        let mut rng = seeded(5);
        let sem = SemCodecParams::init(SemCodecConfig::toy(20), &mut rng).unwrap();
        let blocks: Vec<Mat> = (0..4u32)
            .map(|s| {
                let ids: Vec<u32> = (0..8).map(|i| (i * 3 + s * 5) % 20).collect();
                semantic_encode(&ids, &sem).unwrap().0
            })
            .collect();
        let mut p = toy(6);
        let h = pretrain_autoencoder(&mut p, &blocks, 3000, 3e-3).unwrap();
        assert!(*h.last().unwrap() < 1e-3, "mse {} -> {}", h[0], h.last().unwrap());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent_and_scale_free(seed in 0u64..500, n in 1usize..24, c in 1e-3f64..1e3) {
            let raw = Mat::randn(n, 2, 1.0, &mut seeded(seed));
            let y = pack(raw.data()).unwrap();
            let once = power_normalize(&y).symbols;
            let twice = power_normalize(&once).symbols;
            let scaled: Vec<Complex64> = y.iter().map(|v| v * c).collect();
            let from_scaled = power_normalize(&scaled).symbols;
            prop_assert!((mean_power(&once) - 1.0).abs() < 1e-9);
            for i in 0..n {
                prop_assert!((once[i] - twice[i]).norm() < 1e-12);
                prop_assert!((once[i] - from_scaled[i]).norm() < 1e-12);
            }
        }

        #[test]
        fn pack_unpack_is_exact(v in proptest::collection::vec(-1e6f64..1e6, 0..20)) {
            let even = &v[..v.len() / 2 * 2];
            prop_assert_eq!(unpack(&pack(even).unwrap()), even.to_vec());
        }

        #[test]
        fn mi_bound_never_exceeds_log_k_plus_one(seed in 0u64..500, n in 2usize..12, k in 1usize..16, scale in 0.1f64..10.0) {
            let mut rng = seeded(seed);
            let x = Mat::randn(n, 3, 1.0, &mut rng);
            let y = Mat::randn(n, 4, 1.0, &mut rng);
            let critic = Critic::new(Mat::randn(3, 4, scale, &mut rng));
            let e = mi_lower_bound_with_grad(&x, &y, k, &critic).unwrap();
            prop_assert!(e.value <= ((e.negatives + 1) as f64).ln() + 1e-12);
        }
    }
}
