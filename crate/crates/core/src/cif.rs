//! Predictor weight head and continuous integrate-and-fire aggregation.
//!
//! Frame weights are accumulated in order; each time the running total
//! reaches 1 the crossing frame's weight is split, the weighted sum of the
//! frames seen so far is emitted as one segment, and the remainder carries
//! into the next segment.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::semcodec::SemanticFeatures;
use crate::tensor::{sigmoid, softmax, Mat};

pub const KERNEL_WIDTH: usize = 3;
const FIRE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Squash {
    /// Independent per-frame sigmoid; weights in (0, 1).
    #[default]
    Sigmoid,
    /// Softmax across time; weights sum to 1 (at most one fire).
    Softmax,
}

/// Causal width-3 convolution, a linear projection to one logit per frame,
/// then the squash.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CifHead {
    /// `kernel[j]` multiplies frame `t − j`.
    pub kernel: [Mat; KERNEL_WIDTH],
    pub conv_b: Mat,
    pub lin_w: Mat,
    pub lin_b: f64,
    pub squash: Squash,
}

impl CifHead {
    pub fn init<R: Rng + ?Sized>(d: usize, channels: usize, rng: &mut R) -> Self {
        let std = 1.0 / ((d * KERNEL_WIDTH) as f64).sqrt();
        CifHead {
            kernel: std::array::from_fn(|_| Mat::randn(d, channels, std, rng)),
            conv_b: Mat::zeros(1, channels),
            lin_w: Mat::randn(channels, 1, 1.0 / (channels as f64).sqrt(), rng),
            lin_b: 0.0,
            squash: Squash::Sigmoid,
        }
    }

    pub fn zeroed(d: usize, channels: usize) -> Self {
        CifHead {
            kernel: std::array::from_fn(|_| Mat::zeros(d, channels)),
            conv_b: Mat::zeros(1, channels),
            lin_w: Mat::zeros(channels, 1),
            lin_b: 0.0,
            squash: Squash::Sigmoid,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSequence(pub Vec<f64>);

pub fn predict_weights(features: &SemanticFeatures, head: &CifHead) -> Result<WeightSequence> {
    let x = features.matrix();
    let t_len = x.rows();
    if t_len == 0 {
        return Err(Error::InvalidArgument("predictor needs at least one frame".into()));
    }
    if x.cols() != head.kernel[0].rows() {
        return Err(Error::Shape(format!(
            "predictor expects width {}, got {}",
            head.kernel[0].rows(),
            x.cols()
        )));
    }
    let channels = head.conv_b.cols();
    let mut conv = Mat::zeros(t_len, channels);
    for t in 0..t_len {
        conv.row_mut(t).copy_from_slice(head.conv_b.data());
    }
    for (j, k) in head.kernel.iter().enumerate() {
        if j >= t_len {
            break;
        }
        // rows t ≥ j see frame t − j
        let shifted = Mat::from_rows(&(0..t_len - j).map(|t| x.row(t).to_vec()).collect::<Vec<_>>())?;
        let contrib = shifted.matmul(k);
        for t in j..t_len {
            for (o, c) in conv.row_mut(t).iter_mut().zip(contrib.row(t - j)) {
                *o += c;
            }
        }
    }
    let proj = conv.matmul(&head.lin_w);
    let logits: Vec<f64> = (0..t_len).map(|t| proj[(t, 0)] + head.lin_b).collect();
    let weights = match head.squash {
        Squash::Sigmoid => logits.iter().map(|&z| sigmoid(z)).collect(),
        Squash::Softmax => softmax(&logits),
    };
    Ok(WeightSequence(weights))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub vector: Vec<f64>,
    /// Inclusive frame range.
    pub span: (usize, usize),
    pub consumed_weight: f64,
    pub is_tail: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CifOutput {
    pub segments: Vec<Segment>,
    /// Weight left over after the last fire and not emitted.
    pub discarded: f64,
}

/// Integrate-and-fire over `weights` / rows of `vectors`. A leftover of at
/// least `tail_threshold` is emitted as a tail segment rescaled to unit
/// weight; anything smaller is discarded.
pub fn cif_aggregate(weights: &WeightSequence, vectors: &Mat, tail_threshold: f64) -> Result<CifOutput> {
    let w = &weights.0;
    if w.len() != vectors.rows() {
        return Err(Error::Shape(format!("{} weights vs {} frames", w.len(), vectors.rows())));
    }
    if let Some(bad) = w.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!("frame weight {bad} outside [0, 1]")));
    }
    let d = vectors.cols();
    let mut segments = Vec::new();
    let mut acc = 0.0;
    let mut cur = vec![0.0; d];
    let mut start = 0usize;
    let mut last = 0usize;
    for (t, &alpha) in w.iter().enumerate() {
        let v = vectors.row(t);
        let mut remaining = alpha;
        if acc == 0.0 && remaining > 0.0 {
            start = t;
        }
        while acc + remaining >= 1.0 - FIRE_TOL && remaining > 0.0 {
            let share = (1.0 - acc).min(remaining);
            for (c, x) in cur.iter_mut().zip(v) {
                *c += share * x;
            }
            segments.push(Segment {
                vector: std::mem::replace(&mut cur, vec![0.0; d]),
                span: (start, t),
                consumed_weight: acc + share,
                is_tail: false,
            });
            remaining -= share;
            acc = 0.0;
            start = t;
            if remaining <= FIRE_TOL {
                remaining = 0.0;
            }
        }
        if remaining > 0.0 {
            last = t;
            acc += remaining;
            for (c, x) in cur.iter_mut().zip(v) {
                *c += remaining * x;
            }
        }
    }
    let mut discarded = 0.0;
    if acc > 0.0 {
        if acc >= tail_threshold {
            segments.push(Segment {
                vector: cur.iter().map(|c| c / acc).collect(),
                span: (start, last),
                consumed_weight: acc,
                is_tail: true,
            });
        } else {
            discarded = acc;
        }
    }
    Ok(CifOutput { segments, discarded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::rng::seeded;

    fn frames(rows: &[Vec<f64>]) -> Mat {
        Mat::from_rows(rows).unwrap()
    }

    #[test]
    fn hand_accumulation_example() {
        let v = frames(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0]]);
        let out = cif_aggregate(&WeightSequence(vec![0.6, 0.6, 0.8]), &v, 0.5).unwrap();
        assert_eq!(out.segments.len(), 2);
        let s1 = &out.segments[0];
        assert!((s1.vector[0] - 0.6).abs() < 1e-12 && (s1.vector[1] - 0.4).abs() < 1e-12);
        assert_eq!(s1.span, (0, 1));
        let s2 = &out.segments[1];
        assert!((s2.vector[0] - 1.6).abs() < 1e-12 && (s2.vector[1] - 1.8).abs() < 1e-12);
        assert_eq!(s2.span, (1, 2));
        assert!(!s2.is_tail);
    }

    #[test]
    fn unit_weights_fire_each_frame() {
        let v = frames(&[vec![1.0], vec![2.0]]);
        let out = cif_aggregate(&WeightSequence(vec![1.0, 1.0]), &v, 0.5).unwrap();
        let vs: Vec<_> = out.segments.iter().map(|s| s.vector.clone()).collect();
        assert_eq!(vs, vec![vec![1.0], vec![2.0]]);
    }

    #[test]
    fn tail_threshold_rule() {
        let v = frames(&[vec![3.0, -1.0]]);
        let w = WeightSequence(vec![0.3]);
        let none = cif_aggregate(&w, &v, 0.5).unwrap();
        assert!(none.segments.is_empty());
        assert!((none.discarded - 0.3).abs() < 1e-15);
        let tail = cif_aggregate(&w, &v, 0.2).unwrap();
        assert_eq!(tail.segments.len(), 1);
        assert!(tail.segments[0].is_tail);
        assert!((tail.segments[0].vector[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(cif_aggregate(&WeightSequence(vec![0.5]), &Mat::zeros(2, 1), 0.5).is_err());
        assert!(cif_aggregate(&WeightSequence(vec![1.5]), &Mat::zeros(1, 1), 0.5).is_err());
    }

    #[test]
    fn predict_weights_shape_and_constant_head() {
        let f = SemanticFeatures(Mat::randn(6, 8, 1.0, &mut seeded(1)));
        let head = CifHead::zeroed(8, 4);
        let w = predict_weights(&f, &head).unwrap();
        assert_eq!(w.0, vec![0.5; 6]);
        let head = CifHead::init(8, 4, &mut seeded(2));
        let w = predict_weights(&f, &head).unwrap();
        assert_eq!(w.0.len(), 6);
        assert!(w.0.iter().all(|&x| x > 0.0 && x < 1.0));
        assert!(predict_weights(&SemanticFeatures(Mat::zeros(0, 8)), &head).is_err());
    }

    #[test]
    fn predict_weights_matches_stepwise_oracle() {
        let mut rng = seeded(7);
        let (d, ch) = (3, 2);
        let mut head = CifHead::init(d, ch, &mut rng);
        head.conv_b = Mat::randn(1, ch, 0.5, &mut rng);
        head.lin_b = -0.3;
        let x = Mat::randn(4, d, 1.0, &mut rng);
        let got = predict_weights(&SemanticFeatures(x.clone()), &head).unwrap();
        for t in 0..4 {
            let mut logit = head.lin_b;
            for c in 0..ch {
                let mut conv = head.conv_b.data()[c];
                for j in 0..KERNEL_WIDTH {
                    if t >= j {
                        for i in 0..d {
                            conv += x[(t - j, i)] * head.kernel[j][(i, c)];
                        }
                    }
                }
                logit += conv * head.lin_w[(c, 0)];
            }
            let want = 1.0 / (1.0 + (-logit).exp());
            assert!((got.0[t] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn softmax_squash_sums_to_one() {
        let f = SemanticFeatures(Mat::randn(5, 4, 1.0, &mut seeded(3)));
        let mut head = CifHead::init(4, 3, &mut seeded(4));
        head.squash = Squash::Softmax;
        let w = predict_weights(&f, &head).unwrap();
        assert!((w.0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn weight_is_conserved(w in proptest::collection::vec(0.0f64..=1.0, 1..40), thr in 0.0f64..1.0) {
            let n = w.len();
            let v = Mat::filled(n, 2, 1.0);
            let out = cif_aggregate(&WeightSequence(w.clone()), &v, thr).unwrap();
            let total: f64 = w.iter().sum();
            let fired = out.segments.iter().filter(|s| !s.is_tail).count();
            prop_assert_eq!(fired, (total + 1e-9).floor() as usize);
            prop_assert!(out.segments.iter().filter(|s| s.is_tail).count() <= 1);
            let mut mass = out.discarded;
            let mut prev_end = 0;
            for s in &out.segments {
                prop_assert!(s.span.0 <= s.span.1 && s.span.1 < n);
                prop_assert!(s.span.0 >= prev_end);
                prev_end = s.span.1;
                if !s.is_tail {
                    prop_assert!((s.consumed_weight - 1.0).abs() < 1e-9);
                    // unit frame vectors: the pooled vector is the consumed weight
                    prop_assert!((s.vector[0] - 1.0).abs() < 1e-9);
                }
                mass += s.consumed_weight;
            }
            prop_assert!((mass - total).abs() < 1e-9);
        }
    }
}
