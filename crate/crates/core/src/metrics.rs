//! Fidelity metrics, the downstream classifier, and SNR sweeps.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelKind, SnrDb};
use crate::error::{Error, Result};
use crate::kb::words;
use crate::pipeline::{run_round_trip, Stack};
use crate::rng::derive_seed;
use crate::textcore::Corpus;

/// Fraction of bytes removed: `(original − compressed) / original`.
pub fn compression_ratio(original_bytes: u64, compressed_bytes: u64) -> Result<f64> {
    if original_bytes == 0 {
        return Err(Error::InvalidArgument("original size is zero".into()));
    }
    if compressed_bytes > original_bytes {
        return Err(Error::InvalidArgument(format!(
            "compressed size {compressed_bytes} exceeds original {original_bytes}"
        )));
    }
    Ok((original_bytes - compressed_bytes) as f64 / original_bytes as f64)
}

/// Exact-position matches over the longer length. Two empty sequences
/// score 1.
pub fn token_accuracy<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> f64 {
    let n = reference.len().max(hypothesis.len());
    if n == 0 {
        return 1.0;
    }
    let hits = reference.iter().zip(hypothesis).filter(|(a, b)| a == b).count();
    hits as f64 / n as f64
}

/// `u·v / (‖u‖‖v‖)`; zero against zero is 1, zero against nonzero is 0.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!("cosine of {} vs {} dims", u.len(), v.len())));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(match (nu == 0.0, nv == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => (crate::tensor::dot(u, v) / (nu * nv)).clamp(-1.0, 1.0),
    })
}

fn counts(ws: &[String]) -> BTreeMap<&str, f64> {
    let mut m = BTreeMap::new();
    for w in ws {
        *m.entry(w.as_str()).or_insert(0.0) += 1.0;
    }
    m
}

/// Cosine similarity of word-count vectors.
pub fn text_cosine(a: &str, b: &str) -> f64 {
    let (wa, wb) = (words(a), words(b));
    let (ca, cb) = (counts(&wa), counts(&wb));
    let mut keys: Vec<&str> = ca.keys().chain(cb.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    let u: Vec<f64> = keys.iter().map(|k| ca.get(k).copied().unwrap_or(0.0)).collect();
    let v: Vec<f64> = keys.iter().map(|k| cb.get(k).copied().unwrap_or(0.0)).collect();
    cosine_similarity(&u, &v).expect("same key set")
}

fn ngram_counts<T: Ord + Clone>(xs: &[T], n: usize) -> BTreeMap<Vec<T>, usize> {
    let mut m = BTreeMap::new();
    if xs.len() >= n {
        for w in xs.windows(n) {
            *m.entry(w.to_vec()).or_default() += 1;
        }
    }
    m
}

/// Geometric mean of clipped 1- and 2-gram precision times the brevity
/// penalty. An exact match scores 1 even when too short for bigrams. Not
/// symmetric.
pub fn bleu2<T: Ord + Clone>(reference: &[T], hypothesis: &[T]) -> f64 {
    if reference == hypothesis {
        return 1.0;
    }
    if hypothesis.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut log_p = 0.0;
    for n in 1..=2 {
        let hyp = ngram_counts(hypothesis, n);
        let total: usize = hyp.values().sum();
        if total == 0 {
            return 0.0;
        }
        let rf = ngram_counts(reference, n);
        let clipped: usize = hyp.iter().map(|(g, &c)| c.min(rf.get(g).copied().unwrap_or(0))).sum();
        if clipped == 0 {
            return 0.0;
        }
        log_p += (clipped as f64 / total as f64).ln() / 2.0;
    }
    let (c, r) = (hypothesis.len() as f64, reference.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    (bp * log_p.exp()).clamp(0.0, 1.0)
}

pub fn text_bleu2(reference: &str, hypothesis: &str) -> f64 {
    bleu2(&words(reference), &words(hypothesis))
}

// ---------------------------------------------------------------------------
// downstream classifier

/// Multinomial naive Bayes over lowercased words.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TinyClassifier {
    /// Sorted label names.
    pub labels: Vec<String>,
    pub log_priors: Vec<f64>,
    /// Per-label log-likelihood of each known word.
    pub log_likelihoods: Vec<HashMap<String, f64>>,
    pub smoothing: f64,
}

pub fn fit_classifier(corpus: &Corpus, smoothing: f64) -> Result<TinyClassifier> {
    if !(smoothing > 0.0) {
        return Err(Error::InvalidArgument("smoothing must be positive".into()));
    }
    let labels = corpus.labels();
    if labels.len() < 2 {
        return Err(Error::InvalidArgument(format!("classifier needs ≥ 2 classes, corpus has {}", labels.len())));
    }
    let mut docs = vec![0usize; labels.len()];
    let mut word_counts: Vec<BTreeMap<String, f64>> = vec![BTreeMap::new(); labels.len()];
    let mut vocab: BTreeMap<String, ()> = BTreeMap::new();
    for s in &corpus.sentences {
        let Some(label) = &s.label else { continue };
        let c = labels.binary_search(label).expect("label collected above");
        docs[c] += 1;
        for w in words(&s.text) {
            *word_counts[c].entry(w.clone()).or_insert(0.0) += 1.0;
            vocab.insert(w, ());
        }
    }
    let n_docs: usize = docs.iter().sum();
    let v = vocab.len() as f64;
    let log_priors = docs.iter().map(|&d| (d as f64 / n_docs as f64).ln()).collect();
    let log_likelihoods = word_counts
        .iter()
        .map(|wc| {
            let total: f64 = wc.values().sum();
            let denom = total + smoothing * v;
            vocab
                .keys()
                .map(|w| (w.clone(), ((wc.get(w).copied().unwrap_or(0.0) + smoothing) / denom).ln()))
                .collect()
        })
        .collect();
    Ok(TinyClassifier { labels, log_priors, log_likelihoods, smoothing })
}

impl TinyClassifier {
    /// Unnormalized log posterior per label; unknown words are ignored.
    pub fn log_scores(&self, text: &str) -> Vec<f64> {
        let ws = words(text);
        self.log_priors
            .iter()
            .zip(&self.log_likelihoods)
            .map(|(&prior, ll)| prior + ws.iter().filter_map(|w| ll.get(w)).sum::<f64>())
            .collect()
    }

    pub fn posteriors(&self, text: &str) -> Vec<f64> {
        crate::tensor::softmax(&self.log_scores(text))
    }

    /// Most probable label; ties go to the first label in sorted order.
    pub fn classify(&self, text: &str) -> &str {
        &self.labels[crate::tensor::argmax(&self.log_scores(text))]
    }
}

pub fn classify<'a>(clf: &'a TinyClassifier, text: &str) -> &'a str {
    clf.classify(text)
}

// ---------------------------------------------------------------------------
// sweeps

pub const CSV_HEADER: &str = "snr_db,seed,channel,token_acc,bleu2,cosine,downstream_acc,compression_ratio,failed_trials";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub snr_db: f64,
    /// `-1` marks a per-SNR summary row.
    pub seed: i64,
    pub channel: ChannelKind,
    pub token_accuracy: f64,
    pub bleu2: f64,
    pub cosine: f64,
    pub downstream_accuracy: f64,
    pub compression_ratio: f64,
    pub failed_trials: usize,
}

impl MetricRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            self.snr_db,
            self.seed,
            self.channel.name(),
            self.token_accuracy,
            self.bleu2,
            self.cosine,
            self.downstream_accuracy,
            self.compression_ratio,
            self.failed_trials
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    /// One per `(snr, seed)`, ordered by SNR index then seed index.
    pub records: Vec<MetricRecord>,
    /// One per SNR, in sweep order.
    pub summary: Vec<MetricRecord>,
    pub cliff: f64,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in self.records.iter().chain(&self.summary) {
            let _ = writeln!(s, "{}", r.csv_row());
        }
        s
    }

    pub fn mean_token_accuracy(&self) -> Vec<(f64, f64)> {
        self.summary.iter().map(|r| (r.snr_db, r.token_accuracy)).collect()
    }

    /// Largest decrease when stepping down from one SNR to the next lower
    /// one.
    pub fn worst_adjacent_drop(&self) -> f64 {
        cliff_statistic(&self.mean_token_accuracy())
    }
}

/// Largest fall in accuracy between adjacent SNR points (sorted by SNR);
/// zero if accuracy never falls as SNR decreases.
pub fn cliff_statistic(points: &[(f64, f64)]) -> f64 {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a.0.total_cmp(&b.0));
    p.windows(2).map(|w| w[1].1 - w[0].1).fold(0.0, f64::max)
}

/// Reference labels for downstream accuracy: gold labels where present,
/// otherwise the classifier's own call on the clean text.
fn reference_labels(corpus: &Corpus, clf: &TinyClassifier) -> Vec<String> {
    corpus
        .sentences
        .iter()
        .map(|s| s.label.clone().unwrap_or_else(|| clf.classify(&s.text).to_string()))
        .collect()
}

/// Runs every `(snr, seed)` trial over the whole corpus.
pub fn snr_sweep(
    corpus: &Corpus,
    stack: &Stack,
    kind: ChannelKind,
    snrs: &[SnrDb],
    seeds: &[u64],
    clf: &TinyClassifier,
) -> Result<SweepResult> {
    if snrs.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one SNR and one seed".into()));
    }
    let gold = reference_labels(corpus, clf);
    let mut records = Vec::with_capacity(snrs.len() * seeds.len());
    let mut summary = Vec::with_capacity(snrs.len());
    for (si, &snr) in snrs.iter().enumerate() {
        let mut per_snr = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let trial = derive_seed(seed, "sweep", si as u64);
            let rts = run_round_trip(corpus, stack, kind, snr, trial)?;
            let n = rts.len() as f64;
            let mut m = MetricRecord {
                snr_db: snr.db(),
                seed: seed as i64,
                channel: kind,
                token_accuracy: 0.0,
                bleu2: 0.0,
                cosine: 0.0,
                downstream_accuracy: 0.0,
                compression_ratio: 0.0,
                failed_trials: 0,
            };
            for rt in &rts {
                m.token_accuracy += rt.token_accuracy() / n;
                let original_bytes = rt.original.len() as u64;
                if original_bytes > 0 {
                    let sent = (rt.sent_text.len() as u64).min(original_bytes);
                    m.compression_ratio += compression_ratio(original_bytes, sent)? / n;
                }
                match &rt.reconstructed {
                    Some(t) => {
                        m.bleu2 += text_bleu2(&rt.original, t) / n;
                        m.cosine += text_cosine(&rt.original, t) / n;
                        if clf.classify(t) == gold[rt.index] {
                            m.downstream_accuracy += 1.0 / n;
                        }
                    }
                    None => m.failed_trials += 1,
                }
            }
            per_snr.push(m);
        }
        let k = per_snr.len() as f64;
        let mean = |f: fn(&MetricRecord) -> f64| per_snr.iter().map(f).sum::<f64>() / k;
        summary.push(MetricRecord {
            snr_db: snr.db(),
            seed: -1,
            channel: kind,
            token_accuracy: mean(|r| r.token_accuracy),
            bleu2: mean(|r| r.bleu2),
            cosine: mean(|r| r.cosine),
            downstream_accuracy: mean(|r| r.downstream_accuracy),
            compression_ratio: mean(|r| r.compression_ratio),
            failed_trials: per_snr.iter().map(|r| r.failed_trials).sum(),
        });
        records.extend(per_snr);
    }
    let cliff = cliff_statistic(&summary.iter().map(|r| (r.snr_db, r.token_accuracy)).collect::<Vec<_>>());
    Ok(SweepResult { records, summary, cliff })
}

/// Classifier accuracy on the clean corpus against its gold labels.
pub fn clean_accuracy(corpus: &Corpus, clf: &TinyClassifier) -> f64 {
    let gold = reference_labels(corpus, clf);
    let hits = corpus.sentences.iter().zip(&gold).filter(|(s, g)| clf.classify(&s.text) == g.as_str()).count();
    hits as f64 / corpus.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textcore::Sentence;
    use proptest::prelude::*;

    fn labelled(rows: &[(&str, &str)]) -> Corpus {
        Corpus::from_sentences(
            rows.iter().map(|(l, t)| Sentence { text: t.to_string(), label: Some(l.to_string()) }).collect(),
        )
        .unwrap()
    }

    #[test]
    fn compression_examples() {
        assert!((compression_ratio(1000, 100).unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(compression_ratio(7, 7).unwrap(), 0.0);
        assert!(compression_ratio(0, 0).is_err());
        assert!(compression_ratio(5, 6).is_err());
        let raw = 300u64 * 640 * 480 * 3;
        assert!(compression_ratio(raw, 400).unwrap() >= 0.9999);
    }

    #[test]
    fn token_accuracy_examples() {
        assert_eq!(token_accuracy(&["a", "b"], &["a", "b"]), 1.0);
        assert_eq!(token_accuracy(&["a", "b", "c", "d"], &["a", "b", "x", "d"]), 0.75);
        assert_eq!(token_accuracy(&["a"], &[] as &[&str]), 0.0);
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert!((cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn bleu2_by_hand() {
        // hyp "the cat sat", ref "the cat sat down": p1 = 1, p2 = 1, BP = e^(1 − 4/3)
        let r = ["the", "cat", "sat", "down"];
        let h = ["the", "cat", "sat"];
        assert!((bleu2(&r, &h) - (-1.0f64 / 3.0).exp()).abs() < 1e-12);
        // p1 = 2/3, p2 = 1/2, c = r
        let h2 = ["the", "cat", "ran"];
        let r2 = ["the", "cat", "sat"];
        assert!((bleu2(&r2, &h2) - (2.0f64 / 3.0 * 0.5).sqrt()).abs() < 1e-12);
        assert_eq!(bleu2(&["a"], &["a"]), 1.0);
        assert_eq!(bleu2(&["a", "b"], &[] as &[&str]), 0.0);
        // not symmetric
        assert_ne!(bleu2(&r, &h), bleu2(&h, &r));
    }

    #[test]
    fn classifier_memorizes() {
        let c = labelled(&[("spam", "win money"), ("ham", "see you")]);
        let clf = fit_classifier(&c, 1.0).unwrap();
        assert_eq!(classify(&clf, "win money"), "spam");
        assert_eq!(clf.classify("see you"), "ham");
        // unseen words only, equal priors → first sorted label
        assert_eq!(clf.classify("zebra"), "ham");
    }

    #[test]
    fn classifier_matches_hand_table() {
        // ham: "a b", "a"; spam: "c". V = {a, b, c}, α = 1.
        // P(ham) = 2/3, P(spam) = 1/3
        // ham: a (2+1)/(3+3) = 1/2, b 2/6 = 1/3, c 1/6
        // spam: a 1/4, b 1/4, c 2/4
        let c = labelled(&[("ham", "a b"), ("ham", "a"), ("spam", "c")]);
        let clf = fit_classifier(&c, 1.0).unwrap();
        let ham = (2.0f64 / 3.0) * 0.5 * (1.0 / 6.0);
        let spam = (1.0f64 / 3.0) * 0.25 * 0.5;
        let post = clf.posteriors("a c");
        assert!((post[0] - ham / (ham + spam)).abs() < 1e-9);
        assert!((post[1] - spam / (ham + spam)).abs() < 1e-9);
    }

    #[test]
    fn classifier_needs_two_classes() {
        let c = labelled(&[("ham", "a"), ("ham", "b")]);
        assert!(fit_classifier(&c, 1.0).is_err());
    }

    #[test]
    fn cliff_statistic_examples() {
        assert!((cliff_statistic(&[(0.0, 0.2), (5.0, 0.5), (10.0, 0.6)]) - 0.3).abs() < 1e-12);
        assert_eq!(cliff_statistic(&[(10.0, 0.6), (0.0, 0.9)]), 0.0);
    }

    #[test]
    fn csv_header_is_frozen() {
        assert_eq!(
            CSV_HEADER,
            "snr_db,seed,channel,token_acc,bleu2,cosine,downstream_acc,compression_ratio,failed_trials"
        );
    }

    proptest! {
        #[test]
        fn bounded_metrics(a in proptest::collection::vec(0u8..5, 0..12), b in proptest::collection::vec(0u8..5, 0..12)) {
            let t = token_accuracy(&a, &b);
            prop_assert!((0.0..=1.0).contains(&t));
            prop_assert_eq!(t, token_accuracy(&b, &a));
            let bl = bleu2(&a, &b);
            prop_assert!((0.0..=1.0).contains(&bl));
            let u: Vec<f64> = a.iter().map(|&x| x as f64 - 2.0).collect();
            let v: Vec<f64> = b.iter().map(|&x| x as f64 - 2.0).collect();
            let n = u.len().min(v.len());
            let c = cosine_similarity(&u[..n], &v[..n]).unwrap();
            prop_assert!((-1.0..=1.0).contains(&c));
        }

        #[test]
        fn compression_is_monotone(orig in 1u64..1_000_000, a in 0u64..1_000_000, b in 0u64..1_000_000) {
            let (a, b) = (a % (orig + 1), b % (orig + 1));
            prop_assume!(a < b);
            prop_assert!(compression_ratio(orig, a).unwrap() > compression_ratio(orig, b).unwrap());
            prop_assert_eq!(compression_ratio(orig, orig).unwrap(), 0.0);
        }
    }
}
