//! Word-level text handling: normalization, vocabulary, corpora and
//! bag-of-words vectors.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];

/// Default sequence cap, framing tokens included.
pub const DEFAULT_MAX_LEN: usize = 32;

/// Lowercases, splits on whitespace and emits every punctuation character as
/// its own token.
pub fn normalize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        } else if is_punct(ch) {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.extend(ch.to_lowercase().map(String::from).take(1));
        } else {
            cur.extend(ch.to_lowercase());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

#[inline]
pub(crate) fn is_punct(ch: char) -> bool {
    !ch.is_alphanumeric() && !ch.is_whitespace()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Vocab::from_tokens(tokens)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// Builds a vocabulary from an explicit token list. The first four
    /// entries must be the reserved tokens.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len()
            || tokens.iter().zip(RESERVED).any(|(t, r)| t != r)
        {
            return Err(Error::InvalidArgument(
                "vocabulary must start with <pad>, <unk>, <bos>, <eos>".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate token {t:?}")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    fn lookup(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(UNK)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub original_text: String,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub label: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub sentences: Vec<Sentence>,
    pub source_path: Option<PathBuf>,
}

impl Corpus {
    pub fn from_texts<S: AsRef<str>>(texts: &[S]) -> Result<Self> {
        Self::from_sentences(
            texts
                .iter()
                .map(|t| Sentence { text: t.as_ref().to_string(), label: None })
                .collect(),
        )
    }

    pub fn from_sentences(sentences: Vec<Sentence>) -> Result<Self> {
        if sentences.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(Corpus { sentences, source_path: None })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().map(|s| s.text.as_str())
    }

    /// Sorted, de-duplicated label set.
    pub fn labels(&self) -> Vec<String> {
        let mut l: Vec<String> = self.sentences.iter().filter_map(|s| s.label.clone()).collect();
        l.sort();
        l.dedup();
        l
    }
}

/// Frequency-descending, then lexicographic, so ids are stable across runs.
pub fn build_vocab(corpus: &Corpus, min_count: usize) -> Result<Vocab> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if min_count == 0 {
        return Err(Error::InvalidArgument("min_count must be at least 1".into()));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for text in corpus.texts() {
        for tok in normalize(text) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    let mut entries: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_count && !RESERVED.contains(&t.as_str()))
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let tokens = RESERVED
        .iter()
        .map(|s| s.to_string())
        .chain(entries.into_iter().map(|(t, _)| t))
        .collect();
    Vocab::from_tokens(tokens)
}

pub fn tokenize(text: &str, vocab: &Vocab) -> TokenSequence {
    tokenize_with_max(text, vocab, DEFAULT_MAX_LEN)
}

/// Frames with bos/eos; the body is truncated so the whole sequence fits in
/// `max_len` (which must leave room for the framing).
pub fn tokenize_with_max(text: &str, vocab: &Vocab, max_len: usize) -> TokenSequence {
    let max_body = max_len.saturating_sub(2);
    let mut ids = Vec::with_capacity(max_len.min(64));
    ids.push(BOS);
    ids.extend(normalize(text).iter().take(max_body).map(|t| vocab.lookup(t)));
    ids.push(EOS);
    TokenSequence { ids, original_text: text.to_string() }
}

/// Space-joins tokens, dropping pad/bos/eos. Unknowns render as `<unk>`.
pub fn detokenize(ids: &[u32], vocab: &Vocab) -> Result<String> {
    let mut words = Vec::with_capacity(ids.len());
    for &id in ids {
        let tok = vocab.token(id).ok_or(Error::TokenOutOfRange { id, size: vocab.size() })?;
        if matches!(id, PAD | BOS | EOS) {
            continue;
        }
        words.push(tok);
    }
    Ok(words.join(" "))
}

/// Term counts over the vocabulary (framing tokens excluded).
pub fn bow_vector(text: &str, vocab: &Vocab) -> Vec<f64> {
    let mut v = vec![0.0; vocab.size()];
    for tok in normalize(text) {
        v[vocab.lookup(&tok) as usize] += 1.0;
    }
    v
}

/// Reads `label<TAB>text` or bare `text` lines. Blank lines are skipped.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut sentences = Vec::new();
    for (i, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let line = std::str::from_utf8(raw).map_err(|e| Error::CorpusFormat {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("invalid UTF-8: {e}"),
        })?;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let sentence = match line.split_once('\t') {
            Some((label, text)) => {
                Sentence { text: text.to_string(), label: Some(label.trim().to_string()) }
            }
            None => Sentence { text: line.to_string(), label: None },
        };
        sentences.push(sentence);
    }
    if sentences.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(Corpus { sentences, source_path: Some(path.to_path_buf()) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn vocab_json_round_trip_rebuilds_index() {
        let corpus = Corpus::from_texts(&["the cat sat", "the dog ran"]).unwrap();
        let v = build_vocab(&corpus, 1).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocab = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.id("cat"), v.id("cat"));
        assert!(serde_json::from_str::<Vocab>(r#"["a","b"]"#).is_err());
    }

    fn vocab_of(words: &[&str]) -> Vocab {
        let mut t: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        t.extend(words.iter().map(|s| s.to_string()));
        Vocab::from_tokens(t).unwrap()
    }

    #[test]
    fn build_vocab_tiny_cases() {
        let c = Corpus::from_texts(&["a b", "a"]).unwrap();
        let v = build_vocab(&c, 1).unwrap();
        assert_eq!(v.size(), 6);
        assert_eq!(v.tokens()[4..], ["a".to_string(), "b".to_string()]);
        let v2 = build_vocab(&c, 2).unwrap();
        assert_eq!(v2.size(), 5);
        assert_eq!(v2.id("b"), None);
        assert!(matches!(build_vocab(&Corpus { sentences: vec![], source_path: None }, 1), Err(Error::EmptyCorpus)));
        assert!(Corpus::from_texts::<&str>(&[]).is_err());
    }

    #[test]
    fn tokenize_examples() {
        let v = vocab_of(&["a", "b", "."]);
        let (a, b, dot) = (v.id("a").unwrap(), v.id("b").unwrap(), v.id(".").unwrap());
        assert_eq!(tokenize("A b.", &v).ids, vec![BOS, a, b, dot, EOS]);
        assert_eq!(tokenize("", &v).ids, vec![BOS, EOS]);
        assert_eq!(tokenize("zzz", &v).ids, vec![BOS, UNK, EOS]);
    }

    #[test]
    fn tokenize_truncates_before_eos() {
        let v = vocab_of(&["a"]);
        let seq = tokenize_with_max("a a a a a a", &v, 4);
        assert_eq!(seq.ids, vec![BOS, 4, 4, EOS]);
    }

    #[test]
    fn detokenize_examples() {
        let v = vocab_of(&["a", "b"]);
        assert_eq!(detokenize(&[BOS, 4, 5, EOS], &v).unwrap(), "a b");
        assert_eq!(detokenize(&[BOS, EOS], &v).unwrap(), "");
        assert_eq!(detokenize(&[BOS, UNK, EOS], &v).unwrap(), "<unk>");
        assert!(matches!(detokenize(&[9], &v), Err(Error::TokenOutOfRange { id: 9, .. })));
    }

    #[test]
    fn bow_examples() {
        let v = vocab_of(&["a", "b"]);
        assert_eq!(bow_vector("a a b", &v), vec![0.0, 0.0, 0.0, 0.0, 2.0, 1.0]);
        assert_eq!(bow_vector("", &v), vec![0.0; 6]);
        assert_eq!(bow_vector("a z", &v), vec![0.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn load_corpus_formats() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.tsv");
        std::fs::write(&p, "1\thello\n0\tbye\n").unwrap();
        let c = load_corpus(&p).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.sentences[0].label.as_deref(), Some("1"));
        assert_eq!(c.sentences[1].text, "bye");

        std::fs::write(&p, "hello\n\n").unwrap();
        let c = load_corpus(&p).unwrap();
        assert_eq!(c.sentences, vec![Sentence { text: "hello".into(), label: None }]);

        std::fs::write(&p, b"ok\n\xff\xfe\n").unwrap();
        match load_corpus(&p) {
            Err(Error::CorpusFormat { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected format error, got {other:?}"),
        }
        assert!(matches!(load_corpus(dir.path().join("missing")), Err(Error::Io { .. })));
    }

    #[test]
    fn vocab_is_deterministic() {
        let c = Corpus::from_texts(&["the cat sat", "the dog sat", "a cat ran"]).unwrap();
        let a = build_vocab(&c, 1).unwrap();
        let b = build_vocab(&c, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(&a.tokens()[4..7], &["cat", "sat", "the"]);
    }

    proptest! {
        #[test]
        fn detokenize_inverts_tokenize(words in proptest::collection::vec(0usize..5, 0..20)) {
            let pool = ["x", "yy", "z", ",", "."];
            let v = vocab_of(&pool);
            let text = words.iter().map(|&i| pool[i]).collect::<Vec<_>>().join(" ");
            let seq = tokenize(&text, &v);
            prop_assert_eq!(detokenize(&seq.ids, &v).unwrap(), text);
        }

        #[test]
        fn bow_is_order_free_and_additive(a in "[abc ]{0,20}", b in "[abc ]{0,20}") {
            let v = vocab_of(&["a", "b"]);
            let mut rev: Vec<&str> = a.split_whitespace().collect();
            rev.reverse();
            prop_assert_eq!(bow_vector(&a, &v), bow_vector(&rev.join(" "), &v));
            let joined = format!("{a} {b}");
            let sum: Vec<f64> = bow_vector(&a, &v).iter().zip(bow_vector(&b, &v)).map(|(x, y)| x + y).collect();
            prop_assert_eq!(bow_vector(&joined, &v), sum);
        }
    }
}
