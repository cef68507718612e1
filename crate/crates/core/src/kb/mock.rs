//! Deterministic rule-driven KB backend.
//!
//! `kb_encode` removes words until the word count reaches
//! `round(n · ratio)`, in this order:
//!
//! 1. adverbs from the bundled modifier list, in list order;
//! 2. phrase rewrites (`"with a beaming smile"` → `"smiling"`), skipped if
//!    they would undershoot the lower bound of the band;
//! 3. adjectives from the modifier list, in list order;
//! 4. stopwords, in list order;
//! 5. remaining non-content words, rarest (by corpus count) first.
//!
//! Within a step the leftmost occurrence goes first. Content words are never
//! dropped; if the target is still not met the reply is flagged.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::{pieces, render, Background, KbBackend, KbReply, Piece, UNK_MARK};
use crate::fuzzyctl::PromptDirective;
use crate::textcore::Corpus;

const STOPWORDS: &str = include_str!("../../data/kb/stopwords.txt");
const MODIFIERS: &str = include_str!("../../data/kb/modifiers.txt");
const CONTENT_WORDS: &str = include_str!("../../data/kb/content_words.txt");
const REWRITES: &str = include_str!("../../data/kb/rewrites.tsv");
const RULES: &str = include_str!("../../data/kb/rules.tsv");

/// Slack allowed around the directive band, in ratio units.
pub const RATIO_SLACK: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub operation: String,
    pub fact_keyword: String,
    pub pattern: String,
    pub replacement: String,
}

/// Word lists and rule tables driving the mock backend.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lexicon {
    pub stopwords: Vec<String>,
    pub adverbs: Vec<String>,
    pub adjectives: Vec<String>,
    pub content: HashSet<String>,
    pub rewrites: Vec<(Vec<String>, Vec<String>)>,
    pub rules: Vec<Rule>,
}

fn data_lines(src: &str) -> impl Iterator<Item = &str> {
    src.lines().map(str::trim_end).filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
}

impl Lexicon {
    /// The lists bundled with the crate.
    pub fn bundled() -> Self {
        let stopwords = data_lines(STOPWORDS).map(|l| l.trim().to_lowercase()).collect();
        let mut adverbs = Vec::new();
        let mut adjectives = Vec::new();
        for line in data_lines(MODIFIERS) {
            match line.split_once('\t') {
                Some(("adv", w)) => adverbs.push(w.trim().to_lowercase()),
                Some(("adj", w)) => adjectives.push(w.trim().to_lowercase()),
                _ => panic!("malformed modifier line {line:?}"),
            }
        }
        let content = data_lines(CONTENT_WORDS).map(|l| l.trim().to_lowercase()).collect();
        let split = |s: &str| s.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>();
        let rewrites = data_lines(REWRITES)
            .map(|l| {
                let (p, r) = l.split_once('\t').expect("rewrite needs a tab");
                (split(p), r.split_whitespace().map(String::from).collect())
            })
            .collect();
        let rules = data_lines(RULES)
            .map(|l| {
                let f: Vec<&str> = l.split('\t').collect();
                assert_eq!(f.len(), 4, "rule needs four fields: {l:?}");
                Rule {
                    operation: f[0].to_string(),
                    fact_keyword: f[1].to_string(),
                    pattern: f[2].to_string(),
                    replacement: f[3].to_string(),
                }
            })
            .collect();
        Lexicon { stopwords, adverbs, adjectives, content, rewrites, rules }
    }

    pub fn is_content(&self, word: &str) -> bool {
        self.content.contains(&word.to_lowercase())
    }
}

/// Rule-based backend. Pure: the same inputs give the same outputs.
#[derive(Clone, Debug)]
pub struct MockKb {
    lexicon: Lexicon,
    unigrams: BTreeMap<String, usize>,
    bigrams: HashMap<(String, String), usize>,
}

const START: &str = "<s>";
const END: &str = "</s>";

impl Default for MockKb {
    fn default() -> Self {
        MockKb::new(Lexicon::bundled())
    }
}

impl MockKb {
    pub fn new(lexicon: Lexicon) -> Self {
        MockKb { lexicon, unigrams: BTreeMap::new(), bigrams: HashMap::new() }
    }

    /// Bundled lexicon plus unigram/bigram statistics from `corpus`, used for
    /// rare-word dropping and `<unk>` repair.
    pub fn with_corpus(corpus: &Corpus) -> Self {
        let mut kb = MockKb::default();
        for text in corpus.texts() {
            let ws = super::words(text);
            let mut prev = START.to_string();
            for w in ws {
                *kb.unigrams.entry(w.clone()).or_default() += 1;
                *kb.bigrams.entry((prev, w.clone())).or_default() += 1;
                prev = w;
            }
            *kb.bigrams.entry((prev, END.to_string())).or_default() += 1;
        }
        kb
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    fn bigram(&self, a: &str, b: &str) -> usize {
        self.bigrams.get(&(a.to_string(), b.to_string())).copied().unwrap_or(0)
    }

    fn apply_rules(&self, operation: &str, text: &str, background: &Background) -> String {
        let mut out = text.to_string();
        for rule in self.lexicon.rules.iter().filter(|r| r.operation == operation) {
            let kw = rule.fact_keyword.to_ascii_lowercase();
            let Some(fact) = background.facts.iter().find(|f| f.to_ascii_lowercase().contains(&kw)) else {
                continue;
            };
            let name = fact.split_whitespace().next().unwrap_or("");
            let replacement = rule.replacement.replace("{name}", name);
            out = replace_ascii_ci(&out, &rule.pattern, &replacement);
        }
        out
    }

    /// Fills each `<unk>` with the word that best fits its neighbours under
    /// the corpus bigram counts (ties: more frequent, then lexicographic).
    fn repair_unknowns(&self, text: &str) -> String {
        let mut ps = pieces(text);
        if self.unigrams.is_empty() || !ps.iter().any(|p| p.text == UNK_MARK) {
            return text.to_string();
        }
        let word_idx: Vec<usize> = (0..ps.len()).filter(|&i| ps[i].is_word).collect();
        for (k, &i) in word_idx.iter().enumerate() {
            if ps[i].text != UNK_MARK {
                continue;
            }
            let prev = if k == 0 { START.to_string() } else { ps[word_idx[k - 1]].text.to_lowercase() };
            let next = word_idx.get(k + 1).map_or(END.to_string(), |&j| ps[j].text.to_lowercase());
            let mut best: Option<(usize, usize, &str)> = None;
            for (w, &count) in &self.unigrams {
                let score = self.bigram(&prev, w) + self.bigram(w, &next);
                let better = match best {
                    None => true,
                    Some((bs, bc, _)) => score > bs || (score == bs && count > bc),
                };
                if better {
                    best = Some((score, count, w));
                }
            }
            if let Some((_, _, w)) = best {
                ps[i].text = w.to_string();
            }
        }
        render(&ps)
    }

    /// Compresses toward `round(n · ratio)` words, never leaving the band
    /// `[lo − slack, hi + slack]` through a phrase rewrite.
    pub fn compress(&self, text: &str, ratio: f64, band: (f64, f64)) -> KbReply {
        let mut ps = pieces(text);
        let n = ps.iter().filter(|p| p.is_word).count();
        if n == 0 || ratio >= 1.0 {
            return KbReply::ok(text);
        }
        let nf = n as f64;
        let floor = ((band.0 - RATIO_SLACK) * nf - 1e-9).ceil().max(1.0) as usize;
        let ceil = ((band.1 + RATIO_SLACK) * nf + 1e-9).floor() as usize;
        let target = ((nf * ratio).round() as usize).clamp(floor.min(n), ceil.max(floor).min(n));
        let mut count = n;

        let drop_listed = |ps: &mut Vec<Piece>, list: &[String], count: &mut usize| {
            for w in list {
                while *count > target {
                    let Some(i) = ps.iter().position(|p| p.is_word && p.text.to_lowercase() == *w) else {
                        break;
                    };
                    ps.remove(i);
                    *count -= 1;
                }
            }
        };

        drop_listed(&mut ps, &self.lexicon.adverbs, &mut count);

        for (pattern, replacement) in &self.lexicon.rewrites {
            if count <= target {
                break;
            }
            let shrink = pattern.len().saturating_sub(replacement.len());
            if shrink == 0 || count - shrink < floor {
                continue;
            }
            if let Some(start) = find_word_run(&ps, pattern) {
                let end = start + pattern.len();
                let repl = replacement.iter().map(|w| Piece { text: w.clone(), is_word: true });
                ps.splice(start..end, repl);
                count -= shrink;
            }
        }

        drop_listed(&mut ps, &self.lexicon.adjectives, &mut count);
        drop_listed(&mut ps, &self.lexicon.stopwords, &mut count);

        while count > target {
            let mut best: Option<(usize, usize)> = None;
            for (i, p) in ps.iter().enumerate() {
                if !p.is_word || self.lexicon.is_content(&p.text) || p.text == UNK_MARK {
                    continue;
                }
                let freq = self.unigrams.get(&p.text.to_lowercase()).copied().unwrap_or(0);
                if best.is_none_or(|(_, bf)| freq < bf) {
                    best = Some((i, freq));
                }
            }
            let Some((i, _)) = best else { break };
            ps.remove(i);
            count -= 1;
        }

        let out = render(&ps);
        KbReply { text: out, pass_through: false, ratio_unreachable: count > ceil }
    }
}

/// Index of the first piece of a contiguous run of words equal to `pattern`
/// (case-insensitive). Punctuation is not allowed inside the run.
fn find_word_run(ps: &[Piece], pattern: &[String]) -> Option<usize> {
    if pattern.is_empty() || ps.len() < pattern.len() {
        return None;
    }
    (0..=ps.len() - pattern.len()).find(|&s| {
        pattern.iter().enumerate().all(|(j, w)| ps[s + j].is_word && ps[s + j].text.to_lowercase() == *w)
    })
}

fn replace_ascii_ci(haystack: &str, pattern: &str, replacement: &str) -> String {
    if pattern.is_empty() {
        return haystack.to_string();
    }
    let lower = haystack.to_ascii_lowercase();
    let pat = pattern.to_ascii_lowercase();
    let mut out = String::with_capacity(haystack.len());
    let mut last = 0;
    for (i, _) in lower.match_indices(&pat) {
        out.push_str(&haystack[last..i]);
        out.push_str(replacement);
        last = i + pat.len();
    }
    out.push_str(&haystack[last..]);
    out
}

fn restore_surface(text: &str) -> String {
    let ps = pieces(text);
    if ps.is_empty() {
        return String::new();
    }
    let mut s = render(&ps);
    if let Some(first) = s.chars().next() {
        if first.is_lowercase() {
            let upper: String = first.to_uppercase().collect();
            s.replace_range(..first.len_utf8(), &upper);
        }
    }
    if !s.ends_with(['.', '!', '?']) {
        s.push('.');
    }
    s
}

impl KbBackend for MockKb {
    fn id(&self) -> &str {
        "mock"
    }

    fn disambiguate(&self, text: &str, background: &Background) -> KbReply {
        KbReply::ok(self.apply_rules("disambiguate", text, background))
    }

    fn correct(&self, text: &str, background: &Background) -> KbReply {
        let repaired = self.repair_unknowns(text);
        KbReply::ok(self.apply_rules("correct", &repaired, background))
    }

    fn kb_encode(&self, text: &str, directive: &PromptDirective) -> KbReply {
        if directive.is_identity() {
            return KbReply::ok(text);
        }
        self.compress(text, directive.recommended_ratio, directive.length_ratio_range)
    }

    fn kb_decode(&self, text: &str, _context: &[String]) -> KbReply {
        KbReply::ok(restore_surface(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;
    use crate::channel::SnrDb;
    use crate::fuzzyctl::{directive_for, FuzzyParams, SnrClass};
    use crate::kb::{word_count, words};

    const SLIDE: &str = "A young child, with a beaming smile, eagerly slides down the slide.";

    fn alice() -> Background {
        Background::new("alice", &["Alice has given birth to a child"])
    }

    #[test]
    fn disambiguation_example() {
        let kb = MockKb::default();
        let out = kb.disambiguate("I can't bear children; they seldom listen to me.", &alice());
        assert_eq!(out.text, "Alice can't tolerate the presence of children; they seldom listen to her.");
        assert!(!out.pass_through);
        let plain = kb.disambiguate("Nothing to see here.", &alice());
        assert_eq!(plain.text, "Nothing to see here.");
    }

    #[test]
    fn correction_examples() {
        let kb = MockKb::default();
        let out = kb.correct("Alice can't tolerate the presence of children; they always listen to her.", &alice());
        assert!(out.text.contains("they barely listen to"), "{}", out.text);
        assert_eq!(kb.correct("All fine today.", &alice()).text, "All fine today.");

        let corpus = Corpus::from_texts(&["Good morning, see you.", "Good night.", "See you in the morning."]).unwrap();
        let kb = MockKb::with_corpus(&corpus);
        assert_eq!(kb.correct("<unk> morning", &Background::default()).text, "good morning");
    }

    #[test]
    fn table_sentence_at_low_snr() {
        let kb = MockKb::default();
        let d = directive_for(SnrDb(0.0), &FuzzyParams::default()).unwrap();
        assert_eq!(d.snr_class, SnrClass::Low);
        let out = kb.kb_encode(SLIDE, &d);
        assert_eq!(out.text, "A young child, smiling, slides down the slide.");
        assert!(!out.ratio_unreachable);
    }

    #[test]
    fn table_sentence_at_high_snr_is_unchanged() {
        let kb = MockKb::default();
        let d = directive_for(SnrDb(25.0), &FuzzyParams::default()).unwrap();
        assert_eq!(kb.kb_encode(SLIDE, &d).text, SLIDE);
    }

    #[test]
    fn table_sentence_at_middle_snr_stays_in_band() {
        let kb = MockKb::default();
        let d = directive_for(SnrDb(10.0), &FuzzyParams::default()).unwrap();
        let out = kb.kb_encode(SLIDE, &d);
        let r = word_count(&out.text) as f64 / 12.0;
        assert!((0.75..=0.95).contains(&r), "{} ({r})", out.text);
        assert_eq!(out.text, "A young child, with a smile, slides down the slide.");
    }

    #[test]
    fn priority_order_by_hand() {
        // n = 6, target round(6 · 0.67) = 4: adverb "very" goes first, then
        // the first listed adjective present ("big").
        let kb = MockKb::default();
        let out = kb.compress("the very big red dog ran", 0.67, (0.62, 0.72));
        assert_eq!(out.text, "the red dog ran");
    }

    #[test]
    fn all_content_words_is_flagged() {
        let kb = MockKb::default();
        let out = kb.compress("alice called grandma", 0.5, (0.45, 0.55));
        assert_eq!(out.text, "alice called grandma");
        assert!(out.ratio_unreachable);
    }

    #[test]
    fn decode_restores_surface() {
        let kb = MockKb::default();
        assert_eq!(
            kb.kb_decode("a young child smiling slides down the slide", &[]).text,
            "A young child smiling slides down the slide."
        );
        assert_eq!(kb.kb_decode("", &[]).text, "");
        let w = words("a young child , smiling , slides .");
        assert_eq!(words(&kb.kb_decode("a young child , smiling , slides .", &[]).text), w);
    }

    fn demo_texts() -> Vec<String> {
        let corpus = crate::textcore::load_corpus(concat!(env!("CARGO_MANIFEST_DIR"), "/data/demo_corpus.tsv")).unwrap();
        corpus.texts().map(str::to_string).collect()
    }

    fn primed() -> &'static (MockKb, Vec<String>) {
        static KB: std::sync::OnceLock<(MockKb, Vec<String>)> = std::sync::OnceLock::new();
        KB.get_or_init(|| {
            let corpus = crate::textcore::load_corpus(concat!(env!("CARGO_MANIFEST_DIR"), "/data/demo_corpus.tsv")).unwrap();
            (MockKb::with_corpus(&corpus), demo_texts())
        })
    }

    #[test]
    fn every_long_corpus_sentence_meets_its_band() {
        let (kb, texts) = primed();
        let mut checked = 0;
        for t in texts.iter().filter(|t| word_count(t) >= 8) {
            for class in [SnrClass::Low, SnrClass::Mid] {
                let d = PromptDirective::for_class(class);
                let out = kb.kb_encode(t, &d);
                let r = word_count(&out.text) as f64 / word_count(t) as f64;
                let (lo, hi) = d.length_ratio_range;
                assert!(
                    out.ratio_unreachable || (lo - RATIO_SLACK - 1e-9..=hi + RATIO_SLACK + 1e-9).contains(&r),
                    "{class:?} {t:?} -> {:?} ({r})",
                    out.text
                );
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    proptest! {
        #[test]
        fn encode_then_decode_keeps_content_words(i in 0usize..1000, class in prop::sample::select(SnrClass::ALL.to_vec())) {
            let (kb, texts) = primed();
            let t = &texts[i % texts.len()];
            let enc = kb.kb_encode(t, &PromptDirective::for_class(class));
            let dec = kb.kb_decode(&enc.text, &[]);
            let have: BTreeSet<String> = words(&dec.text).into_iter().collect();
            for w in words(&enc.text).into_iter().filter(|w| kb.lexicon().is_content(w)) {
                prop_assert!(have.contains(&w), "{w} lost: {:?}", dec.text);
            }
            // a rewrite may fold a content word into a shorter form
            let rewritten: BTreeSet<&String> = kb.lexicon().rewrites.iter().flat_map(|(from, _)| from).collect();
            for w in words(t).into_iter().filter(|w| kb.lexicon().is_content(w) && !rewritten.contains(w)) {
                prop_assert!(enc.ratio_unreachable || have.contains(&w), "{w} dropped from {t:?}: {:?}", enc.text);
            }
        }

        #[test]
        fn operations_are_total_and_pure(text in "\\PC{0,60}", class in prop::sample::select(SnrClass::ALL.to_vec())) {
            let (kb, _) = primed();
            let bg = alice();
            let d = PromptDirective::for_class(class);
            prop_assert_eq!(kb.disambiguate(&text, &bg), kb.disambiguate(&text, &bg));
            prop_assert_eq!(kb.correct(&text, &bg), kb.correct(&text, &bg));
            prop_assert_eq!(kb.kb_encode(&text, &d), kb.kb_encode(&text, &d));
            prop_assert_eq!(kb.kb_decode(&text, &[]), kb.kb_decode(&text, &[]));
        }
    }
}
