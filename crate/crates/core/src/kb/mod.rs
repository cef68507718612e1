//! Private knowledge base: disambiguation, correction, and SNR-directed
//! compression/expansion of text.
//!
//! Two backends share [`KbBackend`]: [`MockKb`], a pure rule-driven
//! implementation used by every test, and [`LlmKb`], an HTTP chat-completion
//! client. Every operation is total: a failing backend hands back its input
//! with `pass_through` set.

mod cache;
mod llm;
mod mock;
mod templates;

use serde::{Deserialize, Serialize};

use crate::fuzzyctl::PromptDirective;

pub use cache::KbCache;
pub use llm::{LlmClientConfig, LlmKb};
pub use mock::{Lexicon, MockKb};
pub use templates::{render_prompt, template_ids, TEMPLATE_VERSION};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Background {
    pub user_id: String,
    pub facts: Vec<String>,
}

impl Background {
    pub fn new(user_id: impl Into<String>, facts: &[&str]) -> Self {
        Background { user_id: user_id.into(), facts: facts.iter().map(|s| s.to_string()).collect() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbReply {
    pub text: String,
    pub pass_through: bool,
    /// The encoder could not reach the requested ratio without dropping
    /// protected words.
    pub ratio_unreachable: bool,
}

impl KbReply {
    pub fn ok(text: impl Into<String>) -> Self {
        KbReply { text: text.into(), ..Default::default() }
    }

    pub fn passed_through(text: &str) -> Self {
        KbReply { text: text.to_string(), pass_through: true, ratio_unreachable: false }
    }
}

/// One audited backend call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KbExchange {
    pub backend: String,
    pub template: String,
    pub prompt: String,
    pub response: String,
    pub latency_ms: u64,
    pub pass_through: bool,
    pub cached: bool,
}

pub trait KbBackend: Send + Sync {
    fn id(&self) -> &str;
    fn disambiguate(&self, text: &str, background: &Background) -> KbReply;
    fn correct(&self, text: &str, background: &Background) -> KbReply;
    fn kb_encode(&self, text: &str, directive: &PromptDirective) -> KbReply;
    fn kb_decode(&self, text: &str, context: &[String]) -> KbReply;
}

/// Pass-through backend (KB stage disabled).
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityKb;

impl KbBackend for IdentityKb {
    fn id(&self) -> &str {
        "identity"
    }

    fn disambiguate(&self, text: &str, _: &Background) -> KbReply {
        KbReply::ok(text)
    }

    fn correct(&self, text: &str, _: &Background) -> KbReply {
        KbReply::ok(text)
    }

    fn kb_encode(&self, text: &str, _: &PromptDirective) -> KbReply {
        KbReply::ok(text)
    }

    fn kb_decode(&self, text: &str, _: &[String]) -> KbReply {
        KbReply::ok(text)
    }
}

// ---------------------------------------------------------------------------
// word-level text pieces shared by the mock backend and metrics

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Piece {
    pub text: String,
    pub is_word: bool,
}

const UNK_MARK: &str = "<unk>";

/// Splits into words (alphanumerics with internal apostrophes, or `<unk>`)
/// and single punctuation characters.
pub(crate) fn pieces(text: &str) -> Vec<Piece> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '<' && chars[i..].iter().take(5).collect::<String>() == UNK_MARK {
            out.push(Piece { text: UNK_MARK.to_string(), is_word: true });
            i += 5;
        } else if c.is_alphanumeric() {
            let mut w = String::new();
            while i < chars.len() {
                let ch = chars[i];
                let internal_apostrophe = (ch == '\'' || ch == '’')
                    && !w.is_empty()
                    && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
                if ch.is_alphanumeric() || internal_apostrophe {
                    w.push(ch);
                    i += 1;
                } else {
                    break;
                }
            }
            out.push(Piece { text: w, is_word: true });
        } else {
            out.push(Piece { text: c.to_string(), is_word: false });
            i += 1;
        }
    }
    out
}

fn attaches_both_sides(p: &str) -> bool {
    matches!(p, "'" | "’" | "-")
}

fn opens(p: &str) -> bool {
    matches!(p, "(" | "[" | "{" | "\"" | "“")
}

/// Joins pieces with conventional spacing and tidies punctuation left
/// behind by dropped words.
pub(crate) fn render(pieces: &[Piece]) -> String {
    let mut cleaned: Vec<&Piece> = Vec::with_capacity(pieces.len());
    for p in pieces {
        if !p.is_word && matches!(p.text.as_str(), "," | ";" | ":") {
            match cleaned.last() {
                None => continue,
                Some(prev) if !prev.is_word && !attaches_both_sides(&prev.text) => continue,
                _ => {}
            }
        }
        if !p.is_word && matches!(p.text.as_str(), "." | "!" | "?") {
            while cleaned.last().is_some_and(|q| !q.is_word && matches!(q.text.as_str(), "," | ";" | ":")) {
                cleaned.pop();
            }
        }
        cleaned.push(p);
    }
    while cleaned.last().is_some_and(|q| !q.is_word && matches!(q.text.as_str(), "," | ";" | ":")) {
        cleaned.pop();
    }
    let mut s = String::new();
    let mut glue_next = false;
    for p in cleaned {
        let needs_space = !s.is_empty()
            && !glue_next
            && (p.is_word || opens(&p.text))
            && !attaches_both_sides(&p.text);
        if needs_space {
            s.push(' ');
        }
        s.push_str(&p.text);
        glue_next = !p.is_word && (attaches_both_sides(&p.text) || opens(&p.text));
    }
    s
}

#[cfg(test)]
pub(crate) fn word_count(text: &str) -> usize {
    pieces(text).iter().filter(|p| p.is_word).count()
}

/// Lowercased words of `text`.
pub fn words(text: &str) -> Vec<String> {
    pieces(text).into_iter().filter(|p| p.is_word).map(|p| p.text.to_lowercase()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pieces_and_render_round_trip() {
        let t = "A young child, with a beaming smile, eagerly slides down the slide.";
        assert_eq!(render(&pieces(t)), t);
        assert_eq!(word_count(t), 12);
        let t = "I can't bear children; they seldom listen to me.";
        assert_eq!(render(&pieces(t)), t);
        assert_eq!(word_count(t), 9);
    }

    #[test]
    fn render_repairs_detokenized_spacing() {
        assert_eq!(render(&pieces("a child , smiling , slides .")), "a child, smiling, slides.");
        assert_eq!(render(&pieces("i can ' t go")), "i can't go");
        assert_eq!(render(&pieces("<unk> morning")), "<unk> morning");
    }

    #[test]
    fn render_drops_orphaned_separators() {
        let p = vec![
            Piece { text: "a".into(), is_word: true },
            Piece { text: ",".into(), is_word: false },
            Piece { text: ",".into(), is_word: false },
            Piece { text: "b".into(), is_word: true },
            Piece { text: ",".into(), is_word: false },
            Piece { text: ".".into(), is_word: false },
        ];
        assert_eq!(render(&p), "a, b.");
    }

    #[test]
    fn identity_backend_is_pass_free() {
        let kb = IdentityKb;
        let r = kb.kb_encode("x y", &PromptDirective::for_class(crate::fuzzyctl::SnrClass::Low));
        assert_eq!(r, KbReply::ok("x y"));
    }
}
