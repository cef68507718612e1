//! `semlink` is a desk-scale semantic communication laboratory.
//!
//! Text is carried over a simulated wireless link by a stack of codecs:
//!
//! ```text
//! text ─► KB disambiguate ─► KB encode (fuzzy SNR directive) ─► tokenize
//!      ─► semantic encoder ─► channel encoder ─► AWGN / Rayleigh channel
//!      ─► channel decoder ─► semantic decoder ─► KB correct ─► KB decode ─► text
//! ```
//!
//! The semantic and channel codecs are trained jointly through the noisy
//! channel under a random SNR; the knowledge base (an LLM client or a
//! deterministic mock) is steered by a five-layer fuzzy controller whose
//! consequents are tuned separately for cosine similarity.
//!
//! Runnable walkthroughs live in `examples/`; the `semlink` binary exposes
//! the experiment commands (`train`, `sweep`, `transmit`, `tune-fuzzy`,
//! `ratio`).

pub mod channel;
pub mod chancodec;
pub mod cif;
pub mod error;
pub mod fuzzyctl;
pub mod harness;
pub mod kb;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod semcodec;
pub mod stats;
pub mod tensor;
pub mod textcore;
pub mod trainer;

pub use channel::{ChannelKind, SnrDb};
pub use error::{Error, Result};
pub use fuzzyctl::{FuzzyParams, PromptDirective, SnrClass};
pub use textcore::{Corpus, TokenSequence, Vocab};
