// Small trained model shared by the sweep / transmit / tuning examples.

use std::sync::Arc;

use semlink::fuzzyctl::FuzzyParams;
use semlink::kb::MockKb;
use semlink::pipeline::{CodecModel, Stack};
use semlink::textcore::{build_vocab, load_corpus, Corpus};
use semlink::trainer::{train_joint, Augment, TrainConfig, TrainState};

pub fn demo_corpus(n: usize) -> Corpus {
    let full = load_corpus(concat!(env!("CARGO_MANIFEST_DIR"), "/data/demo_corpus.tsv")).expect("demo corpus");
    let n = n.min(full.len());
    Corpus::from_sentences(full.sentences[..n].to_vec()).unwrap()
}

pub fn quick_model(corpus: &Corpus, epochs: usize) -> CodecModel {
    let vocab = build_vocab(corpus, 1).unwrap();
    let mut state = TrainState::toy(vocab, 7).unwrap();
    let config = TrainConfig { epochs, learning_rate: 3e-3, lr_final_fraction: 0.1, ..TrainConfig::default() };
    let kb = MockKb::with_corpus(corpus);
    let fuzzy = FuzzyParams::default();
    eprintln!("training {} sentences for {epochs} epochs...", corpus.len());
    train_joint(corpus, &mut state, &config, Some(Augment { kb: &kb, fuzzy: &fuzzy })).unwrap();
    state.model
}

pub fn quick_stack(corpus: &Corpus, epochs: usize) -> Stack {
    Stack::with_mock_kb(Arc::new(quick_model(corpus, epochs)), corpus)
}
