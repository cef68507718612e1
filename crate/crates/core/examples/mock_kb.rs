//! The deterministic mock knowledge base: disambiguation, correction and
//! SNR-directed compression.

use semlink::fuzzyctl::{PromptDirective, SnrClass};
use semlink::kb::{Background, KbBackend, MockKb};
use semlink::textcore::load_corpus;

fn main() -> semlink::error::Result<()> {
    let kb = MockKb::default();
    let bg = Background::new("alice", &["Alice has given birth to a child"]);

    let r = kb.disambiguate("I can't bear children; they seldom listen to me.", &bg);
    println!("disambiguate: {}", r.text);
    let r = kb.correct("Alice can't tolerate the presence of children; they always listen to her.", &bg);
    println!("correct:      {}", r.text);

    let text = "A young child, with a beaming smile, eagerly slides down the slide.";
    for class in SnrClass::ALL {
        let r = kb.kb_encode(text, &PromptDirective::for_class(class));
        println!("{:>6}: {}", class.name(), r.text);
    }

    // primed on a corpus, <unk> slots are filled from its bigram table
    let corpus = load_corpus(concat!(env!("CARGO_MANIFEST_DIR"), "/data/demo_corpus.tsv"))?;
    let primed = MockKb::with_corpus(&corpus);
    let r = primed.correct("The kids played in the <unk> near the river.", &Background::default());
    println!("unk fill:     {}", r.text);
    Ok(())
}
