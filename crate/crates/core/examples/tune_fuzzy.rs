//! Grid-search the fuzzy consequents against reconstruction cosine.

mod common;

use semlink::channel::{ChannelKind, SnrDb};
use semlink::fuzzyctl::TuneOptions;
use semlink::pipeline::tune_fuzzy;

fn main() -> semlink::error::Result<()> {
    let corpus = common::demo_corpus(40);
    let stack = common::quick_stack(&corpus, 30);
    let snrs: Vec<SnrDb> = [-5.0, 0.0, 5.0, 10.0].iter().map(|&d| SnrDb(d)).collect();
    let opts = TuneOptions { rounds: 1, ..TuneOptions::default() };

    let out = tune_fuzzy(&corpus, &stack, ChannelKind::Awgn, &snrs, 3, &opts)?;
    println!("objective {:.4} -> {:.4} in {} evaluations", out.objective_before, out.objective_after, out.evaluations);
    println!("p {:?}", out.params.p);
    println!("q {:?}", out.params.q);
    Ok(())
}
