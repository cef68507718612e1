//! Normalization, vocabulary building and the token round trip.

use semlink::textcore::{bow_vector, build_vocab, detokenize, normalize, tokenize, Corpus};

fn main() -> semlink::error::Result<()> {
    let corpus = Corpus::from_texts(&[
        "The kids played in the garden near the river.",
        "Act now, your ticket won the weekly lottery!",
        "The team is cooking dinner after lunch.",
    ])?;
    let vocab = build_vocab(&corpus, 1)?;
    println!("vocab size {}", vocab.size());

    let text = "The kids won the lottery near the moon!";
    println!("normalized {:?}", normalize(text));

    let seq = tokenize(text, &vocab);
    println!("ids        {:?}", seq.ids);
    // "moon" is not in the vocabulary and comes back as <unk>
    println!("back       {}", detokenize(&seq.ids, &vocab)?);

    let bow = bow_vector(text, &vocab);
    let nonzero: Vec<_> = bow.iter().enumerate().filter(|(_, &c)| c > 0.0).map(|(i, c)| (vocab.token(i as u32).unwrap(), *c)).collect();
    println!("bag of words {nonzero:?}");
    Ok(())
}
