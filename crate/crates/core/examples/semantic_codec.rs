//! Untrained semantic + channel codec: shapes, a noiseless pass and the
//! reconstruction loss.

use semlink::pipeline::CodecModel;
use semlink::chancodec::channel_decode;
use semlink::semcodec::{greedy_decode, reconstruction_loss, semantic_decode, semantic_encode, CeMode};
use semlink::textcore::{build_vocab, detokenize, load_corpus, tokenize};

fn main() -> semlink::error::Result<()> {
    let corpus = load_corpus(concat!(env!("CARGO_MANIFEST_DIR"), "/data/demo_corpus.tsv"))?;
    let vocab = build_vocab(&corpus, 1)?;
    let model = CodecModel::toy(vocab.clone(), 3)?;

    let seq = tokenize("The kids played in the garden near the river.", &vocab);
    let feats = semantic_encode(&seq.ids, &model.sem)?;
    println!("{} ids -> features {}x{}", seq.len(), feats.rows(), feats.width());

    let logits = semantic_decode(&feats, &model.sem)?;
    let (ce, _) = reconstruction_loss(&logits, &seq.ids, CeMode::Reference)?;
    println!("cross entropy {ce:.2} summed over positions (uniform: {:.2})", seq.len() as f64 * (vocab.size() as f64).ln());

    let symbols = model.encode_ids(&seq.ids)?;
    println!("{} complex symbols, mean power {:.4}", symbols.len(), symbols.avg_power);
    let back = model.decode_symbols(&symbols.symbols)?;
    println!("greedy (untrained): {}", detokenize(&back, &vocab)?);
    assert_eq!(back, greedy_decode(&semantic_decode(&channel_decode(&symbols.symbols, &model.chan)?, &model.sem)?));
    Ok(())
}
