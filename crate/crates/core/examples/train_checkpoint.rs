//! Joint training on a slice of the demo corpus, then a checkpoint round
//! trip. Pass an epoch count as the first argument (default 30).

use semlink::fuzzyctl::FuzzyParams;
use semlink::kb::MockKb;
use semlink::textcore::{build_vocab, load_corpus, Corpus};
use semlink::trainer::{load_checkpoint, save_checkpoint, smoothed, train_joint, Augment, Checkpoint, TrainConfig, TrainState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(30);
    let full = load_corpus(concat!(env!("CARGO_MANIFEST_DIR"), "/data/demo_corpus.tsv"))?;
    let corpus = Corpus::from_sentences(full.sentences[..40].to_vec())?;
    let vocab = build_vocab(&corpus, 1)?;
    let mut state = TrainState::toy(vocab, 7)?;

    let config = TrainConfig { epochs, learning_rate: 3e-3, lr_final_fraction: 0.1, ..TrainConfig::default() };
    let kb = MockKb::with_corpus(&corpus);
    let fuzzy = FuzzyParams::default();
    let t = std::time::Instant::now();
    let out = train_joint(&corpus, &mut state, &config, Some(Augment { kb: &kb, fuzzy: &fuzzy }))?;
    println!("{} steps in {:.1}s", out.steps, t.elapsed().as_secs_f64());

    for r in out.history.iter().step_by((out.history.len() / 8).max(1)) {
        println!("step {:4}  ce {:.3}  mi {:.3}  total {:.3}", r.step, r.ce, r.mi_lb, r.total);
    }
    let smooth = smoothed(&out.history, 10);
    println!("smoothed total {:.3} -> {:.3}", smooth[0], smooth[smooth.len() - 1]);

    let path = std::env::temp_dir().join("semlink-example.ckpt");
    let ckpt = Checkpoint { state, fuzzy, train_config: Some(config) };
    let hash = save_checkpoint(&path, &ckpt)?;
    let back = load_checkpoint(&path)?;
    println!("saved {} ({})", path.display(), &hash[..16]);
    println!("reloaded identical: {}", back == ckpt);
    Ok(())
}
