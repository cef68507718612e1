//! Sweep a freshly trained model over SNR on both channels, with and
//! without the knowledge base.

mod common;

use semlink::channel::{ChannelKind, SnrDb};
use semlink::metrics::{fit_classifier, snr_sweep};

fn main() -> semlink::error::Result<()> {
    let corpus = common::demo_corpus(60);
    let stack = common::quick_stack(&corpus, 40);
    let clf = fit_classifier(&corpus, 1.0)?;
    let snrs: Vec<SnrDb> = [-5.0, 0.0, 5.0, 10.0, 15.0, 20.0].iter().map(|&d| SnrDb(d)).collect();
    let seeds = [1, 2, 3];

    for kind in [ChannelKind::Awgn, ChannelKind::Rayleigh] {
        for (name, s) in [("kb", stack.clone()), ("no kb", stack.clone().without_kb())] {
            let r = snr_sweep(&corpus, &s, kind, &snrs, &seeds, &clf)?;
            println!("{} / {name}  (worst adjacent drop {:.3})", kind.name(), r.worst_adjacent_drop());
            for m in &r.summary {
                println!(
                    "  {:5.1} dB  acc {:.3}  bleu2 {:.3}  cos {:.3}  class {:.3}  fails {}",
                    m.snr_db, m.token_accuracy, m.bleu2, m.cosine, m.downstream_accuracy, m.failed_trials
                );
            }
        }
    }
    Ok(())
}
