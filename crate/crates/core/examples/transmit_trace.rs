//! One sentence through every stage, printing the per-stage trace.
//! Usage: transmit_trace [snr_db] [awgn|rayleigh]

mod common;

use semlink::channel::{ChannelKind, SnrDb};
use semlink::kb::Background;
use semlink::pipeline::round_trip_one;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let snr: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5.0);
    let kind = match args.next().as_deref() {
        Some("rayleigh") => ChannelKind::Rayleigh,
        _ => ChannelKind::Awgn,
    };

    let corpus = common::demo_corpus(60);
    let mut stack = common::quick_stack(&corpus, 40);
    stack.tracing = true;
    stack.background = Background::new("alice", &["Alice has a pet cat named Tom."]);

    let text = &corpus.sentences[1].text;
    let rt = round_trip_one(text, 0, &stack, kind, SnrDb::new(snr)?, 11)?;
    println!("original      {text}");
    println!("sent          {}", rt.sent_text);
    println!("reconstructed {}", rt.reconstructed.as_deref().unwrap_or("<failed>"));
    println!("token acc     {:.3}\n", rt.token_accuracy());
    if let Some(t) = &rt.trace {
        print!("{t}");
    }
    Ok(())
}
