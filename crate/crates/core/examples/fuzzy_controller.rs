//! The five-layer fuzzy controller turning an SNR into a KB directive.

use semlink::channel::SnrDb;
use semlink::fuzzyctl::{controller_forward, directive_for, FuzzyParams};

fn main() -> semlink::error::Result<()> {
    let params = FuzzyParams::default();
    println!("{:>6} {:>8} {:>16} {:>6}", "snr", "class", "range", "ratio");
    for db in [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 30.0] {
        let d = directive_for(SnrDb::new(db)?, &params)?;
        println!(
            "{db:6.1} {:>8} [{:.2}, {:.2}] {:6.3}",
            d.snr_class.name(),
            d.length_ratio_range.0,
            d.length_ratio_range.1,
            d.recommended_ratio
        );
    }

    let t = controller_forward(SnrDb::new(7.5)?, &params)?;
    println!("\nlayer outputs at 7.5 dB");
    println!("  membership {:.4?}", t.o1);
    println!("  firing     {:.4?}", t.o2);
    println!("  normalized {:.4?}", t.o3);
    println!("  consequent {:.4?}", t.o4);
    println!("  softmax    {:.4?}", t.o5);
    Ok(())
}
