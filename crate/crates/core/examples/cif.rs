//! Continuous integrate-and-fire over per-frame weights.

use semlink::cif::{cif_aggregate, WeightSequence};
use semlink::tensor::Mat;

fn main() -> semlink::error::Result<()> {
    let weights = WeightSequence(vec![0.3, 0.5, 0.4, 0.9, 0.2, 0.3]);
    let frames = Mat::from_rows(&[
        vec![1.0, 0.0],
        vec![0.0, 1.0],
        vec![1.0, 1.0],
        vec![2.0, 0.0],
        vec![0.0, 2.0],
        vec![1.0, 0.0],
    ])?;
    let out = cif_aggregate(&weights, &frames, 0.4)?;
    for s in &out.segments {
        println!(
            "frames {:?} weight {:.2}{} -> {:.3?}",
            s.span,
            s.consumed_weight,
            if s.is_tail { " (tail)" } else { "" },
            s.vector
        );
    }
    println!("discarded {:.3}", out.discarded);
    Ok(())
}
