//! AWGN and Rayleigh channels: measured SNR and the fade gain distribution.

use num_complex::Complex64;
use semlink::chancodec::{mean_power, power_normalize};
use semlink::channel::{awgn, equalize, rayleigh_fade, sample_gain, SnrDb};
use semlink::rng::{derive_seed, seeded};
use semlink::stats::{ks_p_value, ks_statistic, rayleigh_cdf};
use rand::Rng;

fn main() -> semlink::error::Result<()> {
    let mut rng = seeded(1);
    let raw: Vec<Complex64> = (0..100_000).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
    let x = power_normalize(&raw).symbols;
    println!("input power {:.4}", mean_power(&x));

    for db in [0.0, 10.0, 20.0] {
        let y = awgn(&x, SnrDb::new(db)?, 42);
        let noise: Vec<Complex64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
        let measured = 10.0 * (mean_power(&x) / mean_power(&noise)).log10();
        println!("awgn  target {db:5.1} dB  measured {measured:6.3} dB");
    }

    let (faded, real) = rayleigh_fade(&x[..16], SnrDb::new(15.0)?, 9);
    let eq = equalize(&faded, &real)?;
    println!("rayleigh h = {:.3}, first symbol {:.3} -> {:.3}", real.h, x[0], eq[0]);

    let gains: Vec<f64> = (0..20_000).map(|i| sample_gain(derive_seed(5, "gain", i)).norm()).collect();
    let d = ks_statistic(&gains, |r| rayleigh_cdf(r, 0.5f64.sqrt()));
    println!("|h| vs Rayleigh(1/sqrt 2): KS D {d:.4}, p {:.3}", ks_p_value(d, gains.len()));
    Ok(())
}
