//! Physical channel simulation: AWGN and flat Rayleigh fading with perfect
//! CSI zero-forcing at the receiver.
//!
//! Every draw is a pure function of `(input, snr, seed)`.

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// At or above this SNR the channel is treated as noiseless.
pub const NOISELESS_SNR_DB: f64 = 200.0;
/// Minimum `|h|` the equalizer accepts.
pub const DEEP_FADE_THRESHOLD: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SnrDb(pub f64);

impl SnrDb {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::InvalidArgument(format!("SNR must be finite, got {value}")));
        }
        Ok(SnrDb(value))
    }

    pub fn db(self) -> f64 {
        self.0
    }

    pub fn is_noiseless(self) -> bool {
        self.0 >= NOISELESS_SNR_DB
    }
}

impl std::fmt::Display for SnrDb {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} dB", self.0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    #[default]
    Awgn,
    Rayleigh,
}

impl ChannelKind {
    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Awgn => "awgn",
            ChannelKind::Rayleigh => "rayleigh",
        }
    }
}

impl std::str::FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "awgn" => Ok(ChannelKind::Awgn),
            "rayleigh" => Ok(ChannelKind::Rayleigh),
            other => Err(Error::InvalidArgument(format!("unknown channel {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub h: Complex64,
    pub seed: u64,
}

/// σ² against unit signal power.
pub fn noise_power_for(snr: SnrDb) -> f64 {
    if snr.is_noiseless() {
        0.0
    } else {
        10f64.powf(-snr.0 / 10.0)
    }
}

/// `n ~ CN(0, σ² I)`: each of re/im carries σ²/2.
pub fn sample_noise(len: usize, noise_power: f64, seed: u64) -> Vec<Complex64> {
    if noise_power == 0.0 {
        return vec![Complex64::new(0.0, 0.0); len];
    }
    let mut r = rng::stream(seed, "channel.noise", 0);
    let s = (noise_power / 2.0).sqrt();
    (0..len)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut r);
            let im: f64 = StandardNormal.sample(&mut r);
            Complex64::new(re * s, im * s)
        })
        .collect()
}

/// `h ~ CN(0, 1)`.
pub fn sample_gain(seed: u64) -> Complex64 {
    let mut r = rng::stream(seed, "channel.fade", 0);
    let s = 0.5f64.sqrt();
    let re: f64 = StandardNormal.sample(&mut r);
    let im: f64 = StandardNormal.sample(&mut r);
    Complex64::new(re * s, im * s)
}

pub fn awgn(symbols: &[Complex64], snr: SnrDb, seed: u64) -> Vec<Complex64> {
    let noise = sample_noise(symbols.len(), noise_power_for(snr), seed);
    symbols.iter().zip(noise).map(|(y, n)| y + n).collect()
}

/// Block fading: one scalar gain for the whole block, then AWGN.
pub fn rayleigh_fade(symbols: &[Complex64], snr: SnrDb, seed: u64) -> (Vec<Complex64>, ChannelRealization) {
    let h = sample_gain(seed);
    let noise = sample_noise(symbols.len(), noise_power_for(snr), seed);
    let out = symbols.iter().zip(noise).map(|(y, n)| h * y + n).collect();
    (out, ChannelRealization { h, seed })
}

/// Zero-forcing with known `h`.
pub fn equalize(symbols: &[Complex64], realization: &ChannelRealization) -> Result<Vec<Complex64>> {
    let mag = realization.h.norm();
    if mag <= DEEP_FADE_THRESHOLD {
        return Err(Error::DeepFade { magnitude: mag });
    }
    Ok(symbols.iter().map(|y| y / realization.h).collect())
}

/// Channel output as seen after receiver equalization, `y + n/h`, so the
/// effective perturbation is additive and independent of the signal.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveChannel {
    pub realization: Option<ChannelRealization>,
    pub perturbation: Vec<Complex64>,
}

impl EffectiveChannel {
    pub fn sample(kind: ChannelKind, len: usize, snr: SnrDb, seed: u64) -> Result<Self> {
        let noise = sample_noise(len, noise_power_for(snr), seed);
        match kind {
            ChannelKind::Awgn => Ok(EffectiveChannel { realization: None, perturbation: noise }),
            ChannelKind::Rayleigh => {
                let realization = ChannelRealization { h: sample_gain(seed), seed };
                if realization.h.norm() <= DEEP_FADE_THRESHOLD {
                    return Err(Error::DeepFade { magnitude: realization.h.norm() });
                }
                let perturbation = noise.into_iter().map(|n| n / realization.h).collect();
                Ok(EffectiveChannel { realization: Some(realization), perturbation })
            }
        }
    }
}

/// Runs the channel and, for fading, equalizes. Returns the equalized
/// symbols and the realization used.
pub fn transmit(
    kind: ChannelKind,
    symbols: &[Complex64],
    snr: SnrDb,
    seed: u64,
) -> Result<(Vec<Complex64>, Option<ChannelRealization>)> {
    match kind {
        ChannelKind::Awgn => Ok((awgn(symbols, snr, seed), None)),
        ChannelKind::Rayleigh => {
            let (faded, real) = rayleigh_fade(symbols, snr, seed);
            Ok((equalize(&faded, &real)?, Some(real)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_symbols(n: usize, seed: u64) -> Vec<Complex64> {
        // QPSK points have |y|² = 1 exactly
        let mut r = rng::seeded(seed);
        (0..n)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut r);
                let b: f64 = StandardNormal.sample(&mut r);
                Complex64::new(a.signum(), b.signum()) / 2f64.sqrt()
            })
            .collect()
    }

    #[test]
    fn noise_power_examples() {
        assert_eq!(noise_power_for(SnrDb(0.0)), 1.0);
        assert!((noise_power_for(SnrDb(10.0)) - 0.1).abs() < 1e-15);
        assert!((noise_power_for(SnrDb(-10.0)) - 10.0).abs() < 1e-12);
        assert_eq!(noise_power_for(SnrDb(200.0)), 0.0);
        assert!(SnrDb::new(f64::NAN).is_err());
    }

    #[test]
    fn awgn_noiseless_and_deterministic() {
        let y = unit_symbols(64, 1);
        assert_eq!(awgn(&y, SnrDb(250.0), 9), y);
        assert_eq!(awgn(&y, SnrDb(3.0), 9), awgn(&y, SnrDb(3.0), 9));
        assert_ne!(awgn(&y, SnrDb(3.0), 9), awgn(&y, SnrDb(3.0), 10));
    }

    #[test]
    fn awgn_noise_mean_is_consistent_with_zero() {
        let n = 1_000_000;
        let y = vec![Complex64::new(0.0, 0.0); n];
        let out = awgn(&y, SnrDb(0.0), 4);
        let mean: Complex64 = out.iter().sum::<Complex64>() / n as f64;
        // σ = 1 at 0 dB
        assert!(mean.norm() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn rayleigh_noiseless_is_pure_gain_and_equalizes_back() {
        let y = unit_symbols(32, 2);
        let (out, real) = rayleigh_fade(&y, SnrDb(300.0), 5);
        for (o, i) in out.iter().zip(&y) {
            assert_eq!(*o, real.h * i);
        }
        let back = equalize(&out, &real).unwrap();
        for (b, i) in back.iter().zip(&y) {
            assert!((b - i).norm() < 1e-12);
        }
        let (again, real2) = rayleigh_fade(&y, SnrDb(5.0), 5);
        let (again2, real3) = rayleigh_fade(&y, SnrDb(5.0), 5);
        assert_eq!((again, real2), (again2, real3));
    }

    #[test]
    fn equalize_guards() {
        let y = unit_symbols(4, 3);
        let one = ChannelRealization { h: Complex64::new(1.0, 0.0), seed: 0 };
        assert_eq!(equalize(&y, &one).unwrap(), y);
        let dead = ChannelRealization { h: Complex64::new(1e-13, 0.0), seed: 0 };
        assert!(matches!(equalize(&y, &dead), Err(Error::DeepFade { .. })));
    }

    #[test]
    fn effective_channel_matches_transmit() {
        let y = unit_symbols(16, 6);
        for kind in [ChannelKind::Awgn, ChannelKind::Rayleigh] {
            let (rx, _) = transmit(kind, &y, SnrDb(7.0), 77).unwrap();
            let eff = EffectiveChannel::sample(kind, y.len(), SnrDb(7.0), 77).unwrap();
            for ((r, s), p) in rx.iter().zip(&y).zip(&eff.perturbation) {
                assert!((r - (s + p)).norm() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn channels_are_pure_functions(seed in any::<u64>(), db in -10.0f64..40.0) {
            let y = unit_symbols(16, 3);
            prop_assert_eq!(awgn(&y, SnrDb(db), seed), awgn(&y, SnrDb(db), seed));
            prop_assert_eq!(rayleigh_fade(&y, SnrDb(db), seed), rayleigh_fade(&y, SnrDb(db), seed));
        }

        #[test]
        fn noiseless_fade_then_equalize_is_identity(seed in any::<u64>()) {
            let y = unit_symbols(16, 7);
            let (faded, real) = rayleigh_fade(&y, SnrDb(NOISELESS_SNR_DB + 10.0), seed);
            prop_assume!(real.h.norm() > DEEP_FADE_THRESHOLD);
            let back = equalize(&faded, &real).unwrap();
            for (a, b) in back.iter().zip(&y) {
                prop_assert!((a - b).norm() < 1e-9);
            }
        }
    }
}
