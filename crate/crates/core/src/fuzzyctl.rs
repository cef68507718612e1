//! Five-layer Sugeno fuzzy controller mapping channel SNR to a prompt
//! directive (SNR class plus a target word-count ratio for the KB).
//!
//! Layers, for rules `i = 1..3` (low, middle, high) and input `x` in dB:
//!
//! ```text
//! O¹ᵢ = μᵢ(x) = 1 / (1 + |(x − cᵢ)/aᵢ|^(2bᵢ))
//! O²ᵢ = wᵢ   = μᵢ(x) · x
//! O³ᵢ = wᵢ / Σⱼ wⱼ
//! O⁴ᵢ = O³ᵢ (pᵢ x + qᵢ)
//! O⁵  = softmax(O⁴)
//! ```
//!
//! The rule weight keeps its literal product with `x`. Because `x` is common
//! to every rule it cancels in O³ whenever `x ≠ 0`, so negative SNRs normalize
//! cleanly (flagged, since the raw weights are negative). At `x = 0` the sum
//! vanishes and O³ falls back to `μᵢ / Σ μⱼ`.

use serde::{Deserialize, Serialize};

use crate::channel::SnrDb;
use crate::error::{Error, Result};
use crate::tensor::{argmax, softmax};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuzzyParams {
    pub a: [f64; 3],
    pub b: [f64; 3],
    /// Centers in dB, strictly increasing.
    pub c: [f64; 3],
    pub p: [f64; 3],
    pub q: [f64; 3],
}

impl Default for FuzzyParams {
    fn default() -> Self {
        FuzzyParams {
            a: [5.0, 5.0, 5.0],
            b: [2.0, 2.0, 2.0],
            c: [0.0, 10.0, 20.0],
            p: [0.0, 0.0, 0.0],
            q: [0.75, 0.85, 1.0],
        }
    }
}

impl FuzzyParams {
    pub fn validate(&self) -> Result<()> {
        let all = self.a.iter().chain(&self.b).chain(&self.c).chain(&self.p).chain(&self.q);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("fuzzy parameters must be finite".into()));
        }
        if self.a.iter().any(|&a| a <= 0.0) {
            return Err(Error::InvalidArgument("membership widths aᵢ must be positive".into()));
        }
        if self.b.iter().any(|&b| b < 1.0) {
            return Err(Error::InvalidArgument("membership slopes bᵢ must be ≥ 1".into()));
        }
        if !(self.c[0] < self.c[1] && self.c[1] < self.c[2]) {
            return Err(Error::InvalidArgument("centers must satisfy c₁ < c₂ < c₃".into()));
        }
        Ok(())
    }
}

/// Generalized bell membership.
pub fn membership(x: SnrDb, a: f64, b: f64, c: f64) -> Result<f64> {
    if a <= 0.0 {
        return Err(Error::InvalidArgument(format!("membership width must be positive, got {a}")));
    }
    let r = ((x.0 - c) / a).abs();
    Ok(1.0 / (1.0 + r.powf(2.0 * b)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerTrace {
    pub o1: [f64; 3],
    pub o2: [f64; 3],
    pub o3: [f64; 3],
    pub o4: [f64; 3],
    pub o5: [f64; 3],
    /// Σw vanished (x = 0) and O³ used the membership fallback.
    pub degenerate: bool,
    /// Rule weights were negative (x < 0).
    pub negative_weights: bool,
}

pub fn controller_forward(snr: SnrDb, params: &FuzzyParams) -> Result<LayerTrace> {
    params.validate()?;
    let x = snr.0;
    let mut o1 = [0.0; 3];
    for i in 0..3 {
        o1[i] = membership(snr, params.a[i], params.b[i], params.c[i])?;
    }
    let o2 = o1.map(|m| m * x);
    let sum_w: f64 = o2.iter().sum();
    let degenerate = sum_w.abs() < f64::MIN_POSITIVE;
    let o3 = if degenerate {
        let s: f64 = o1.iter().sum();
        o1.map(|m| m / s)
    } else {
        o2.map(|w| w / sum_w)
    };
    let mut o4 = [0.0; 3];
    for i in 0..3 {
        o4[i] = o3[i] * (params.p[i] * x + params.q[i]);
    }
    let sm = softmax(&o4);
    let o5 = [sm[0], sm[1], sm[2]];
    Ok(LayerTrace { o1, o2, o3, o4, o5, degenerate, negative_weights: x < 0.0 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnrClass {
    Low,
    Mid,
    High,
}

impl SnrClass {
    pub const ALL: [SnrClass; 3] = [SnrClass::Low, SnrClass::Mid, SnrClass::High];

    /// Target word-count ratio band for the KB encoder.
    pub fn length_range(self) -> (f64, f64) {
        match self {
            SnrClass::Low => (0.70, 0.80),
            SnrClass::Mid => (0.80, 0.90),
            SnrClass::High => (1.00, 1.00),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SnrClass::Low => "low",
            SnrClass::Mid => "middle",
            SnrClass::High => "high",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptDirective {
    pub snr_class: SnrClass,
    pub length_ratio_range: (f64, f64),
    pub recommended_ratio: f64,
}

impl PromptDirective {
    pub fn for_class(class: SnrClass) -> Self {
        let range = class.length_range();
        PromptDirective { snr_class: class, length_ratio_range: range, recommended_ratio: (range.0 + range.1) / 2.0 }
    }

    /// Identity directive (high class, ratio 1).
    pub fn full_length() -> Self {
        Self::for_class(SnrClass::High)
    }

    pub fn is_identity(&self) -> bool {
        self.snr_class == SnrClass::High
    }
}

pub fn directive_for(snr: SnrDb, params: &FuzzyParams) -> Result<PromptDirective> {
    let trace = controller_forward(snr, params)?;
    let class = SnrClass::ALL[argmax(&trace.o5)];
    let (lo, hi) = class.length_range();
    let raw: f64 = trace.o4.iter().sum();
    Ok(PromptDirective { snr_class: class, length_ratio_range: (lo, hi), recommended_ratio: raw.clamp(lo, hi) })
}

// ---------------------------------------------------------------------------
// tuning

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuneOptions {
    pub p_grid: Vec<f64>,
    pub q_grid: Vec<f64>,
    pub rounds: usize,
    /// Also search the membership widths `aᵢ`.
    pub tune_antecedents: bool,
    pub a_grid: Vec<f64>,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions {
            p_grid: vec![-0.01, -0.005, 0.0, 0.005, 0.01],
            q_grid: vec![0.70, 0.75, 0.80, 0.85, 0.90, 0.95, 1.00],
            rounds: 2,
            tune_antecedents: false,
            a_grid: vec![3.0, 4.0, 5.0, 6.0, 7.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneOutcome {
    pub params: FuzzyParams,
    pub objective_before: f64,
    pub objective_after: f64,
    pub evaluations: usize,
}

#[derive(Clone, Copy)]
enum Coord {
    A(usize),
    P(usize),
    Q(usize),
}

/// Deterministic coordinate descent over fixed grids, maximizing
/// `objective`. Only strict improvements are accepted, so the result never
/// scores below `params0`.
pub fn tune(
    params0: &FuzzyParams,
    objective: &mut dyn FnMut(&FuzzyParams) -> Result<f64>,
    opts: &TuneOptions,
) -> Result<TuneOutcome> {
    params0.validate()?;
    let before = objective(params0)?;
    let mut best = *params0;
    let mut best_score = before;
    let mut evaluations = 1;
    let mut coords = Vec::new();
    if opts.tune_antecedents {
        coords.extend((0..3).map(Coord::A));
    }
    for i in 0..3 {
        coords.push(Coord::P(i));
        coords.push(Coord::Q(i));
    }
    for _ in 0..opts.rounds {
        let mut improved = false;
        for &coord in &coords {
            let grid = match coord {
                Coord::A(_) => &opts.a_grid,
                Coord::P(_) => &opts.p_grid,
                Coord::Q(_) => &opts.q_grid,
            };
            for &value in grid {
                let mut cand = best;
                let slot = match coord {
                    Coord::A(i) => &mut cand.a[i],
                    Coord::P(i) => &mut cand.p[i],
                    Coord::Q(i) => &mut cand.q[i],
                };
                if *slot == value {
                    continue;
                }
                *slot = value;
                if cand.validate().is_err() {
                    continue;
                }
                let score = objective(&cand)?;
                evaluations += 1;
                if score > best_score {
                    best = cand;
                    best_score = score;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok(TuneOutcome { params: best, objective_before: before, objective_after: best_score, evaluations })
}
