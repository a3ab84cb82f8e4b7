//! Empirical studies.
//!
//! * Sign agreement: how often ranking two random distributions by
//!   discrimination information agrees with ranking them by Euclidean norm.
//! * LED digits: a seven-segment display read through a binary symmetric
//!   channel, classified with every 5-attribute conjunction as a rule.
//!
//! Every random stream derives from a recorded master seed, one ChaCha
//! stream per study unit, so reports are reproducible bit for bit.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::{EngineConfig, InferenceEngine, InferenceError};
use crate::oracle::ExplicitDistribution;
use crate::rulebase::{AttributeSpace, ClassModel, Evidence, Literal, Rule, RuleBase};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("noise probability {0} outside [0, 0.5]")]
    InvalidNoise(f64),
    #[error("distribution length {0} must be a power of two ≥ 2")]
    InvalidLength(usize),
    #[error("at least one trial is required")]
    NoTrials,
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

/// Differences smaller than this count as ties.
pub const TIE_TOLERANCE: f64 = 1e-14;

/// Fills `out` with uniform `[0, 1)` draws divided by their sum.
pub fn fill_random_distribution<R: Rng + ?Sized>(out: &mut [f64], rng: &mut R) {
    let mut total = 0.0;
    for v in out.iter_mut() {
        *v = rng.random::<f64>();
        total += *v;
    }
    for v in out.iter_mut() {
        *v /= total;
    }
}

/// A random distribution of length `l` (a power of two ≥ 2).
pub fn random_distribution<R: Rng + ?Sized>(
    l: usize,
    rng: &mut R,
) -> Result<ExplicitDistribution, ExperimentError> {
    if l < 2 || !l.is_power_of_two() {
        return Err(ExperimentError::InvalidLength(l));
    }
    let mut values = vec![0.0; l];
    fill_random_distribution(&mut values, rng);
    Ok(ExplicitDistribution::new(values).expect("power of two"))
}

/// `(Σ z ln z, ‖z‖)` in one pass. The `n ln 2` offset of the information
/// measure cancels in comparisons of equal-length distributions.
fn measures(z: &[f64]) -> (f64, f64) {
    let mut zlogz = 0.0;
    let mut sq = 0.0;
    for &v in z {
        if v > 0.0 {
            zlogz += v * v.ln();
        }
        sq += v * v;
    }
    (zlogz, sq.sqrt())
}

fn sign(d: f64) -> i8 {
    if d.abs() < TIE_TOLERANCE {
        0
    } else if d > 0.0 {
        1
    } else {
        -1
    }
}

/// `sign(I(z) − I(y)) == sign(‖z‖ − ‖y‖)`, ties equal only to ties.
pub fn pair_agrees(z: &[f64], y: &[f64]) -> bool {
    let (iz, nz) = measures(z);
    let (iy, ny) = measures(y);
    sign(iz - iy) == sign(nz - ny)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRecord {
    pub l: usize,
    pub trials: u64,
    pub agreements: u64,
    pub agreement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub seed: u64,
    pub records: Vec<AgreementRecord>,
    /// Mean of the per-length agreement fractions.
    pub pooled: f64,
}

/// Draws `trials` pairs of random distributions per length and counts how
/// often the information measure and the norm order them the same way.
pub fn agreement_study(
    lengths: &[usize],
    trials: u64,
    seed: u64,
) -> Result<AgreementReport, ExperimentError> {
    if trials == 0 {
        return Err(ExperimentError::NoTrials);
    }
    let mut records = Vec::with_capacity(lengths.len());
    for (stream, &l) in lengths.iter().enumerate() {
        if l < 2 || !l.is_power_of_two() {
            return Err(ExperimentError::InvalidLength(l));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        let mut z = vec![0.0; l];
        let mut y = vec![0.0; l];
        let mut agreements = 0u64;
        for _ in 0..trials {
            fill_random_distribution(&mut z, &mut rng);
            fill_random_distribution(&mut y, &mut rng);
            if pair_agrees(&z, &y) {
                agreements += 1;
            }
        }
        records.push(AgreementRecord {
            l,
            trials,
            agreements,
            agreement: agreements as f64 / trials as f64,
        });
    }
    let pooled = if records.is_empty() {
        0.0
    } else {
        records.iter().map(|r| r.agreement).sum::<f64>() / records.len() as f64
    };
    Ok(AgreementReport {
        seed,
        records,
        pooled,
    })
}

/// Lengths 2², 2³, …, 2¹⁴.
pub fn default_agreement_lengths() -> Vec<usize> {
    (2..=14).map(|k| 1usize << k).collect()
}

pub const SEGMENTS: usize = 7;
pub const DIGITS: usize = 10;

/// Lit segments `a..g` per digit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentTable(pub [[bool; SEGMENTS]; DIGITS]);

impl SegmentTable {
    /// Parses ten strings of seven `0`/`1` characters.
    pub fn from_strings(rows: &[&str; DIGITS]) -> Option<Self> {
        let mut table = [[false; SEGMENTS]; DIGITS];
        for (d, row) in rows.iter().enumerate() {
            if row.len() != SEGMENTS {
                return None;
            }
            for (s, ch) in row.chars().enumerate() {
                table[d][s] = match ch {
                    '0' => false,
                    '1' => true,
                    _ => return None,
                };
            }
        }
        Some(Self(table))
    }

    pub fn pattern(&self, digit: usize) -> &[bool; SEGMENTS] {
        &self.0[digit]
    }
}

impl Default for SegmentTable {
    fn default() -> Self {
        Self::from_strings(&[
            "1111110", "0110000", "1101101", "1111001", "0110011", "1011011", "1011111", "1110000",
            "1111111", "1111011",
        ])
        .expect("canonical table")
    }
}

fn check_noise(noise_p: f64) -> Result<(), ExperimentError> {
    if (0.0..=0.5).contains(&noise_p) {
        Ok(())
    } else {
        Err(ExperimentError::InvalidNoise(noise_p))
    }
}

/// Attributes `a..g`, one per segment.
pub fn led_space() -> AttributeSpace {
    AttributeSpace::new(["a", "b", "c", "d", "e", "f", "g"]).expect("distinct names")
}

fn led_classes() -> ClassModel {
    ClassModel::uniform((0..DIGITS).map(|d| d.to_string()).collect()).expect("ten classes")
}

/// All 21 five-segment subsets, lexicographic.
fn five_subsets() -> Vec<[usize; 5]> {
    let mut out = Vec::with_capacity(21);
    for skip_a in 0..SEGMENTS {
        for skip_b in (skip_a + 1)..SEGMENTS {
            let mut s = [0; 5];
            let mut k = 0;
            for seg in 0..SEGMENTS {
                if seg != skip_a && seg != skip_b {
                    s[k] = seg;
                    k += 1;
                }
            }
            out.push(s);
        }
    }
    out.sort();
    out
}

fn led_rules_with<F>(mut marginal: F) -> Vec<Rule>
where
    F: FnMut(&[Literal], usize) -> f64,
{
    let names = ['a', 'b', 'c', 'd', 'e', 'f', 'g'];
    let mut rules = Vec::with_capacity(672);
    for subset in five_subsets() {
        for assignment in 0..32u32 {
            let lhs: Vec<Literal> = subset
                .iter()
                .enumerate()
                .map(|(k, &seg)| Literal::new(seg, assignment >> (4 - k) & 1 == 1))
                .collect();
            let id: String = lhs
                .iter()
                .map(|lit| names[lit.attribute])
                .chain(std::iter::once(':'))
                .chain(lhs.iter().map(|lit| if lit.polarity { '1' } else { '0' }))
                .collect();
            let marginals: BTreeMap<String, f64> = (0..DIGITS)
                .map(|d| (d.to_string(), marginal(&lhs, d)))
                .collect();
            rules.push(Rule::new(id, lhs, marginals).expect("valid rule"));
        }
    }
    rules
}

/// 672 rules, one per 5-segment subset and value assignment, with the exact
/// channel marginal `p(lhs | digit)`; uniform digit priors.
pub fn led_rulebase(table: &SegmentTable, noise_p: f64) -> Result<RuleBase, ExperimentError> {
    check_noise(noise_p)?;
    let rules = led_rules_with(|lhs, d| {
        lhs.iter()
            .map(|lit| {
                if table.pattern(d)[lit.attribute] == lit.polarity {
                    1.0 - noise_p
                } else {
                    noise_p
                }
            })
            .product()
    });
    Ok(RuleBase::new(led_space(), rules, led_classes()).expect("valid base"))
}

/// Like [`led_rulebase`] but with marginals estimated from `samples` noisy
/// displays per digit.
pub fn led_rulebase_estimated<R: Rng + ?Sized>(
    table: &SegmentTable,
    noise_p: f64,
    samples: usize,
    rng: &mut R,
) -> Result<RuleBase, ExperimentError> {
    check_noise(noise_p)?;
    if samples == 0 {
        return Err(ExperimentError::NoTrials);
    }
    let draws: Vec<Vec<[bool; SEGMENTS]>> = (0..DIGITS)
        .map(|d| {
            (0..samples)
                .map(|_| noisy_pattern(table, d, noise_p, rng))
                .collect()
        })
        .collect();
    let rules = led_rules_with(|lhs, d| {
        let hits = draws[d]
            .iter()
            .filter(|v| lhs.iter().all(|lit| v[lit.attribute] == lit.polarity))
            .count();
        hits as f64 / samples as f64
    });
    Ok(RuleBase::new(led_space(), rules, led_classes()).expect("valid base"))
}

fn noisy_pattern<R: Rng + ?Sized>(
    table: &SegmentTable,
    digit: usize,
    noise_p: f64,
    rng: &mut R,
) -> [bool; SEGMENTS] {
    let mut v = *table.pattern(digit);
    for bit in v.iter_mut() {
        if rng.random::<f64>() < noise_p {
            *bit = !*bit;
        }
    }
    v
}

/// The clean pattern of `digit` with each segment flipped independently
/// with probability `noise_p`.
pub fn led_trial<R: Rng + ?Sized>(
    table: &SegmentTable,
    digit: usize,
    noise_p: f64,
    rng: &mut R,
) -> Evidence {
    Evidence::new(
        &led_space(),
        noisy_pattern(table, digit, noise_p, rng).to_vec(),
    )
    .expect("seven segments")
}

/// Exact best achievable accuracy: `Σ_v max_d p(v | d) / 10` over all 2⁷
/// received patterns.
pub fn led_bayes_optimal(table: &SegmentTable, noise_p: f64) -> Result<f64, ExperimentError> {
    check_noise(noise_p)?;
    let mut total = 0.0;
    for v in 0..1u32 << SEGMENTS {
        let best = (0..DIGITS)
            .map(|d| {
                (0..SEGMENTS)
                    .map(|s| {
                        let bit = v >> (SEGMENTS - 1 - s) & 1 == 1;
                        if bit == table.pattern(d)[s] {
                            1.0 - noise_p
                        } else {
                            noise_p
                        }
                    })
                    .product::<f64>()
            })
            .fold(0.0, f64::max);
        total += best / DIGITS as f64;
    }
    Ok(total)
}

#[derive(Debug, Clone)]
pub struct LedOptions {
    pub table: SegmentTable,
    /// Estimate rule marginals from this many samples per digit instead of
    /// computing them from the channel.
    pub estimate_from_samples: Option<usize>,
    pub engine: EngineConfig,
}

impl Default for LedOptions {
    fn default() -> Self {
        Self {
            table: SegmentTable::default(),
            estimate_from_samples: None,
            engine: EngineConfig {
                check_nonnegativity: false,
                ..EngineConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedBenchmarkReport {
    pub noise_p: f64,
    pub trials: u64,
    pub correct: u64,
    pub accuracy: f64,
    /// Binomial standard error of `accuracy`.
    pub std_error: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub per_digit: Vec<u64>,
    /// Trials where every likelihood was ≤ 0, so the floored posterior was
    /// undefined; these are decided by the largest raw likelihood·prior.
    pub all_nonpositive: u64,
    pub bayes_optimal: f64,
    pub seed: u64,
}

/// Classifies `trials` noisy digits (digit drawn uniformly).
pub fn led_benchmark(
    trials: u64,
    noise_p: f64,
    seed: u64,
    options: &LedOptions,
) -> Result<LedBenchmarkReport, ExperimentError> {
    check_noise(noise_p)?;
    if trials == 0 {
        return Err(ExperimentError::NoTrials);
    }
    let base = match options.estimate_from_samples {
        None => led_rulebase(&options.table, noise_p)?,
        Some(samples) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1);
            led_rulebase_estimated(&options.table, noise_p, samples, &mut rng)?
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut confusion = vec![vec![0u64; DIGITS]; DIGITS];
    let mut per_digit = vec![0u64; DIGITS];
    let mut correct = 0u64;
    let mut all_nonpositive = 0u64;
    for _ in 0..trials {
        let digit = rng.random_range(0..DIGITS);
        let evidence = led_trial(&options.table, digit, noise_p, &mut rng);
        let engine = InferenceEngine::new(&base, &evidence, &options.engine)?;
        let predicted = match engine.classify() {
            Ok(result) => result.argmax.parse().expect("digit class"),
            Err(InferenceError::AllPosteriorsZero) => {
                all_nonpositive += 1;
                raw_argmax(&engine, &base.classes)?
            }
            Err(e) => return Err(e.into()),
        };
        confusion[digit][predicted] += 1;
        per_digit[digit] += 1;
        if predicted == digit {
            correct += 1;
        }
    }
    let accuracy = correct as f64 / trials as f64;
    Ok(LedBenchmarkReport {
        noise_p,
        trials,
        correct,
        accuracy,
        std_error: (accuracy * (1.0 - accuracy) / trials as f64).sqrt(),
        confusion,
        per_digit,
        all_nonpositive,
        bayes_optimal: led_bayes_optimal(&options.table, noise_p)?,
        seed,
    })
}

/// Index of the largest `p(e | d) p(d)` without flooring; first wins ties.
fn raw_argmax(engine: &InferenceEngine, classes: &ClassModel) -> Result<usize, InferenceError> {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, (class, prior)) in classes.classes().iter().zip(classes.priors()).enumerate() {
        let score = engine.likelihood(class)?.value * prior;
        if score > best.1 {
            best = (i, score);
        }
    }
    Ok(best.0)
}
