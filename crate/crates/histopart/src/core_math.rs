//! Scalar math used throughout the simulator: the iterated logarithm,
//! exact falling factorials, and the distribution of success runs in a
//! random arrangement of two symbols.
//!
//! The run-count statistics come in three independent flavours so they can
//! be cross-checked against each other: closed forms (floating point), an
//! exhaustive enumeration oracle (exact rationals), and a seeded Monte Carlo
//! estimator.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreMathError {
    #[error("log_star requires a positive finite argument, got {0}")]
    LogStarDomain(f64),
    #[error("run statistics need at least one symbol (m1 + m2 >= 1)")]
    EmptyArrangement,
    #[error("run length threshold k must be at least 1")]
    ZeroRunLength,
    #[error("k = {k} exceeds the number of symbols m = {m}")]
    RunLengthOverflow { k: u64, m: u64 },
    #[error("enumeration oracle is limited to m1 + m2 <= {limit}, got {m}")]
    EnumerationTooLarge { m: u64, limit: u64 },
    #[error("monte carlo estimation needs at least one trial")]
    NoTrials,
}

/// Iterated natural logarithm: the number of times `ln` must be applied to
/// bring `x` down to 1 or below. `log_star(0.5) == 0`, `log_star(e) == 1`,
/// and the result is 3 for anything between ~15.2 and ~3.8e6 (so every
/// processor count this crate sweeps maps to 3).
pub fn log_star(x: f64) -> Result<u32, CoreMathError> {
    if !x.is_finite() || x <= 0.0 {
        return Err(CoreMathError::LogStarDomain(x));
    }
    let mut v = x;
    let mut n = 0;
    while v > 1.0 {
        v = v.ln();
        n += 1;
    }
    Ok(n)
}

/// Falling factorial `n * (n-1) * ... * (n-k+1)`, exactly. Empty product for
/// `k == 0`; zero whenever `k > n` (a factor hits zero).
pub fn falling_factorial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let mut acc = BigInt::one();
    for i in 0..k {
        acc *= BigInt::from(n - i);
    }
    acc
}

/// An arrangement of `m1` copies of symbol `a` and `m2` copies of symbol `b`
/// in a row, uniformly random over all `C(m1+m2, m1)` placements. The
/// statistic of interest is the number of maximal blocks of `a`s of length
/// at least `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunsModel {
    pub m1: u64,
    pub m2: u64,
    pub k: u64,
}

impl RunsModel {
    pub fn new(m1: u64, m2: u64, k: u64) -> Result<Self, CoreMathError> {
        if k == 0 {
            return Err(CoreMathError::ZeroRunLength);
        }
        Ok(RunsModel { m1, m2, k })
    }

    pub fn total(&self) -> u64 {
        self.m1 + self.m2
    }
}

/// Product of `(num - i) / (den - i)` for `i in 0..k`, i.e. the ratio of two
/// falling factorials with a common length. Evaluates to 0 as soon as a
/// numerator factor vanishes, which happens before any denominator factor
/// can (`num <= den` is required by every caller).
fn falling_ratio(num: u64, den: u64, k: u64) -> f64 {
    debug_assert!(num <= den);
    if k > num {
        return 0.0;
    }
    let mut acc = 1.0;
    for i in 0..k {
        acc *= (num - i) as f64 / (den - i) as f64;
    }
    acc
}

/// Expected number of runs of `a`s of length >= k:
/// `(m2 + 1) * m1_(k) / m_(k)` with `x_(k)` the falling factorial.
pub fn runs_expectation(model: &RunsModel) -> Result<f64, CoreMathError> {
    let m = model.total();
    if m == 0 {
        return Err(CoreMathError::EmptyArrangement);
    }
    if model.k > m {
        return Err(CoreMathError::RunLengthOverflow { k: model.k, m });
    }
    Ok((model.m2 + 1) as f64 * falling_ratio(model.m1, m, model.k))
}

/// Variance of the same count:
/// `(m2+1)_(2) * m1_(2k) / m_(2k) + E(1 - E)`.
/// When `m1_(2k)` is zero the leading term is zero by convention, even if
/// `m_(2k)` also vanishes; `m1 <= m` means no other 0/0 pairing can occur.
pub fn runs_variance(model: &RunsModel) -> Result<f64, CoreMathError> {
    let m = model.total();
    let e = runs_expectation(model)?;
    let lead = if 2 * model.k > model.m1 {
        0.0
    } else {
        ((model.m2 + 1) * model.m2) as f64 * falling_ratio(model.m1, m, 2 * model.k)
    };
    // Analytically nonnegative; guard against float cancellation at the rim.
    Ok((lead + e * (1.0 - e)).max(0.0))
}

/// Exhaustive check of the closed forms: walks every `C(m, m1)` arrangement,
/// counts runs of length >= k, and returns the exact mean and variance as
/// rationals. Deliberately shares no code with `runs_expectation` /
/// `runs_variance`; capped at m1 + m2 <= 20 to keep enumeration honest.
pub fn runs_enumeration_oracle(
    model: &RunsModel,
) -> Result<(BigRational, BigRational), CoreMathError> {
    const LIMIT: u64 = 20;
    let m = model.total();
    if m > LIMIT {
        return Err(CoreMathError::EnumerationTooLarge { m, limit: LIMIT });
    }
    let mut count = BigInt::zero();
    let mut sum = BigInt::zero();
    let mut sum_sq = BigInt::zero();
    for mask in 0u32..(1u32 << m) {
        if u64::from(mask.count_ones()) != model.m1 {
            continue;
        }
        let runs = count_runs_in_mask(mask, m, model.k);
        count += 1;
        sum += runs;
        sum_sq += runs * runs;
    }
    debug_assert!(!count.is_zero(), "C(m, m1) >= 1 whenever m1 <= m");
    let mean = BigRational::new(sum, count.clone());
    let second_moment = BigRational::new(sum_sq, count);
    let variance = second_moment - mean.clone() * mean.clone();
    Ok((mean, variance))
}

/// Number of maximal blocks of set bits of length >= k in the low `m` bits.
fn count_runs_in_mask(mask: u32, m: u64, k: u64) -> u64 {
    let mut runs = 0;
    let mut block = 0u64;
    for pos in 0..m {
        if mask >> pos & 1 == 1 {
            block += 1;
        } else {
            if block >= k {
                runs += 1;
            }
            block = 0;
        }
    }
    if block >= k {
        runs += 1;
    }
    runs
}

/// Seeded Monte Carlo estimate of the run-count mean and (population)
/// variance over `trials` uniformly shuffled arrangements.
pub fn runs_monte_carlo(
    model: &RunsModel,
    trials: u64,
    seed: u64,
) -> Result<(f64, f64), CoreMathError> {
    if trials == 0 {
        return Err(CoreMathError::NoTrials);
    }
    let m = model.total();
    if m == 0 {
        return Err(CoreMathError::EmptyArrangement);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut row: Vec<bool> = (0..m).map(|i| i < model.m1).collect();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..trials {
        row.shuffle(&mut rng);
        let mut runs = 0u64;
        let mut block = 0u64;
        for &is_a in &row {
            if is_a {
                block += 1;
            } else {
                if block >= model.k {
                    runs += 1;
                }
                block = 0;
            }
        }
        if block >= model.k {
            runs += 1;
        }
        let r = runs as f64;
        sum += r;
        sum_sq += r * r;
    }
    let mean = sum / trials as f64;
    let variance = (sum_sq / trials as f64 - mean * mean).max(0.0);
    Ok((mean, variance))
}

/// Exact rational -> f64, good enough for the magnitudes this crate meets.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    let numer = r.numer().to_f64().unwrap_or(f64::NAN);
    let denom = r.denom().to_f64().unwrap_or(f64::NAN);
    if numer.is_finite() && denom.is_finite() && denom != 0.0 {
        numer / denom
    } else {
        // Fall back to string round-trip for out-of-range components.
        let signed = r.numer().is_negative() != r.denom().is_negative();
        if signed {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    }
}
