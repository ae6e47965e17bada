//! Summary statistics and the paired t-test used to compare gated and
//! ungated runs.
//!
//! The Student-t tail probability comes from the regularized incomplete beta
//! function, evaluated with a Lentz continued fraction. An exact sign-flip
//! permutation test covers the zero-variance case and doubles as a small-n
//! cross-check.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{Decision, FrameRecord};
use crate::scalar::Scalar;

/// Largest pair count the exact sign-flip test enumerates (2^n assignments).
pub const MAX_EXACT_PAIRS: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("empty sample series")]
    Empty,
    #[error("sample contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("paired series differ in length ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("paired test needs at least 2 pairs (got {0})")]
    TooFewPairs(usize),
    #[error("exact sign-flip test limited to {MAX_EXACT_PAIRS} pairs (got {0})")]
    TooManyPairs(usize),
    #[error("wall duration must be > 0")]
    ZeroDuration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Ms,
    Fps,
}

/// A non-empty list of measurements in one unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSeries<T> {
    values: Vec<T>,
    unit: Unit,
}

impl<T: Scalar> SampleSeries<T> {
    pub fn new(values: Vec<T>, unit: Unit) -> Result<Self, StatsError> {
        check_finite(&values)?;
        if values.is_empty() {
            return Err(StatsError::Empty);
        }
        Ok(Self { values, unit })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn summarize(&self) -> Summary<T> {
        summarize(&self.values).expect("series is non-empty and finite")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary<T> {
    pub count: usize,
    pub mean: T,
    /// Sample standard deviation (n - 1 denominator); absent for one value.
    pub sd: Option<T>,
    pub min: T,
    pub max: T,
    pub p50: T,
    pub p95: T,
    pub p99: T,
}

fn check_finite<T: Scalar>(values: &[T]) -> Result<(), StatsError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(StatsError::NonFinite(i)),
        None => Ok(()),
    }
}

/// Mean with one refinement pass, which keeps shifted data from drifting.
fn mean<T: Scalar>(values: &[T]) -> T {
    let n = T::from_usize(values.len());
    let m = values.iter().copied().sum::<T>() / n;
    m + values.iter().map(|&x| x - m).sum::<T>() / n
}

fn sample_sd<T: Scalar>(values: &[T], m: T) -> Option<T> {
    if values.len() < 2 {
        return None;
    }
    let ss: T = values.iter().map(|&x| (x - m) * (x - m)).sum();
    Some((ss / T::from_usize(values.len() - 1)).sqrt())
}

/// Nearest-rank percentile of an ascending slice: the value at rank
/// `ceil(pct / 100 * n)`, with rank clamped to `[1, n]`.
pub fn percentile_nearest_rank<T: Copy>(sorted: &[T], pct: f64) -> T {
    let n = sorted.len();
    let rank = ((pct / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

pub fn summarize<T: Scalar>(values: &[T]) -> Result<Summary<T>, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    check_finite(values)?;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let m = mean(values);
    Ok(Summary {
        count: values.len(),
        mean: m,
        sd: sample_sd(values, m),
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        p50: percentile_nearest_rank(&sorted, 50.0),
        p95: percentile_nearest_rank(&sorted, 95.0),
        p99: percentile_nearest_rank(&sorted, 99.0),
    })
}

/// How the p-value of a paired test was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    StudentT,
    /// All differences equal and non-zero: exact sign-flip permutation p.
    SignFlipExact,
    /// All differences zero: t = 0, p = 1.
    NoDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTestResult<T> {
    pub n: usize,
    pub mean_diff: T,
    pub sd_diff: T,
    /// Infinite when the differences are constant and non-zero.
    pub t_statistic: T,
    pub degrees_of_freedom: usize,
    pub p_value_two_tailed: T,
    pub method: PValueMethod,
}

/// Paired t-test on `d_i = a_i - b_i`.
pub fn paired_t_test<T: Scalar>(a: &[T], b: &[T]) -> Result<PairedTestResult<T>, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(StatsError::TooFewPairs(a.len()));
    }
    check_finite(a)?;
    check_finite(b)?;
    let diffs: Vec<T> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    let n = diffs.len();
    let mean_diff = mean(&diffs);
    let sd_diff = sample_sd(&diffs, mean_diff).expect("n >= 2");
    let df = n - 1;

    let (t, p, method) = if sd_diff == T::zero() {
        if mean_diff == T::zero() {
            (T::zero(), T::one(), PValueMethod::NoDifference)
        } else {
            let t = if mean_diff > T::zero() {
                T::infinity()
            } else {
                T::neg_infinity()
            };
            // Only the all-plus and all-minus assignments reach |mean|.
            let p = if n <= MAX_EXACT_PAIRS {
                sign_flip_p_value(&diffs)?
            } else {
                T::lit(2.0) / T::lit(2.0).powi(n as i32)
            };
            (t, p, PValueMethod::SignFlipExact)
        }
    } else {
        let t = mean_diff / (sd_diff / T::from_usize(n).sqrt());
        (t, student_t_two_tailed(t, T::from_usize(df)), PValueMethod::StudentT)
    };
    Ok(PairedTestResult {
        n,
        mean_diff,
        sd_diff,
        t_statistic: t,
        degrees_of_freedom: df,
        p_value_two_tailed: p,
        method,
    })
}

/// Exact two-sided sign-flip permutation p-value: the fraction of the `2^n`
/// sign assignments whose |sum| is at least the observed |sum|.
pub fn sign_flip_p_value<T: Scalar>(diffs: &[T]) -> Result<T, StatsError> {
    let n = diffs.len();
    if n == 0 {
        return Err(StatsError::Empty);
    }
    if n > MAX_EXACT_PAIRS {
        return Err(StatsError::TooManyPairs(n));
    }
    check_finite(diffs)?;
    let observed = diffs.iter().copied().sum::<T>().abs();
    let scale: T = diffs.iter().map(|d| d.abs()).sum();
    let tol = scale * T::lit(1e-12);
    let mut hits: u64 = 0;
    for mask in 0u64..(1u64 << n) {
        let s = diffs
            .iter()
            .enumerate()
            .map(|(i, &d)| if mask >> i & 1 == 1 { -d } else { d })
            .sum::<T>()
            .abs();
        if s >= observed - tol {
            hits += 1;
        }
    }
    Ok(T::lit(hits as f64) / T::lit((1u64 << n) as f64))
}

/// Two-tailed tail probability of Student's t: `I_{df/(df+t^2)}(df/2, 1/2)`.
pub fn student_t_two_tailed<T: Scalar>(t: T, df: T) -> T {
    if t.is_infinite() {
        return T::zero();
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(x, df / T::lit(2.0), T::lit(0.5))
}

/// Lanczos approximation (g = 7, 9 terms) of `ln Γ(x)` for `x > 0`.
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < T::lit(0.5) {
        // Reflection: Γ(x)Γ(1-x) = π / sin(πx).
        let pi = T::PI();
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::lit(COEF[0]);
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc = acc + T::lit(c) / (x + T::from_usize(i));
    }
    let t = x + T::lit(7.5);
    T::lit(0.5) * (T::lit(2.0) * T::PI()).ln() + (x + T::lit(0.5)) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta `I_x(a, b)` for `a, b > 0`, `x` in `[0, 1]`.
pub fn regularized_incomplete_beta<T: Scalar>(x: T, a: T, b: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    if x >= T::one() {
        return T::one();
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (T::one() - x).ln();
    let front = ln_front.exp();
    // The continued fraction converges fastest below the mean of the distribution.
    if x < (a + T::one()) / (a + b + T::lit(2.0)) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        T::one() - front * beta_continued_fraction(T::one() - x, b, a) / b
    }
}

/// Modified Lentz evaluation of the incomplete beta continued fraction.
fn beta_continued_fraction<T: Scalar>(x: T, a: T, b: T) -> T {
    let tiny = T::min_positive_value() / T::epsilon();
    let eps = T::epsilon();
    let one = T::one();
    let two = T::lit(2.0);
    let clamp = |v: T| if v.abs() < tiny { tiny } else { v };

    let mut c = one;
    let mut d = one / clamp(one - (a + b) * x / (a + one));
    let mut h = d;
    for m in 1..=500 {
        let m = T::from_usize(m);
        let m2 = two * m;
        let even = m * (b - m) * x / ((a + m2 - one) * (a + m2));
        d = one / clamp(one + even * d);
        c = clamp(one + even / c);
        h = h * d * c;
        let odd = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + one));
        d = one / clamp(one + odd * d);
        c = clamp(one + odd / c);
        let delta = d * c;
        h = h * delta;
        if (delta - one).abs() <= eps {
            break;
        }
    }
    h
}

/// Inferred frames per second of wall time.
pub fn throughput(ledger: &[FrameRecord], wall_duration: Duration) -> Result<f64, StatsError> {
    if wall_duration.is_zero() {
        return Err(StatsError::ZeroDuration);
    }
    let inferred = ledger
        .iter()
        .filter(|r| r.decision == Decision::Inferred)
        .count();
    Ok(inferred as f64 / wall_duration.as_secs_f64())
}
