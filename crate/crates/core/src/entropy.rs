//! Frame entropy, temporal entropy change, priority scoring and threshold gating.
//!
//! Everything here is a pure function of its inputs. Entropy is measured in
//! bits over a 256-bin grayscale histogram, so it always lies in `[0, 8]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ConfigError;
use crate::scalar::Scalar;

/// Number of intensity levels in an 8-bit grayscale histogram.
pub const BINS: usize = 256;

/// `log2(BINS)`, the entropy of the uniform distribution.
pub const MAX_ENTROPY_BITS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EntropyError {
    #[error("empty frame")]
    EmptyFrame,
    #[error("invalid histogram: {0}")]
    InvalidHistogram(String),
    #[error("entropy {0} outside [0, 8] bits")]
    OutOfRange(f64),
}

/// Normalized intensity distribution of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram<T> {
    bins: [T; BINS],
}

impl<T: Scalar> Histogram<T> {
    /// Normalizes raw per-level pixel counts.
    pub fn from_counts(counts: &[u64; BINS]) -> Result<Self, EntropyError> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(EntropyError::EmptyFrame);
        }
        let total = T::lit(total as f64);
        let mut bins = [T::zero(); BINS];
        for (bin, &count) in bins.iter_mut().zip(counts.iter()) {
            *bin = T::lit(count as f64) / total;
        }
        Ok(Self { bins })
    }

    /// Accepts an already-normalized distribution after checking its invariants.
    pub fn from_bins(bins: [T; BINS]) -> Result<Self, EntropyError> {
        if let Some(i) = bins.iter().position(|b| !b.is_finite() || *b < T::zero()) {
            return Err(EntropyError::InvalidHistogram(format!(
                "bin {i} is negative or not finite"
            )));
        }
        let sum: T = bins.iter().copied().sum();
        if (sum - T::one()).abs() > Self::sum_tolerance() {
            return Err(EntropyError::InvalidHistogram(format!(
                "bins sum to {sum}, expected 1"
            )));
        }
        Ok(Self { bins })
    }

    /// Normalization slack: 1e-9, widened to a few hundred ulps for `f32`.
    pub fn sum_tolerance() -> T {
        T::lit(1e-9).max(T::epsilon() * T::lit(512.0))
    }

    pub fn bins(&self) -> &[T; BINS] {
        &self.bins
    }
}

/// Builds the normalized histogram of 8-bit intensities.
pub fn compute_histogram<T: Scalar>(pixels: &[u8]) -> Result<Histogram<T>, EntropyError> {
    if pixels.is_empty() {
        return Err(EntropyError::EmptyFrame);
    }
    let mut counts = [0u64; BINS];
    for &px in pixels {
        counts[px as usize] += 1;
    }
    Histogram::from_counts(&counts)
}

/// Entropy of a frame, in bits.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntropyScore<T>(T);

impl<T: Scalar> EntropyScore<T> {
    pub fn new(bits: T) -> Result<Self, EntropyError> {
        if bits.is_finite() && bits >= T::zero() && bits <= T::lit(MAX_ENTROPY_BITS) {
            Ok(Self(bits))
        } else {
            Err(EntropyError::OutOfRange(bits.to_f64_lossy()))
        }
    }

    pub fn zero() -> Self {
        Self(T::zero())
    }

    pub fn bits(self) -> T {
        self.0
    }
}

/// `-sum(p * log2 p)` over the non-empty bins.
///
/// Empty bins contribute nothing (`0 * log 0 := 0`). The result is clamped
/// into `[0, 8]` to absorb the last ulp of rounding at either end.
pub fn shannon_entropy<T: Scalar>(hist: &Histogram<T>) -> EntropyScore<T> {
    let h = hist
        .bins
        .iter()
        .filter(|&&p| p > T::zero())
        .fold(T::zero(), |acc, &p| acc - p * p.log2());
    EntropyScore(h.max(T::zero()).min(T::lit(MAX_ENTROPY_BITS)))
}

/// Magnitude of the entropy change between consecutive frames.
pub fn entropy_delta<T: Scalar>(current: EntropyScore<T>, previous: EntropyScore<T>) -> T {
    (current.0 - previous.0).abs()
}

/// Weights and cutoff for frame admission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateConfig<T> {
    /// Weight of spatial entropy.
    pub alpha: T,
    /// Weight of the temporal entropy change.
    pub beta: T,
    /// Frames scoring strictly below this are dropped.
    pub threshold: T,
}

impl<T: Scalar> Default for GateConfig<T> {
    fn default() -> Self {
        Self {
            alpha: T::lit(0.6),
            beta: T::lit(0.4),
            threshold: T::lit(3.0),
        }
    }
}

impl<T: Scalar> GateConfig<T> {
    pub fn new(alpha: T, beta: T, threshold: T) -> Result<Self, ConfigError> {
        let cfg = Self {
            alpha,
            beta,
            threshold,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, value) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("threshold", self.threshold),
        ] {
            if !value.is_finite() || value < T::zero() {
                return Err(ConfigError::new(
                    field,
                    format!("must be a finite value >= 0 (got {value})"),
                ));
            }
        }
        if self.alpha + self.beta <= T::zero() {
            return Err(ConfigError::new(
                "alpha",
                "alpha + beta must be > 0 (both weights are zero)",
            ));
        }
        Ok(())
    }
}

/// Frame priority together with the terms it was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorityScore<T> {
    pub p: T,
    pub h: T,
    pub delta_h: T,
}

pub fn priority_score<T: Scalar>(
    h: EntropyScore<T>,
    delta_h: T,
    cfg: &GateConfig<T>,
) -> PriorityScore<T> {
    PriorityScore {
        p: cfg.alpha * h.0 + cfg.beta * delta_h,
        h: h.0,
        delta_h,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateDecision {
    Keep,
    Drop,
}

/// Scores exactly at the threshold are kept.
pub fn gate<T: Scalar>(score: &PriorityScore<T>, cfg: &GateConfig<T>) -> GateDecision {
    if score.p < cfg.threshold {
        GateDecision::Drop
    } else {
        GateDecision::Keep
    }
}

/// Per-stream scoring state: remembers the previous frame's entropy.
///
/// The first frame of a stream has no predecessor and gets `delta_h = 0`.
#[derive(Debug, Clone)]
pub struct EntropyScorer<T> {
    cfg: GateConfig<T>,
    previous: Option<EntropyScore<T>>,
}

impl<T: Scalar> EntropyScorer<T> {
    pub fn new(cfg: GateConfig<T>) -> Self {
        Self {
            cfg,
            previous: None,
        }
    }

    pub fn config(&self) -> &GateConfig<T> {
        &self.cfg
    }

    pub fn score(&mut self, pixels: &[u8]) -> Result<PriorityScore<T>, EntropyError> {
        let h = shannon_entropy(&compute_histogram::<T>(pixels)?);
        let delta = self
            .previous
            .map_or(T::zero(), |prev| entropy_delta(h, prev));
        self.previous = Some(h);
        Ok(priority_score(h, delta, &self.cfg))
    }

    pub fn gate(&self, score: &PriorityScore<T>) -> GateDecision {
        gate(score, &self.cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand::rngs::StdRng;

    fn naive_entropy(bins: &[f64]) -> f64 {
        let mut h = 0.0;
        for &p in bins {
            if p != 0.0 {
                h += p * (1.0 / p).ln();
            }
        }
        h / std::f64::consts::LN_2
    }

    fn random_histogram(rng: &mut StdRng) -> [f64; BINS] {
        let mut raw = [0.0f64; BINS];
        let sparse = rng.gen_bool(0.3);
        for b in raw.iter_mut() {
            if !sparse || rng.gen_bool(0.1) {
                *b = rng.gen::<f64>();
            }
        }
        if raw.iter().all(|&b| b == 0.0) {
            raw[rng.gen_range(0..BINS)] = 1.0;
        }
        let total: f64 = raw.iter().sum();
        raw.map(|b| b / total)
    }

    #[test]
    fn histogram_of_constant_image() {
        let h = compute_histogram::<f64>(&[0, 0, 0, 0]).unwrap();
        assert_eq!(h.bins()[0], 1.0);
        assert!(h.bins()[1..].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn histogram_two_point() {
        let h = compute_histogram::<f64>(&[0, 255]).unwrap();
        assert_eq!(h.bins()[0], 0.5);
        assert_eq!(h.bins()[255], 0.5);
        assert_eq!(h.bins().iter().filter(|&&b| b > 0.0).count(), 2);
    }

    #[test]
    fn histogram_uniform() {
        let pixels: Vec<u8> = (0..=255).collect();
        let h = compute_histogram::<f64>(&pixels).unwrap();
        assert!(h.bins().iter().all(|&b| b == 1.0 / 256.0));
    }

    #[test]
    fn empty_frame_is_rejected() {
        assert_eq!(
            compute_histogram::<f64>(&[]).unwrap_err(),
            EntropyError::EmptyFrame
        );
        assert_eq!(EntropyError::EmptyFrame.to_string(), "empty frame");
    }

    #[test]
    fn from_bins_checks_invariants() {
        let mut bins = [0.0f64; BINS];
        bins[3] = 0.7;
        assert!(Histogram::from_bins(bins).is_err());
        bins[4] = 0.3;
        assert!(Histogram::from_bins(bins).is_ok());
        bins[5] = -0.1;
        bins[4] = 0.4;
        assert!(Histogram::from_bins(bins).is_err());
    }

    #[test]
    fn entropy_reference_points() {
        let constant = compute_histogram::<f64>(&[17; 64]).unwrap();
        assert_eq!(shannon_entropy(&constant).bits(), 0.0);

        let pixels: Vec<u8> = (0..=255).collect();
        let uniform = compute_histogram::<f64>(&pixels).unwrap();
        assert_abs_diff_eq!(shannon_entropy(&uniform).bits(), 8.0, epsilon = 1e-12);

        let fair = compute_histogram::<f64>(&[10, 200]).unwrap();
        assert_eq!(shannon_entropy(&fair).bits(), 1.0);
    }

    #[test]
    fn entropy_in_f32() {
        let pixels: Vec<u8> = (0..=255).collect();
        let uniform = compute_histogram::<f32>(&pixels).unwrap();
        assert_abs_diff_eq!(shannon_entropy(&uniform).bits(), 8.0f32, epsilon = 1e-5);
    }

    #[test]
    fn entropy_matches_naive_oracle() {
        let mut rng = StdRng::seed_from_u64(0x5eed);
        for _ in 0..1000 {
            let bins = random_histogram(&mut rng);
            let hist = Histogram::from_bins(bins).unwrap();
            assert_abs_diff_eq!(
                shannon_entropy(&hist).bits(),
                naive_entropy(&bins),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn entropy_delta_is_symmetric() {
        let s = |x: f64| EntropyScore::new(x).unwrap();
        assert_eq!(entropy_delta(s(5.0), s(5.0)), 0.0);
        assert_eq!(entropy_delta(s(3.0), s(7.0)), 4.0);
        assert_eq!(entropy_delta(s(7.0), s(3.0)), 4.0);
    }

    #[test]
    fn entropy_score_range() {
        assert!(EntropyScore::new(-0.1f64).is_err());
        assert!(EntropyScore::new(8.01f64).is_err());
        assert!(EntropyScore::new(f64::NAN).is_err());
        assert!(EntropyScore::new(8.0f64).is_ok());
    }

    #[test]
    fn priority_examples() {
        let h = EntropyScore::new(6.2f64).unwrap();
        let spatial = GateConfig::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(priority_score(h, 3.0, &spatial).p, 6.2);
        let temporal = GateConfig::new(0.0, 1.0, 0.0).unwrap();
        assert_eq!(priority_score(h, 3.0, &temporal).p, 3.0);

        let mixed = GateConfig::new(0.6, 0.4, 3.0).unwrap();
        let score = priority_score(EntropyScore::new(5.0).unwrap(), 2.5, &mixed);
        assert_abs_diff_eq!(score.p, 4.0, epsilon = 1e-12);
        assert_eq!(score.h, 5.0);
        assert_eq!(score.delta_h, 2.5);
    }

    #[test]
    fn gate_examples() {
        let at = |p: f64, threshold: f64| {
            let cfg = GateConfig::new(1.0, 0.0, threshold).unwrap();
            gate(&PriorityScore { p, h: p, delta_h: 0.0 }, &cfg)
        };
        assert_eq!(at(2.0, 3.0), GateDecision::Drop);
        assert_eq!(at(3.0, 3.0), GateDecision::Keep);
        assert_eq!(at(8.0, 0.0), GateDecision::Keep);
    }

    #[test]
    fn gate_agrees_with_comparison_on_grid() {
        for pi in 0..=80 {
            for ti in 0..=80 {
                let (p, threshold) = (pi as f64 * 0.1, ti as f64 * 0.1);
                let cfg = GateConfig::new(1.0, 0.0, threshold).unwrap();
                let decision = gate(&PriorityScore { p, h: p, delta_h: 0.0 }, &cfg);
                assert_eq!(decision == GateDecision::Drop, p < threshold);
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(GateConfig::<f64>::default().validate().is_ok());
        let err = GateConfig::new(-1.0, 0.4, 3.0).unwrap_err();
        assert_eq!(err.field, "alpha");
        assert!(err.to_string().contains(">= 0"));
        assert_eq!(GateConfig::new(0.6, -0.1, 3.0).unwrap_err().field, "beta");
        assert_eq!(GateConfig::new(0.6, 0.4, -3.0).unwrap_err().field, "threshold");
        assert!(GateConfig::new(0.0, 0.0, 3.0).is_err());
        assert!(GateConfig::new(f64::NAN, 0.4, 3.0).is_err());
    }

    #[test]
    fn scorer_first_frame_has_no_delta() {
        let mut scorer = EntropyScorer::new(GateConfig::<f64>::default());
        let first = scorer.score(&[0, 255]).unwrap();
        assert_eq!(first.delta_h, 0.0);
        assert_abs_diff_eq!(first.p, 0.6, epsilon = 1e-12);
        let second = scorer.score(&[0, 0]).unwrap();
        assert_eq!(second.delta_h, 1.0);
        let third = scorer.score(&[9, 9]).unwrap();
        assert_eq!(third.delta_h, 0.0);
    }

    proptest! {
        #[test]
        fn entropy_bounds(pixels in prop::collection::vec(any::<u8>(), 1..2000)) {
            let hist = compute_histogram::<f64>(&pixels).unwrap();
            let h = shannon_entropy(&hist).bits();
            prop_assert!((0.0..=8.0).contains(&h));
            let sum: f64 = hist.bins().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
            let occupied = hist.bins().iter().filter(|&&b| b > 0.0).count();
            prop_assert_eq!(h == 0.0, occupied == 1);
        }

        #[test]
        fn entropy_permutation_invariant(seed in any::<u64>(), shift in 1usize..BINS) {
            let mut rng = StdRng::seed_from_u64(seed);
            let bins = random_histogram(&mut rng);
            let mut rotated = bins;
            rotated.rotate_left(shift);
            let mut reversed = bins;
            reversed.reverse();
            let h = shannon_entropy(&Histogram::from_bins(bins).unwrap()).bits();
            for other in [rotated, reversed] {
                let h2 = shannon_entropy(&Histogram::from_bins(other).unwrap()).bits();
                prop_assert!((h - h2).abs() <= 1e-12);
            }
        }

        #[test]
        fn score_is_linear_in_weights(
            alpha in 0.0f64..5.0, beta in 0.0f64..5.0, h in 0.0f64..8.0, delta in 0.0f64..8.0
        ) {
            prop_assume!(alpha + beta > 0.0);
            let h = EntropyScore::new(h).unwrap();
            let one = priority_score(h, delta, &GateConfig::new(alpha, beta, 0.0).unwrap());
            let two = priority_score(h, delta, &GateConfig::new(2.0 * alpha, 2.0 * beta, 0.0).unwrap());
            prop_assert!((two.p - 2.0 * one.p).abs() <= 1e-12);
            prop_assert!(one.p >= 0.0);
        }

        #[test]
        fn raising_threshold_never_keeps_more(
            scores in prop::collection::vec(0.0f64..8.0, 1..200),
            lo in 0.0f64..8.0, step in 0.0f64..4.0
        ) {
            let keeps = |threshold: f64| {
                let cfg = GateConfig::new(1.0, 0.0, threshold).unwrap();
                scores
                    .iter()
                    .filter(|&&p| gate(&PriorityScore { p, h: p, delta_h: 0.0 }, &cfg) == GateDecision::Keep)
                    .count()
            };
            prop_assert!(keeps(lo + step) <= keeps(lo));
        }
    }
}
