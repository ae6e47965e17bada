//! Pluggable single-frame inference stage and a deterministic stub backend.

use std::time::{Duration, Instant};

use rand_core::RngCore;
use rand_pcg::Pcg32;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ConfigError;
use crate::video::{BBox, Frame};

/// Detection classes, indexed by `Detection::class_id`.
pub const CLASSES: [&str; 5] = ["person", "vehicle", "fire", "weapon", "intruder"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_id: u8,
    pub confidence: f64,
    pub bbox: BBox,
}

impl Detection {
    pub fn class_name(&self) -> &'static str {
        CLASSES.get(self.class_id as usize).copied().unwrap_or("unknown")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub detections: Vec<Detection>,
    /// Time spent inside the call; simulated time for virtual-clock backends.
    pub duration: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("inference failed on frame {frame_id}: {reason}")]
pub struct DetectorError {
    pub frame_id: u64,
    pub reason: String,
}

/// One frame in, detections out. There is deliberately no batched call.
pub trait Detector: Send {
    fn infer(&mut self, frame: &Frame) -> Result<Inference, DetectorError>;
}

impl<D: Detector + ?Sized> Detector for Box<D> {
    fn infer(&mut self, frame: &Frame) -> Result<Inference, DetectorError> {
        (**self).infer(frame)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StubDetectorConfig {
    pub base_latency: Duration,
    /// Half-width of the uniform latency perturbation.
    pub jitter: Duration,
    pub seed: u64,
    /// Report the generator's ground-truth rectangle as a detection.
    pub synthetic_truth: bool,
}

impl Default for StubDetectorConfig {
    fn default() -> Self {
        Self {
            base_latency: Duration::from_millis(30),
            jitter: Duration::ZERO,
            seed: 0,
            synthetic_truth: false,
        }
    }
}

impl StubDetectorConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.jitter > self.base_latency {
            return Err(ConfigError::new(
                "jitter",
                format!(
                    "jitter {:?} must not exceed base latency {:?}",
                    self.jitter, self.base_latency
                ),
            ));
        }
        Ok(())
    }

    /// Latency for `frame_id`: `base + u` with `u` uniform over
    /// `[-jitter, +jitter]` at nanosecond resolution, drawn from
    /// `Pcg32::new(seed, frame_id)`.
    pub fn latency_for(&self, frame_id: u64) -> Duration {
        let jitter = self.jitter.as_nanos() as u64;
        if jitter == 0 {
            return self.base_latency;
        }
        let mut rng = Pcg32::new(self.seed, frame_id);
        let width = 2 * jitter + 1;
        let offset = rng.next_u64() % width;
        let base = self.base_latency.as_nanos() as u64;
        Duration::from_nanos(base - jitter + offset)
    }
}

/// Stand-in detector with configurable, reproducible latency.
///
/// With `simulate` set the stub returns immediately and only reports the
/// latency; otherwise it sleeps for it.
#[derive(Debug, Clone)]
pub struct StubDetector {
    cfg: StubDetectorConfig,
    simulate: bool,
}

impl StubDetector {
    pub fn new(cfg: StubDetectorConfig, simulate: bool) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(Self { cfg, simulate })
    }

    pub fn config(&self) -> &StubDetectorConfig {
        &self.cfg
    }
}

impl Detector for StubDetector {
    fn infer(&mut self, frame: &Frame) -> Result<Inference, DetectorError> {
        let latency = self.cfg.latency_for(frame.frame_id);
        let detections = match frame.truth() {
            Some(bbox) if self.cfg.synthetic_truth => vec![Detection {
                class_id: 0,
                confidence: 1.0,
                bbox,
            }],
            _ => Vec::new(),
        };
        let duration = if self.simulate {
            latency
        } else {
            let start = Instant::now();
            std::thread::sleep(latency);
            start.elapsed()
        };
        Ok(Inference {
            detections,
            duration,
        })
    }
}
