//! Frame sources: headerless raw grayscale sequences, uncompressed Y4M, and
//! seeded synthetic scenes.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ConfigError;

mod raw;
mod synth;
mod y4m;

pub use raw::{read_raw_sequence, write_raw_sequence, RawSequenceReader};
pub use synth::{generate_scene, object_rect, SceneGenerator, SceneKind, SceneSpec};
pub use y4m::{read_y4m, write_y4m, Y4mReader};

/// Default frame geometry.
pub const DEFAULT_WIDTH: u32 = 320;
pub const DEFAULT_HEIGHT: u32 = 240;

/// Default frame interval, about 30 fps.
pub const DEFAULT_TICK: Duration = Duration::from_millis(33);

#[derive(Debug, Error)]
pub enum VideoError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(
        "{path}: size {len} bytes is not a multiple of the {frame_bytes}-byte frame size \
         ({residue} residue bytes)"
    )]
    RawSize {
        path: PathBuf,
        len: u64,
        frame_bytes: u64,
        residue: u64,
    },
    #[error("not a Y4M stream")]
    NotY4m,
    #[error("malformed Y4M header: {0}")]
    Header(String),
    #[error("unsupported Y4M colorspace {0:?} (only 420 variants and mono are accepted)")]
    Colorspace(String),
    #[error("frame {frame_index}: {reason}")]
    BadFrame { frame_index: u64, reason: String },
    #[error("truncated frame {frame_index}: expected {expected} payload bytes, got {got}")]
    Truncated {
        frame_index: u64,
        expected: usize,
        got: usize,
    },
    #[error("pixel buffer of {len} bytes does not match {width}x{height}")]
    Geometry { width: u32, height: u32, len: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl VideoError {
    /// True for malformed or inconsistent input, as opposed to I/O failures.
    pub fn is_format(&self) -> bool {
        !matches!(self, VideoError::Io { .. } | VideoError::Config(_))
    }
}

/// Axis-aligned rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn fits_in(&self, width: u32, height: u32) -> bool {
        self.x as u64 + self.w as u64 <= width as u64 && self.y as u64 + self.h as u64 <= height as u64
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = (self.x + self.w).min(other.x + other.w);
        let y1 = (self.y + self.h).min(other.y + other.h);
        let inter = x1.saturating_sub(x0) as u64 * y1.saturating_sub(y0) as u64;
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// One grayscale frame, row-major, top-left origin, one byte per pixel.
///
/// Pixel storage is shared, so cloning a frame is cheap.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame_id: u64,
    /// Nanoseconds since the start of the run.
    pub capture_time_ns: u64,
    width: u32,
    height: u32,
    pixels: Arc<[u8]>,
    truth: Option<BBox>,
}

impl Frame {
    pub fn new(
        frame_id: u64,
        capture_time_ns: u64,
        width: u32,
        height: u32,
        pixels: impl Into<Arc<[u8]>>,
    ) -> Result<Self, VideoError> {
        let pixels = pixels.into();
        if width == 0 || height == 0 || pixels.len() as u64 != width as u64 * height as u64 {
            return Err(VideoError::Geometry {
                width,
                height,
                len: pixels.len(),
            });
        }
        Ok(Self {
            frame_id,
            capture_time_ns,
            width,
            height,
            pixels,
            truth: None,
        })
    }

    /// Attaches the generator's ground-truth object rectangle.
    pub fn with_truth(mut self, truth: Option<BBox>) -> Self {
        self.truth = truth;
        self
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn shared_pixels(&self) -> Arc<[u8]> {
        Arc::clone(&self.pixels)
    }

    pub fn truth(&self) -> Option<BBox> {
        self.truth
    }
}

/// How timestamps are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ClockMode {
    /// Real time. With `pace`, frame `i` is not captured before `i * pace`.
    Monotonic {
        #[serde(with = "opt_nanos")]
        pace: Option<Duration>,
    },
    /// Simulated time: frame `i` is captured at exactly `i * tick`, and
    /// inference takes exactly the duration the detector reports.
    Virtual {
        #[serde(with = "nanos")]
        tick: Duration,
    },
}

impl Default for ClockMode {
    fn default() -> Self {
        ClockMode::Monotonic {
            pace: Some(DEFAULT_TICK),
        }
    }
}

impl ClockMode {
    pub fn virtual_tick(tick: Duration) -> Self {
        ClockMode::Virtual { tick }
    }

    pub fn is_virtual(&self) -> bool {
        matches!(self, ClockMode::Virtual { .. })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self {
            ClockMode::Virtual { tick } if tick.is_zero() => {
                Err(ConfigError::new("virtual_clock", "tick must be > 0"))
            }
            _ => Ok(()),
        }
    }
}

/// Stamps capture times for a stream according to a [`ClockMode`].
#[derive(Debug, Clone, Copy)]
pub struct CaptureClock {
    mode: ClockMode,
    epoch: Instant,
}

impl CaptureClock {
    pub fn new(mode: ClockMode) -> Self {
        Self {
            mode,
            epoch: Instant::now(),
        }
    }

    pub fn mode(&self) -> ClockMode {
        self.mode
    }

    pub fn epoch(&self) -> Instant {
        self.epoch
    }

    /// Nanoseconds since the epoch.
    pub fn now_ns(&self) -> u64 {
        self.epoch.elapsed().as_nanos() as u64
    }

    /// Capture timestamp for the frame at `index`, waiting for its due time
    /// when the monotonic clock is paced.
    pub fn stamp(&self, index: u64) -> u64 {
        match self.mode {
            ClockMode::Virtual { tick } => index * tick.as_nanos() as u64,
            ClockMode::Monotonic { pace } => {
                if let Some(pace) = pace {
                    let due = self.epoch + pace * index as u32;
                    let now = Instant::now();
                    if due > now {
                        std::thread::sleep(due - now);
                    }
                }
                self.now_ns()
            }
        }
    }
}

/// A stream of frames owned by one reader.
pub type FrameStream = Box<dyn Iterator<Item = Result<Frame, VideoError>> + Send>;

mod nanos {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_nanos() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_nanos(u64::deserialize(d)?))
    }
}

mod opt_nanos {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
        match d {
            Some(d) => s.serialize_some(&(d.as_nanos() as u64)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
        Ok(Option::<u64>::deserialize(d)?.map(Duration::from_nanos))
    }
}
