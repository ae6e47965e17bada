//! Entropy-gated frame prioritization for streaming inference.
//!
//! Frames are scored by the Shannon entropy of their luma histogram and its
//! change from the previous frame, low-priority frames are dropped before
//! they reach the detector, and the rest wait in a bounded priority buffer.
//! The [`pipeline`] module wires the stages together and produces a per-frame
//! ledger; [`stats`] compares gated and ungated runs.
//!
//! Scoring and statistics are generic over [`Scalar`] (`f32` or `f64`). The
//! unsuffixed aliases below fix the scalar to `f64`.

pub mod buffer;
pub mod detector;
pub mod entropy;
pub mod error;
pub mod ledger;
pub mod pipeline;
pub mod scalar;
pub mod stats;
pub mod video;

pub use buffer::{BufferPolicy, PushOutcome, PushTrace, DEFAULT_CAPACITY};
pub use detector::{Detection, Detector, DetectorError, Inference, StubDetector, StubDetectorConfig};
pub use entropy::{
    compute_histogram, entropy_delta, gate, priority_score, shannon_entropy, EntropyError, GateDecision, BINS,
    MAX_ENTROPY_BITS,
};
pub use error::ConfigError;
pub use ledger::{Decision, FrameRecord, LedgerError, RunMetrics, SegmentStats, LEDGER_COLUMNS};
pub use pipeline::{
    run, run_ablation_pair, run_with, AblationOutput, PipelineConfig, PipelineError, RunOutput, SourceSpec,
};
pub use scalar::Scalar;
pub use stats::{paired_t_test, PValueMethod, StatsError};
pub use video::{BBox, CaptureClock, ClockMode, Frame, SceneKind, SceneSpec, VideoError};

pub type Histogram = entropy::Histogram<f64>;
pub type EntropyScore = entropy::EntropyScore<f64>;
pub type PriorityScore = entropy::PriorityScore<f64>;
pub type GateConfig = entropy::GateConfig<f64>;
pub type EntropyScorer = entropy::EntropyScorer<f64>;
pub type ScoredFrame = buffer::ScoredFrame<f64>;
pub type FrameBuffer = buffer::FrameBuffer<f64>;
pub type Summary = stats::Summary<f64>;
pub type PairedTestResult = stats::PairedTestResult<f64>;

pub type HistogramF32 = entropy::Histogram<f32>;
pub type EntropyScoreF32 = entropy::EntropyScore<f32>;
pub type PriorityScoreF32 = entropy::PriorityScore<f32>;
pub type GateConfigF32 = entropy::GateConfig<f32>;
pub type EntropyScorerF32 = entropy::EntropyScorer<f32>;
