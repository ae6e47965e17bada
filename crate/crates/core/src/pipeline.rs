//! Ingest, score, gate, buffer, infer.
//!
//! One ingestion thread reads frames, scores and gates them, and pushes the
//! survivors into a [`FrameBuffer`]. One inference thread pops and runs the
//! detector. Both report to a channel that is folded into the ledger once
//! the threads have joined.
//!
//! Under [`ClockMode::Virtual`] the two threads advance a shared simulated
//! clock in lockstep, so a run is fully determined by its configuration:
//! frame `i` is captured at `i * tick`, and the inference thread, when it
//! next looks at the buffer at time `t`, sees exactly the frames captured at
//! or before `t`. A frame captured at the instant an inference ends is
//! therefore visible to the next pop.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::time::Duration;

use log::{debug, warn};
use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buffer::{BufferPolicy, FrameBuffer, PushOutcome, ScoredFrame, DEFAULT_CAPACITY};
use crate::detector::{Detector, StubDetector, StubDetectorConfig};
use crate::entropy::{EntropyError, EntropyScorer, GateConfig, GateDecision};
use crate::error::ConfigError;
use crate::ledger::{segment_ledger, Decision, FrameRecord, LedgerError, RunMetrics, SegmentStats};
use crate::stats::{paired_t_test, PairedTestResult};
use crate::video::{
    generate_scene, read_raw_sequence, read_y4m, CaptureClock, ClockMode, FrameStream, SceneKind,
    SceneSpec, VideoError, DEFAULT_HEIGHT, DEFAULT_WIDTH,
};

/// Default number of segments an ablation pair is split into.
pub const DEFAULT_SEGMENTS: usize = 10;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot open source: {0}")]
    Open(#[source] VideoError),
    #[error("source failed at frame {frame_index}: {source}")]
    Source {
        frame_index: u64,
        #[source]
        source: VideoError,
    },
    #[error("scoring failed at frame {frame_index}: {source}")]
    Scoring {
        frame_index: u64,
        #[source]
        source: EntropyError,
    },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SourceSpec {
    Scene {
        scene: SceneSpec,
        width: u32,
        height: u32,
    },
    Raw {
        path: PathBuf,
        width: u32,
        height: u32,
    },
    Y4m {
        path: PathBuf,
    },
}

impl Default for SourceSpec {
    fn default() -> Self {
        SourceSpec::Scene {
            scene: SceneSpec {
                kind: SceneKind::Composite,
                frame_count: 100,
                seed: 0,
                redundancy_ratio: 0.5,
            },
            width: DEFAULT_WIDTH,
            height: DEFAULT_HEIGHT,
        }
    }
}

impl SourceSpec {
    pub fn open(&self, clock: CaptureClock) -> Result<FrameStream, VideoError> {
        Ok(match self {
            SourceSpec::Scene { scene, width, height } => {
                Box::new(generate_scene(*scene, *width, *height, clock)?)
            }
            SourceSpec::Raw { path, width, height } => {
                Box::new(read_raw_sequence(path, *width, *height, clock)?)
            }
            SourceSpec::Y4m { path } => Box::new(read_y4m(path, clock)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub gate: GateConfig<f64>,
    pub buffer_capacity: usize,
    /// Ablation switch. When off, frames are still scored for the ledger but
    /// never gated, and the buffer degrades to a drop-oldest FIFO.
    pub gating_enabled: bool,
    pub clock: ClockMode,
    pub source: SourceSpec,
    pub detector: StubDetectorConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            gate: GateConfig::default(),
            buffer_capacity: DEFAULT_CAPACITY,
            gating_enabled: true,
            clock: ClockMode::default(),
            source: SourceSpec::default(),
            detector: StubDetectorConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.gate.validate()?;
        if self.buffer_capacity == 0 {
            return Err(ConfigError::new("buffer_capacity", "capacity must be >= 1"));
        }
        self.clock.validate()?;
        self.detector.validate()?;
        if let SourceSpec::Scene { scene, width, height } = &self.source {
            scene.validate()?;
            if *width == 0 || *height == 0 {
                return Err(ConfigError::new("width/height", "frame dimensions must be >= 1"));
            }
        }
        Ok(())
    }

    pub fn buffer_policy(&self) -> BufferPolicy {
        if self.gating_enabled {
            BufferPolicy::Priority
        } else {
            BufferPolicy::Fifo
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    /// One record per ingested frame, ordered by frame id.
    pub ledger: Vec<FrameRecord>,
}

enum Event {
    Ingested(FrameRecord),
    Evicted(u64),
    Served {
        frame_id: u64,
        start_ns: u64,
        end_ns: u64,
        ok: bool,
        detections: usize,
    },
}

/// Where the ingestion thread is in the virtual timeline.
#[derive(Clone, Copy)]
enum Ingest {
    /// Fetching the next frame.
    Pending,
    /// Holding the frame captured at this time.
    Next(u64),
    Done,
}

struct VirtualState {
    /// Simulated time at which the inference thread next looks at the buffer.
    consumer_ns: u64,
    ingest: Ingest,
}

struct VirtualSync {
    state: Mutex<VirtualState>,
    cv: Condvar,
}

impl VirtualSync {
    fn new() -> Self {
        Self {
            state: Mutex::new(VirtualState {
                consumer_ns: 0,
                ingest: Ingest::Pending,
            }),
            cv: Condvar::new(),
        }
    }

    /// Announces the frame captured at `capture_ns` and waits until the
    /// consumer's clock has reached it.
    fn admit(&self, capture_ns: u64) {
        let mut s = self.state.lock();
        s.ingest = Ingest::Next(capture_ns);
        self.cv.notify_all();
        while s.consumer_ns < capture_ns {
            self.cv.wait(&mut s);
        }
    }

    fn finish_ingest(&self) {
        self.state.lock().ingest = Ingest::Done;
        self.cv.notify_all();
    }

    /// Waits until every frame captured at or before `now` has been handled.
    /// Returns the capture time of the next pending frame, or `None` once the
    /// source is exhausted.
    fn settle(&self, now: u64) -> Option<u64> {
        let mut s = self.state.lock();
        loop {
            match s.ingest {
                Ingest::Done => return None,
                Ingest::Next(c) if c > now => return Some(c),
                _ => self.cv.wait(&mut s),
            }
        }
    }

    fn advance(&self, now: u64) {
        self.state.lock().consumer_ns = now;
        self.cv.notify_all();
    }
}

/// Runs the configured source through the stub detector.
pub fn run(cfg: &PipelineConfig) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    let clock = CaptureClock::new(cfg.clock);
    let source = cfg.source.open(clock).map_err(PipelineError::Open)?;
    let detector = StubDetector::new(cfg.detector, cfg.clock.is_virtual())?;
    run_with(cfg, source, clock, detector)
}

/// Runs an already-open source through any detector. `clock` must be the
/// clock the source stamps captures with.
pub fn run_with<D: Detector>(
    cfg: &PipelineConfig,
    source: FrameStream,
    clock: CaptureClock,
    mut detector: D,
) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    let buffer = FrameBuffer::<f64>::with_policy(cfg.buffer_capacity, cfg.buffer_policy())?;
    let virtual_time = cfg.clock.is_virtual();
    let sync = VirtualSync::new();
    let ingest_done = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<Event>();
    let (buffer, sync, ingest_done) = (&buffer, &sync, &ingest_done);

    let ingest_result = std::thread::scope(|scope| {
        let infer_tx = tx.clone();
        let consumer = scope.spawn(|| {
            let tx = infer_tx;
            let serve = |item: ScoredFrame<f64>, start_ns: u64, det: &mut D| -> u64 {
                let result = det.infer(&item.frame);
                let (ok, detections, elapsed) = match result {
                    Ok(inf) => (true, inf.detections.len(), inf.duration),
                    Err(e) => {
                        warn!("{e}");
                        (false, 0, Duration::ZERO)
                    }
                };
                let end_ns = if virtual_time {
                    start_ns + elapsed.as_nanos() as u64
                } else {
                    clock.now_ns()
                };
                let _ = tx.send(Event::Served {
                    frame_id: item.frame_id,
                    start_ns,
                    end_ns,
                    ok,
                    detections,
                });
                end_ns
            };
            if virtual_time {
                let mut now = 0u64;
                loop {
                    let next_capture = sync.settle(now);
                    match buffer.pop_highest() {
                        Some(item) => now = serve(item, now, &mut detector),
                        None => match next_capture {
                            Some(c) => now = c,
                            None => break,
                        },
                    }
                    sync.advance(now);
                }
            } else {
                loop {
                    let done = ingest_done.load(Ordering::Acquire);
                    match buffer.pop_highest() {
                        Some(item) => {
                            let start = clock.now_ns();
                            serve(item, start, &mut detector);
                        }
                        None if done => break,
                        None => std::thread::park_timeout(Duration::from_micros(200)),
                    }
                }
            }
        });
        let consumer_thread = consumer.thread().clone();

        let producer = scope.spawn(move || -> Result<(), PipelineError> {
            let tx = tx;
            let mut scorer = EntropyScorer::new(cfg.gate);
            let result = (|| {
                for (index, item) in source.enumerate() {
                    let frame = item.map_err(|source| PipelineError::Source {
                        frame_index: index as u64,
                        source,
                    })?;
                    if virtual_time {
                        sync.admit(frame.capture_time_ns);
                    }
                    let score = scorer.score(frame.pixels()).map_err(|source| PipelineError::Scoring {
                        frame_index: frame.frame_id,
                        source,
                    })?;
                    let mut record = FrameRecord {
                        entropy_bits: score.h,
                        delta_h_bits: score.delta_h,
                        priority: score.p,
                        ..FrameRecord::new(frame.frame_id, frame.capture_time_ns)
                    };
                    if cfg.gating_enabled && scorer.gate(&score) == GateDecision::Drop {
                        record.decision = Decision::Dropped;
                        let _ = tx.send(Event::Ingested(record));
                        continue;
                    }
                    let enter_ns = if virtual_time {
                        frame.capture_time_ns
                    } else {
                        clock.now_ns()
                    };
                    match buffer.push(ScoredFrame::new(frame, score)) {
                        PushOutcome::Accepted => record.buffer_enter_ns = Some(enter_ns),
                        PushOutcome::AcceptedEvicting(victim) => {
                            record.buffer_enter_ns = Some(enter_ns);
                            let _ = tx.send(Event::Evicted(victim));
                        }
                        PushOutcome::Rejected => record.decision = Decision::Rejected,
                    }
                    let _ = tx.send(Event::Ingested(record));
                    consumer_thread.unpark();
                }
                Ok(())
            })();
            if virtual_time {
                sync.finish_ingest();
            }
            ingest_done.store(true, Ordering::Release);
            consumer_thread.unpark();
            result
        });

        let result = producer.join().expect("ingestion thread panicked");
        consumer.join().expect("inference thread panicked");
        result
    });
    ingest_result?;

    let events: Vec<Event> = rx.into_iter().collect();
    let (ledger, detections) = assemble_ledger(events);
    let metrics = RunMetrics::from_ledger(&ledger, cfg.gating_enabled, cfg.clock, detections);
    debug!(
        "run finished: {} ingested, {} inferred, {} dropped",
        metrics.frames_ingested, metrics.frames_inferred, metrics.frames_dropped_at_gate
    );
    Ok(RunOutput { metrics, ledger })
}

fn assemble_ledger(events: Vec<Event>) -> (Vec<FrameRecord>, u64) {
    let mut ledger: Vec<FrameRecord> = Vec::new();
    let mut updates = Vec::new();
    for event in events {
        match event {
            Event::Ingested(record) => ledger.push(record),
            other => updates.push(other),
        }
    }
    // Sources number frames from zero, so frame ids index the ledger.
    ledger.sort_by_key(|r| r.frame_id);
    let position = |ledger: &[FrameRecord], id: u64| {
        ledger
            .binary_search_by_key(&id, |r| r.frame_id)
            .expect("event refers to an ingested frame")
    };
    let mut detections_total = 0u64;
    for update in updates {
        match update {
            Event::Evicted(id) => {
                let i = position(&ledger, id);
                ledger[i].decision = Decision::Evicted;
            }
            Event::Served {
                frame_id,
                start_ns,
                end_ns,
                ok,
                detections,
            } => {
                let i = position(&ledger, frame_id);
                let r = &mut ledger[i];
                r.infer_start_ns = Some(start_ns);
                r.infer_end_ns = Some(end_ns);
                r.decision = if ok { Decision::Inferred } else { Decision::Failed };
                detections_total += detections as u64;
            }
            Event::Ingested(_) => unreachable!(),
        }
    }
    (ledger, detections_total)
}

/// One segment of an ablation pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPair {
    pub gated: SegmentStats,
    pub ungated: SegmentStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationOutput {
    pub gated: RunOutput,
    pub ungated: RunOutput,
    pub segments: Vec<SegmentPair>,
    /// `(gated - ungated) / ungated * 100`, absent when ungated fps is zero.
    pub throughput_delta_pct: Option<f64>,
    /// Paired test on segment mean latency, gated minus ungated.
    pub latency_test: Option<PairedTestResult<f64>>,
    /// Paired test on segment throughput, gated minus ungated.
    pub throughput_test: Option<PairedTestResult<f64>>,
}

/// Paired samples over segments both runs have values for.
pub fn paired_segment_samples(
    segments: &[SegmentPair],
    metric: impl Fn(&SegmentStats) -> Option<f64>,
) -> (Vec<f64>, Vec<f64>) {
    segments
        .iter()
        .filter_map(|s| Some((metric(&s.gated)?, metric(&s.ungated)?)))
        .unzip()
}

pub fn pair_segments(
    gated: &[FrameRecord],
    ungated: &[FrameRecord],
    segments: usize,
) -> Result<Vec<SegmentPair>, LedgerError> {
    let g = segment_ledger(gated, segments)?;
    let u = segment_ledger(ungated, segments)?;
    Ok(g
        .into_iter()
        .zip(u)
        .map(|(gated, ungated)| SegmentPair { gated, ungated })
        .collect())
}

fn segment_test(
    segments: &[SegmentPair],
    metric: impl Fn(&SegmentStats) -> Option<f64>,
) -> Option<PairedTestResult<f64>> {
    let (a, b) = paired_segment_samples(segments, metric);
    paired_t_test(&a, &b).ok()
}

/// Reduces two ledgers of the same stream into an ablation comparison.
pub fn compare_runs(
    gated: RunOutput,
    ungated: RunOutput,
    segments: usize,
) -> Result<AblationOutput, PipelineError> {
    let pairs = pair_segments(&gated.ledger, &ungated.ledger, segments)?;
    let ungated_fps = ungated.metrics.throughput_fps;
    let throughput_delta_pct = (ungated_fps > 0.0)
        .then(|| (gated.metrics.throughput_fps - ungated_fps) / ungated_fps * 100.0);
    Ok(AblationOutput {
        latency_test: segment_test(&pairs, |s| s.mean_latency_ms),
        throughput_test: segment_test(&pairs, |s| s.fps),
        segments: pairs,
        throughput_delta_pct,
        gated,
        ungated,
    })
}

/// Runs the configured stream once with gating and once without, under
/// otherwise identical settings.
pub fn run_ablation_pair(cfg: &PipelineConfig, segments: usize) -> Result<AblationOutput, PipelineError> {
    let gated = run(&PipelineConfig {
        gating_enabled: true,
        ..cfg.clone()
    })?;
    let ungated = run(&PipelineConfig {
        gating_enabled: false,
        ..cfg.clone()
    })?;
    compare_runs(gated, ungated, segments)
}
