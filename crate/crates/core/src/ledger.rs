//! Per-frame run ledger, its CSV form, and the reductions computed from it.
//!
//! CSV columns, in order:
//!
//! | column            | content                                          |
//! |-------------------|--------------------------------------------------|
//! | `frame_id`        | integer                                          |
//! | `capture_time_ns` | integer nanoseconds since run start              |
//! | `entropy_bits`    | spatial entropy H                                |
//! | `delta_h_bits`    | temporal change                                  |
//! | `priority`        | alpha * H + beta * delta                         |
//! | `decision`        | `kept`, `dropped`, `evicted`, `rejected`, `inferred`, `failed` |
//! | `buffer_enter_ns` | integer, empty when the frame never entered      |
//! | `infer_start_ns`  | integer, empty unless inference started          |
//! | `infer_end_ns`    | integer, empty unless inference started          |
//!
//! `kept` only appears for frames still buffered when a run stopped.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{summarize, Summary};
use crate::video::ClockMode;

pub const LEDGER_COLUMNS: [&str; 9] = [
    "frame_id",
    "capture_time_ns",
    "entropy_bits",
    "delta_h_bits",
    "priority",
    "decision",
    "buffer_enter_ns",
    "infer_start_ns",
    "infer_end_ns",
];

/// Latency standard deviation the harness compares monotonic runs against, in ms.
pub const REFERENCE_LATENCY_SD_MS: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    /// Admitted to the buffer and not yet resolved.
    Kept,
    Dropped,
    Evicted,
    Rejected,
    Inferred,
    Failed,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Kept => "kept",
            Decision::Dropped => "dropped",
            Decision::Evicted => "evicted",
            Decision::Rejected => "rejected",
            Decision::Inferred => "inferred",
            Decision::Failed => "failed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "kept" => Decision::Kept,
            "dropped" => Decision::Dropped,
            "evicted" => Decision::Evicted,
            "rejected" => Decision::Rejected,
            "inferred" => Decision::Inferred,
            "failed" => Decision::Failed,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub capture_time_ns: u64,
    pub entropy_bits: f64,
    pub delta_h_bits: f64,
    pub priority: f64,
    pub decision: Decision,
    pub buffer_enter_ns: Option<u64>,
    pub infer_start_ns: Option<u64>,
    pub infer_end_ns: Option<u64>,
}

impl FrameRecord {
    pub fn new(frame_id: u64, capture_time_ns: u64) -> Self {
        Self {
            frame_id,
            capture_time_ns,
            entropy_bits: 0.0,
            delta_h_bits: 0.0,
            priority: 0.0,
            decision: Decision::Kept,
            buffer_enter_ns: None,
            infer_start_ns: None,
            infer_end_ns: None,
        }
    }

    /// Capture to inference end, for inferred frames.
    pub fn end_to_end_ns(&self) -> Option<u64> {
        match (self.decision, self.infer_end_ns) {
            (Decision::Inferred, Some(end)) => Some(end - self.capture_time_ns),
            _ => None,
        }
    }

    /// Capture to inference start, for inferred frames.
    pub fn staleness_ns(&self) -> Option<u64> {
        match (self.decision, self.infer_start_ns) {
            (Decision::Inferred, Some(start)) => Some(start - self.capture_time_ns),
            _ => None,
        }
    }

    /// Latest timestamp the record carries.
    pub fn last_event_ns(&self) -> u64 {
        [self.buffer_enter_ns, self.infer_start_ns, self.infer_end_ns]
            .into_iter()
            .flatten()
            .fold(self.capture_time_ns, u64::max)
    }
}

fn ns_to_ms(ns: u64) -> f64 {
    ns as f64 / 1e6
}

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("ledger CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("ledger schema mismatch in column {position}: expected {expected:?}, found {found:?}")]
    Schema {
        position: usize,
        expected: &'static str,
        found: String,
    },
    #[error("ledger row {row}, column {column}: cannot parse {value:?}")]
    Parse {
        row: usize,
        column: &'static str,
        value: String,
    },
    #[error("cannot split {frames} frames into {segments} segments")]
    Segments { frames: usize, segments: usize },
}

pub fn write_ledger_csv<W: Write>(out: W, ledger: &[FrameRecord]) -> Result<(), LedgerError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LEDGER_COLUMNS)?;
    let opt = |v: Option<u64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in ledger {
        w.write_record([
            r.frame_id.to_string(),
            r.capture_time_ns.to_string(),
            r.entropy_bits.to_string(),
            r.delta_h_bits.to_string(),
            r.priority.to_string(),
            r.decision.as_str().to_string(),
            opt(r.buffer_enter_ns),
            opt(r.infer_start_ns),
            opt(r.infer_end_ns),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_ledger_csv<R: Read>(input: R) -> Result<Vec<FrameRecord>, LedgerError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = reader.headers()?.clone();
    for (position, expected) in LEDGER_COLUMNS.iter().enumerate() {
        let found = headers.get(position).unwrap_or("");
        if found != *expected {
            return Err(LedgerError::Schema {
                position,
                expected,
                found: found.to_string(),
            });
        }
    }
    if headers.len() > LEDGER_COLUMNS.len() {
        return Err(LedgerError::Schema {
            position: LEDGER_COLUMNS.len(),
            expected: "<end of header>",
            found: headers[LEDGER_COLUMNS.len()].to_string(),
        });
    }

    let mut ledger = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let row_no = i + 2;
        let field = |col: usize| row.get(col).unwrap_or("");
        let bad = |col: usize| LedgerError::Parse {
            row: row_no,
            column: LEDGER_COLUMNS[col],
            value: field(col).to_string(),
        };
        let int = |col: usize| field(col).parse::<u64>().map_err(|_| bad(col));
        let float = |col: usize| field(col).parse::<f64>().map_err(|_| bad(col));
        let opt_int = |col: usize| match field(col) {
            "" => Ok(None),
            s => s.parse::<u64>().map(Some).map_err(|_| bad(col)),
        };
        ledger.push(FrameRecord {
            frame_id: int(0)?,
            capture_time_ns: int(1)?,
            entropy_bits: float(2)?,
            delta_h_bits: float(3)?,
            priority: float(4)?,
            decision: Decision::parse(field(5)).ok_or_else(|| bad(5))?,
            buffer_enter_ns: opt_int(6)?,
            infer_start_ns: opt_int(7)?,
            infer_end_ns: opt_int(8)?,
        });
    }
    Ok(ledger)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    /// Capture to buffer entry (scoring and gating).
    pub scoring_ms: Option<Summary<f64>>,
    /// Buffer entry to inference start.
    pub buffer_residence_ms: Option<Summary<f64>>,
    pub inference_ms: Option<Summary<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub gating_enabled: bool,
    pub clock: ClockMode,
    pub frames_ingested: u64,
    pub frames_inferred: u64,
    pub frames_dropped_at_gate: u64,
    pub frames_evicted: u64,
    pub frames_rejected: u64,
    pub frames_failed: u64,
    pub frames_in_flight: u64,
    pub wall_duration_ns: u64,
    pub throughput_fps: f64,
    pub detections_total: u64,
    pub latency_summary: Option<Summary<f64>>,
    pub staleness_summary: Option<Summary<f64>>,
    pub stages: StageTimings,
    pub reference_latency_sd_ms: f64,
    /// Whether the end-to-end latency sd stays under the reference value.
    pub latency_sd_within_reference: Option<bool>,
    pub end_to_end_latency_ms: Vec<f64>,
    pub staleness_ms: Vec<f64>,
}

impl RunMetrics {
    /// Reduces a ledger. The wall duration runs from time zero to the last
    /// event any record carries.
    pub fn from_ledger(
        ledger: &[FrameRecord],
        gating_enabled: bool,
        clock: ClockMode,
        detections_total: u64,
    ) -> Self {
        let count = |d: Decision| ledger.iter().filter(|r| r.decision == d).count() as u64;
        let wall_duration_ns = ledger.iter().map(FrameRecord::last_event_ns).max().unwrap_or(0);
        let frames_inferred = count(Decision::Inferred);
        let throughput_fps = if wall_duration_ns == 0 {
            0.0
        } else {
            frames_inferred as f64 / (wall_duration_ns as f64 / 1e9)
        };

        let end_to_end_latency_ms: Vec<f64> =
            ledger.iter().filter_map(FrameRecord::end_to_end_ns).map(ns_to_ms).collect();
        let staleness_ms: Vec<f64> =
            ledger.iter().filter_map(FrameRecord::staleness_ns).map(ns_to_ms).collect();
        let summary = |v: &[f64]| summarize(v).ok();
        let scoring: Vec<f64> = ledger
            .iter()
            .filter_map(|r| r.buffer_enter_ns.map(|e| ns_to_ms(e - r.capture_time_ns)))
            .collect();
        let residence: Vec<f64> = ledger
            .iter()
            .filter_map(|r| Some(ns_to_ms(r.infer_start_ns? - r.buffer_enter_ns?)))
            .collect();
        let inference: Vec<f64> = ledger
            .iter()
            .filter_map(|r| Some(ns_to_ms(r.infer_end_ns? - r.infer_start_ns?)))
            .collect();

        let latency_summary = summary(&end_to_end_latency_ms);
        let latency_sd_within_reference = latency_summary
            .and_then(|s| s.sd)
            .map(|sd| sd < REFERENCE_LATENCY_SD_MS);

        Self {
            gating_enabled,
            clock,
            frames_ingested: ledger.len() as u64,
            frames_inferred,
            frames_dropped_at_gate: count(Decision::Dropped),
            frames_evicted: count(Decision::Evicted),
            frames_rejected: count(Decision::Rejected),
            frames_failed: count(Decision::Failed),
            frames_in_flight: count(Decision::Kept),
            wall_duration_ns,
            throughput_fps,
            detections_total,
            latency_summary,
            staleness_summary: summary(&staleness_ms),
            stages: StageTimings {
                scoring_ms: summary(&scoring),
                buffer_residence_ms: summary(&residence),
                inference_ms: summary(&inference),
            },
            reference_latency_sd_ms: REFERENCE_LATENCY_SD_MS,
            latency_sd_within_reference,
            end_to_end_latency_ms,
            staleness_ms,
        }
    }

    /// `ingested == inferred + dropped + evicted + rejected + failed + in_flight`.
    pub fn is_conserved(&self) -> bool {
        self.frames_ingested
            == self.frames_inferred
                + self.frames_dropped_at_gate
                + self.frames_evicted
                + self.frames_rejected
                + self.frames_failed
                + self.frames_in_flight
    }
}

/// Per-segment reduction of a ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub first_frame_id: u64,
    pub frames: usize,
    pub inferred: usize,
    /// Mean end-to-end latency of the segment's inferred frames.
    pub mean_latency_ms: Option<f64>,
    pub span_ns: u64,
    pub fps: Option<f64>,
}

/// Splits a ledger (sorted by frame id) into `segments` contiguous runs of
/// frames. The first `n % segments` segments hold one extra frame.
///
/// A segment spans from its first capture to the next segment's first
/// capture; the last one ends at the ledger's last event.
pub fn segment_ledger(ledger: &[FrameRecord], segments: usize) -> Result<Vec<SegmentStats>, LedgerError> {
    let n = ledger.len();
    if segments == 0 || n < segments {
        return Err(LedgerError::Segments { frames: n, segments });
    }
    let end_ns = ledger.iter().map(FrameRecord::last_event_ns).max().unwrap_or(0);
    let (base, extra) = (n / segments, n % segments);
    let mut out = Vec::with_capacity(segments);
    let mut start = 0;
    for k in 0..segments {
        let len = base + usize::from(k < extra);
        let part = &ledger[start..start + len];
        let next_start = ledger.get(start + len).map_or(end_ns, |r| r.capture_time_ns);
        let span_ns = next_start.saturating_sub(part[0].capture_time_ns);
        let latencies: Vec<f64> = part.iter().filter_map(FrameRecord::end_to_end_ns).map(ns_to_ms).collect();
        let inferred = part.iter().filter(|r| r.decision == Decision::Inferred).count();
        out.push(SegmentStats {
            first_frame_id: part[0].frame_id,
            frames: len,
            inferred,
            mean_latency_ms: (!latencies.is_empty())
                .then(|| latencies.iter().sum::<f64>() / latencies.len() as f64),
            span_ns,
            fps: (span_ns > 0).then(|| inferred as f64 / (span_ns as f64 / 1e9)),
        });
        start += len;
    }
    Ok(out)
}
