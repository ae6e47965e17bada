//! Report files. Every report is written to a temporary file in the target
//! directory and renamed into place.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use entrogate::ledger::write_ledger_csv;
use entrogate::pipeline::{AblationOutput, SegmentPair};
use entrogate::{FrameRecord, PairedTestResult, RunMetrics, RunOutput, Summary};
use serde::Serialize;

pub const METRICS_FILE: &str = "metrics.json";
pub const LEDGER_FILE: &str = "ledger.csv";
pub const ABLATION_FILE: &str = "ablation.json";
pub const STATS_FILE: &str = "stats.json";

/// Writes `path` via a sibling temporary file so readers never observe a
/// partial report.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

pub fn write_ledger(path: &Path, ledger: &[FrameRecord]) -> Result<()> {
    write_atomic(path, |w| Ok(write_ledger_csv(w, ledger)?))
}

pub fn write_run(dir: &Path, run: &RunOutput) -> Result<()> {
    write_ledger(&dir.join(LEDGER_FILE), &run.ledger)?;
    write_json(&dir.join(METRICS_FILE), &run.metrics)
}

#[derive(Debug, Serialize)]
pub struct AblationReport<'a> {
    pub gated: &'a RunMetrics,
    pub ungated: &'a RunMetrics,
    pub throughput_delta_pct: Option<f64>,
    pub inference_calls_saved: i64,
    pub segments: &'a [SegmentPair],
    pub latency_test: Option<PairedTestResult>,
    pub throughput_test: Option<PairedTestResult>,
}

impl<'a> AblationReport<'a> {
    pub fn new(out: &'a AblationOutput) -> Self {
        Self {
            gated: &out.gated.metrics,
            ungated: &out.ungated.metrics,
            throughput_delta_pct: out.throughput_delta_pct,
            inference_calls_saved: out.ungated.metrics.frames_inferred as i64
                - out.gated.metrics.frames_inferred as i64,
            segments: &out.segments,
            latency_test: out.latency_test,
            throughput_test: out.throughput_test,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct LedgerSummary {
    pub path: String,
    pub frames_ingested: u64,
    pub frames_inferred: u64,
    pub frames_dropped_at_gate: u64,
    pub frames_evicted: u64,
    pub frames_rejected: u64,
    pub frames_failed: u64,
    pub frames_in_flight: u64,
    pub wall_duration_ns: u64,
    pub throughput_fps: f64,
    pub latency_ms: Option<Summary>,
    pub staleness_ms: Option<Summary>,
    pub reference_latency_sd_ms: f64,
    pub latency_sd_within_reference: Option<bool>,
}

#[derive(Debug, Serialize)]
pub struct PairedReport {
    pub segments: usize,
    pub pairs_used: usize,
    pub latency_test: Option<PairedTestResult>,
    pub throughput_test: Option<PairedTestResult>,
}

#[derive(Debug, Serialize)]
pub struct StatsReport {
    pub ledgers: Vec<LedgerSummary>,
    pub paired: Option<PairedReport>,
}
