use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use entrogate::ledger::{read_ledger_csv, LedgerError};
use entrogate::pipeline::{
    pair_segments, paired_segment_samples, run_ablation_pair, DEFAULT_SEGMENTS,
};
use entrogate::video::{generate_scene, write_raw_sequence, write_y4m};
use entrogate::{
    paired_t_test, CaptureClock, ClockMode, EntropyScorer, Frame, FrameRecord, PipelineConfig,
    PipelineError, RunMetrics, SourceSpec, VideoError,
};
use log::info;

use crate::config::{is_y4m, Settings, SharedArgs, DEFAULT_OUT_DIR};
use crate::report::{self, AblationReport, LedgerSummary, PairedReport, StatsReport};
use crate::CliError;

fn runtime(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(e.into())
}

fn input_path(source: &SourceSpec) -> Option<&Path> {
    match source {
        SourceSpec::Raw { path, .. } | SourceSpec::Y4m { path } => Some(path),
        SourceSpec::Scene { .. } => None,
    }
}

fn pipeline_error(e: PipelineError, source: &SourceSpec) -> CliError {
    match e {
        PipelineError::Config(_) | PipelineError::Open(VideoError::Config(_)) => {
            CliError::Usage(e.into())
        }
        other => {
            let err = anyhow::Error::from(other);
            runtime(match input_path(source) {
                Some(path) => err.context(format!("input {}", path.display())),
                None => err,
            })
        }
    }
}

fn print_ledger_table(ledger: &[FrameRecord]) -> std::io::Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "frame_id\tentropy_bits\tdelta_h_bits\tpriority\tdecision")?;
    for r in ledger {
        writeln!(
            out,
            "{}\t{:.6}\t{:.6}\t{:.6}\t{}",
            r.frame_id,
            r.entropy_bits,
            r.delta_h_bits,
            r.priority,
            r.decision.as_str()
        )?;
    }
    Ok(())
}

pub fn run(args: &SharedArgs, no_gating: bool) -> Result<(), CliError> {
    let mut settings = Settings::resolve(args)?;
    if no_gating {
        settings.pipeline.gating_enabled = false;
    }
    let out = entrogate::run(&settings.pipeline).map_err(|e| pipeline_error(e, &settings.pipeline.source))?;
    report::write_run(&settings.out, &out).map_err(runtime)?;
    if settings.inspect {
        print_ledger_table(&out.ledger).map_err(runtime)?;
    }
    info!(
        "{} frames ingested, {} inferred; reports in {}",
        out.metrics.frames_ingested,
        out.metrics.frames_inferred,
        settings.out.display()
    );
    Ok(())
}

pub fn ablate(args: &SharedArgs) -> Result<(), CliError> {
    let settings = Settings::resolve(args)?;
    let out = run_ablation_pair(&settings.pipeline, settings.segments)
        .map_err(|e| pipeline_error(e, &settings.pipeline.source))?;
    report::write_run(&settings.out.join("gated"), &out.gated).map_err(runtime)?;
    report::write_run(&settings.out.join("ungated"), &out.ungated).map_err(runtime)?;
    report::write_json(
        &settings.out.join(report::ABLATION_FILE),
        &AblationReport::new(&out),
    )
    .map_err(runtime)?;
    if settings.inspect {
        print_ledger_table(&out.gated.ledger).map_err(runtime)?;
    }
    info!(
        "gated {} vs ungated {} inferences, throughput delta {:?}%",
        out.gated.metrics.frames_inferred, out.ungated.metrics.frames_inferred, out.throughput_delta_pct
    );
    Ok(())
}

pub fn synth(args: &SharedArgs, output: &Path) -> Result<(), CliError> {
    let settings = Settings::resolve(args)?;
    let PipelineConfig { source, gate, .. } = settings.pipeline;
    let SourceSpec::Scene { scene, width, height } = source else {
        return Err(CliError::Usage(anyhow!("synth generates scenes; --input is not accepted")));
    };
    // Timestamps are not stored in either format, so a virtual clock keeps generation fast.
    let clock = CaptureClock::new(ClockMode::virtual_tick(entrogate::video::DEFAULT_TICK));
    let generator = generate_scene(scene, width, height, clock).map_err(|e| match e {
        VideoError::Config(c) => CliError::Usage(c.into()),
        other => runtime(other),
    })?;
    let frames: Vec<Frame> = generator.collect::<Result<_, _>>().map_err(runtime)?;

    report::write_atomic(output, |w| {
        if is_y4m(output) {
            write_y4m(w, width, height, &frames)?;
        } else {
            write_raw_sequence(w, &frames)?;
        }
        Ok(())
    })
    .map_err(runtime)?;

    if settings.inspect {
        let mut scorer = EntropyScorer::new(gate);
        let mut out = std::io::stdout().lock();
        writeln!(out, "frame_id\tentropy_bits\tdelta_h_bits\tpriority\tgate").map_err(runtime)?;
        for f in &frames {
            let s = scorer.score(f.pixels()).map_err(runtime)?;
            let decision = match scorer.gate(&s) {
                entrogate::GateDecision::Keep => "keep",
                entrogate::GateDecision::Drop => "drop",
            };
            writeln!(out, "{}\t{:.6}\t{:.6}\t{:.6}\t{decision}", f.frame_id, s.h, s.delta_h, s.p)
                .map_err(runtime)?;
        }
    }
    info!("wrote {} frames to {}", frames.len(), output.display());
    Ok(())
}

fn read_ledger(path: &Path) -> Result<Vec<FrameRecord>, CliError> {
    let file = File::open(path)
        .with_context(|| format!("cannot open ledger {}", path.display()))
        .map_err(CliError::Runtime)?;
    read_ledger_csv(BufReader::new(file))
        .with_context(|| format!("bad ledger {}", path.display()))
        .map_err(CliError::Runtime)
}

fn summarize_ledger(path: &Path, ledger: &[FrameRecord]) -> LedgerSummary {
    // Gating state and clock are not recorded in a ledger; they do not affect the counts.
    let m = RunMetrics::from_ledger(ledger, true, ClockMode::default(), 0);
    LedgerSummary {
        path: path.display().to_string(),
        frames_ingested: m.frames_ingested,
        frames_inferred: m.frames_inferred,
        frames_dropped_at_gate: m.frames_dropped_at_gate,
        frames_evicted: m.frames_evicted,
        frames_rejected: m.frames_rejected,
        frames_failed: m.frames_failed,
        frames_in_flight: m.frames_in_flight,
        wall_duration_ns: m.wall_duration_ns,
        throughput_fps: m.throughput_fps,
        latency_ms: m.latency_summary,
        staleness_ms: m.staleness_summary,
        reference_latency_sd_ms: m.reference_latency_sd_ms,
        latency_sd_within_reference: m.latency_sd_within_reference,
    }
}

pub fn stats(paths: &[PathBuf], segments: Option<usize>, out: Option<PathBuf>) -> Result<(), CliError> {
    let segments = segments.unwrap_or(DEFAULT_SEGMENTS);
    if segments == 0 {
        return Err(CliError::Usage(anyhow!("invalid segments: must be >= 1")));
    }
    let ledgers: Vec<Vec<FrameRecord>> = paths.iter().map(|p| read_ledger(p)).collect::<Result<_, _>>()?;
    let summaries = paths
        .iter()
        .zip(&ledgers)
        .map(|(p, l)| summarize_ledger(p, l))
        .collect();

    let paired = match ledgers.as_slice() {
        [a, b] => {
            if a.len() != b.len() {
                return Err(runtime(anyhow!(
                    "cannot pair ledgers: {} has {} frames and {} has {}, so their {segments} segments differ; \
                     a paired test needs both runs of the same stream",
                    paths[0].display(),
                    a.len(),
                    paths[1].display(),
                    b.len()
                )));
            }
            let pairs = pair_segments(a, b, segments).map_err(|e| match e {
                LedgerError::Segments { .. } => runtime(anyhow!("cannot pair ledgers: {e}")),
                other => runtime(other),
            })?;
            let (la, lb) = paired_segment_samples(&pairs, |s| s.mean_latency_ms);
            let (fa, fb) = paired_segment_samples(&pairs, |s| s.fps);
            Some(PairedReport {
                segments,
                pairs_used: la.len(),
                latency_test: paired_t_test(&la, &lb).ok(),
                throughput_test: paired_t_test(&fa, &fb).ok(),
            })
        }
        _ => None,
    };

    let report = StatsReport {
        ledgers: summaries,
        paired,
    };
    let dir = out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    report::write_json(&dir.join(report::STATS_FILE), &report).map_err(runtime)?;
    info!("wrote {}", dir.join(report::STATS_FILE).display());
    Ok(())
}
