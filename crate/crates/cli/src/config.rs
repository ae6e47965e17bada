//! Run configuration: built-in defaults, then the TOML file, then flags.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use clap::Args;
use entrogate::pipeline::DEFAULT_SEGMENTS;
use entrogate::{
    ClockMode, GateConfig, PipelineConfig, SceneKind, SceneSpec, SourceSpec, StubDetectorConfig,
    DEFAULT_CAPACITY,
};
use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_OUT_DIR: &str = "out";

/// Flags shared by `run`, `ablate` and `synth`.
#[derive(Debug, Clone, Default, Args)]
pub struct SharedArgs {
    /// TOML config file; flags override its values.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for scene generation and detector jitter.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Weight of frame entropy in the priority score.
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// Weight of the entropy change in the priority score.
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    /// Frames with priority below this are dropped.
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    /// Frames the priority buffer holds before it evicts or rejects.
    #[arg(long, value_name = "N")]
    pub buffer_capacity: Option<usize>,
    /// Simulate time with this frame interval instead of the wall clock.
    #[arg(long, value_name = "DUR", value_parser = humantime::parse_duration)]
    pub virtual_clock: Option<Duration>,
    /// Synthetic scene to generate when no input is given.
    #[arg(long, value_parser = ["static", "moving", "noise", "composite"])]
    pub scene: Option<String>,
    /// Fraction of exact-repeat frames in a composite scene.
    #[arg(long, value_name = "R", allow_negative_numbers = true)]
    pub redundancy: Option<f64>,
    /// Number of frames to generate.
    #[arg(long, value_name = "N")]
    pub frames: Option<u64>,
    /// Frame width in pixels.
    #[arg(long)]
    pub width: Option<u32>,
    /// Frame height in pixels.
    #[arg(long)]
    pub height: Option<u32>,
    /// Read frames from a .y4m file or a headerless 8-bit luma sequence.
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Directory reports are written to.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Segments an ablation pair is split into for paired tests.
    #[arg(long, value_name = "N")]
    pub segments: Option<usize>,
    /// Stub detector latency.
    #[arg(long, value_name = "DUR", value_parser = humantime::parse_duration)]
    pub latency: Option<Duration>,
    /// Half-width of the stub detector's latency jitter.
    #[arg(long, value_name = "DUR", value_parser = humantime::parse_duration)]
    pub jitter: Option<Duration>,
    /// Print the per-frame entropy table to standard output.
    #[arg(long)]
    pub inspect: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub segments: Option<usize>,
    /// Gating switch for `run`; `ablate` always runs both states.
    pub gating: Option<bool>,
    pub gate: GateSection,
    pub buffer: BufferSection,
    pub clock: ClockSection,
    pub scene: SceneSection,
    pub input: InputSection,
    pub detector: DetectorSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateSection {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BufferSection {
    pub capacity: Option<usize>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockKind {
    Monotonic,
    Virtual,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClockSection {
    pub mode: Option<ClockKind>,
    /// Virtual tick, or the monotonic pacing interval.
    #[serde(default, deserialize_with = "duration_opt")]
    pub tick: Option<Duration>,
    /// Monotonic only: read frames as fast as the source allows.
    pub unpaced: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSection {
    pub kind: Option<String>,
    pub frames: Option<u64>,
    pub redundancy: Option<f64>,
    pub width: Option<u32>,
    pub height: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputSection {
    pub path: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    #[serde(default, deserialize_with = "duration_opt")]
    pub latency: Option<Duration>,
    #[serde(default, deserialize_with = "duration_opt")]
    pub jitter: Option<Duration>,
    pub synthetic_truth: Option<bool>,
}

fn duration_opt<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
    let s = String::deserialize(d)?;
    humantime::parse_duration(&s)
        .map(Some)
        .map_err(|e| serde::de::Error::custom(format!("bad duration {s:?}: {e}")))
}

/// Converts a byte offset into 1-based line and column numbers.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

pub fn parse_config(text: &str, origin: &Path) -> Result<ConfigFile, CliError> {
    toml::from_str(text).map_err(|e| {
        let place = match e.span() {
            Some(span) => {
                let (line, col) = line_col(text, span.start);
                format!("line {line}, column {col}")
            }
            None => "unknown position".to_string(),
        };
        CliError::Usage(anyhow::anyhow!(
            "{}: {place}: {}",
            origin.display(),
            e.message()
        ))
    })
}

pub fn load_config(path: &Path) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))
        .map_err(CliError::Usage)?;
    parse_config(&text, path)
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone)]
pub struct Settings {
    pub pipeline: PipelineConfig,
    pub out: PathBuf,
    pub segments: usize,
    pub inspect: bool,
}

fn scene_kind(name: &str) -> Result<SceneKind, CliError> {
    SceneKind::parse(name).ok_or_else(|| {
        CliError::Usage(anyhow::anyhow!(
            "invalid scene: {name:?} (expected static, moving, noise or composite)"
        ))
    })
}

impl Settings {
    pub fn resolve(args: &SharedArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => load_config(path)?,
            None => ConfigFile::default(),
        };
        Self::layer(file, args)
    }

    pub fn layer(file: ConfigFile, args: &SharedArgs) -> Result<Self, CliError> {
        let defaults = PipelineConfig::default();
        let seed = args.seed.or(file.seed).unwrap_or(0);

        let base_gate = GateConfig::default();
        let gate = GateConfig {
            alpha: args.alpha.or(file.gate.alpha).unwrap_or(base_gate.alpha),
            beta: args.beta.or(file.gate.beta).unwrap_or(base_gate.beta),
            threshold: args.threshold.or(file.gate.threshold).unwrap_or(base_gate.threshold),
        };

        let tick = file.clock.tick.unwrap_or(entrogate::video::DEFAULT_TICK);
        let clock = match (args.virtual_clock, file.clock.mode) {
            (Some(tick), _) => ClockMode::Virtual { tick },
            (None, Some(ClockKind::Virtual)) => ClockMode::Virtual { tick },
            _ => ClockMode::Monotonic {
                pace: (!file.clock.unpaced.unwrap_or(false)).then_some(tick),
            },
        };

        let width = args.width.or(file.scene.width).unwrap_or(entrogate::video::DEFAULT_WIDTH);
        let height = args.height.or(file.scene.height).unwrap_or(entrogate::video::DEFAULT_HEIGHT);
        let input = args.input.clone().or(file.input.path);
        let source = match input {
            Some(path) if is_y4m(&path) => SourceSpec::Y4m { path },
            Some(path) => SourceSpec::Raw { path, width, height },
            None => {
                let kind = match args.scene.as_deref().or(file.scene.kind.as_deref()) {
                    Some(name) => scene_kind(name)?,
                    None => SceneKind::Composite,
                };
                SourceSpec::Scene {
                    scene: SceneSpec {
                        kind,
                        frame_count: args.frames.or(file.scene.frames).unwrap_or(100),
                        seed,
                        redundancy_ratio: args.redundancy.or(file.scene.redundancy).unwrap_or(0.5),
                    },
                    width,
                    height,
                }
            }
        };

        let base_detector = StubDetectorConfig::default();
        let detector = StubDetectorConfig {
            base_latency: args
                .latency
                .or(file.detector.latency)
                .unwrap_or(base_detector.base_latency),
            jitter: args.jitter.or(file.detector.jitter).unwrap_or(base_detector.jitter),
            seed,
            synthetic_truth: file.detector.synthetic_truth.unwrap_or(base_detector.synthetic_truth),
        };

        let pipeline = PipelineConfig {
            gate,
            buffer_capacity: args
                .buffer_capacity
                .or(file.buffer.capacity)
                .unwrap_or(DEFAULT_CAPACITY),
            gating_enabled: file.gating.unwrap_or(defaults.gating_enabled),
            clock,
            source,
            detector,
        };
        pipeline.validate().map_err(|e| CliError::Usage(e.into()))?;

        let segments = args.segments.or(file.segments).unwrap_or(DEFAULT_SEGMENTS);
        if segments == 0 {
            return Err(CliError::Usage(anyhow::anyhow!("invalid segments: must be >= 1")));
        }
        Ok(Self {
            pipeline,
            out: args
                .out
                .clone()
                .or(file.out)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
            segments,
            inspect: args.inspect,
        })
    }
}

pub fn is_y4m(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("y4m"))
}
