//! `clock-ground` command line.
//!
//! Exit codes: 0 ok, 1 internal error, 2 usage or malformed input,
//! 3 nothing detected, 4 quality check failed under `--strict`.
//!
//! Every subcommand reads and validates all of its inputs before it creates
//! any output, and outputs are written to a temporary file that is renamed
//! into place, so a killed job never leaves a partial file behind.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use tempfile::NamedTempFile;

use crate::align::{align_corpus, UnalignedEvent, DEFAULT_CLIP_POST_S, DEFAULT_CLIP_PRE_S, DEFAULT_TOLERANCE_CS};
use crate::bench::run_bench;
use crate::denoise::{ground_series, DenoiseError, Grounding};
use crate::gate::StaticRoi;
use crate::model::PipelineConfig;
use crate::pipeline::synthetic::{generate_synthetic, synthetic_events, SyntheticScenario};
use crate::pipeline::{run_extraction, BackendDescriptor, ExtractionResult, GateStats, PipelineError};
use crate::wire::{self, WireError};

pub const WORKERS_ENV: &str = "CLOCK_GROUND_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "clock-ground", version, about = "Ground broadcast frames to the game clock and align play-by-play")]
pub struct Cli {
    /// JSON file with pipeline settings (same field names as the config type).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for extraction.
    #[arg(long, global = true, env = WORKERS_ENV)]
    workers: Option<usize>,
    /// Reject unknown input fields and treat quality warnings as errors.
    #[arg(long, global = true)]
    strict: bool,
    /// Seed override for synthetic scenarios.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read per-frame detections and write the raw clock series.
    Extract(ExtractArgs),
    /// Reject outliers and interpolate a raw series into a per-frame timeline.
    Denoise(DenoiseArgs),
    /// Bind play-by-play events to frames of a grounded timeline.
    Align(AlignArgs),
    /// Write a synthetic detections stream (and optionally truth and events).
    Simulate(SimulateArgs),
    /// Time synthetic extraction at several worker counts.
    Bench(BenchArgs),
    /// extract, denoise and align in one go.
    RunAll(RunAllArgs),
}

#[derive(Debug, Args)]
#[group(id = "source", required = true, multiple = false)]
struct SourceArgs {
    /// Detections JSONL file, or `-` for standard input.
    #[arg(long, group = "source")]
    detections: Option<PathBuf>,
    /// Synthetic scenario JSON.
    #[arg(long, group = "source")]
    synthetic: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Frames in the video; defaults to one past the last detected frame.
    #[arg(long)]
    frame_count: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DenoiseArgs {
    #[arg(long)]
    raw: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ClipArgs {
    /// Seconds of video kept before each event.
    #[arg(long, default_value_t = DEFAULT_CLIP_PRE_S)]
    pre_s: f64,
    /// Seconds of video kept after each event.
    #[arg(long, default_value_t = DEFAULT_CLIP_POST_S)]
    post_s: f64,
    /// Largest clock mismatch accepted when grounding an event.
    #[arg(long, default_value_t = DEFAULT_TOLERANCE_CS)]
    tol_cs: u32,
}

#[derive(Debug, Args)]
struct AlignArgs {
    #[arg(long)]
    timeline: PathBuf,
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    clip: ClipArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Scenario JSON; defaults to a 10-minute period.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the true clock per frame.
    #[arg(long)]
    truth_out: Option<PathBuf>,
    /// Also write play-by-play events drawn from the run.
    #[arg(long, requires = "events")]
    events_out: Option<PathBuf>,
    #[arg(long)]
    events: Option<usize>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    frames: u64,
    /// Comma-separated worker counts; speedups are relative to the first.
    #[arg(long, default_value = "1,2,4")]
    workers_list: String,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
}

#[derive(Debug, Args)]
struct RunAllArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    frame_count: Option<u64>,
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    clip: ClipArgs,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    NoDetections(String),
    Quality(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Internal(_) => 1,
            CliError::Usage(_) => 2,
            CliError::NoDetections(_) => 3,
            CliError::Quality(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::NoDetections(m) | CliError::Quality(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::NoDetections => CliError::NoDetections(e.to_string()),
            PipelineError::BackendUnavailable(_) | PipelineError::Wire(_) | PipelineError::Config(_) => {
                CliError::Usage(e.to_string())
            }
            PipelineError::Series(d) => d.into(),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<DenoiseError> for CliError {
    fn from(e: DenoiseError) -> Self {
        match e {
            DenoiseError::EmptySeries | DenoiseError::NoVotes => CliError::NoDetections(e.to_string()),
            DenoiseError::InvalidSeries(_) => CliError::Usage(e.to_string()),
            DenoiseError::LowAgreement { .. } => CliError::Quality(e.to_string()),
        }
    }
}

impl From<WireError> for CliError {
    fn from(e: WireError) -> Self {
        match e {
            WireError::Malformed { .. } => CliError::Usage(e.to_string()),
            WireError::Io(io) => CliError::Internal(io.to_string()),
        }
    }
}

fn open_input(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_reader(open_input(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Write through a temporary sibling file, renamed into place on success.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let internal = |e: io::Error| CliError::Internal(format!("{}: {e}", path.display()));
    let mut tmp = NamedTempFile::new_in(dir).map_err(internal)?;
    {
        let mut w = io::BufWriter::new(tmp.as_file_mut());
        fill(&mut w).map_err(internal)?;
        w.flush().map_err(internal)?;
    }
    tmp.persist(path).map_err(|e| internal(e.error))?;
    Ok(())
}

struct Context {
    cfg: PipelineConfig,
    strict: bool,
    seed: Option<u64>,
}

fn load_config(cli: &Cli) -> Result<Context, CliError> {
    let mut cfg: PipelineConfig = match &cli.config {
        Some(p) => read_json(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    cfg.validate().map_err(|e| CliError::Usage(format!("config: {e}")))?;
    Ok(Context { cfg, strict: cli.strict, seed: cli.seed })
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<SyntheticScenario, CliError> {
    let mut sc: SyntheticScenario = read_json(path)?;
    if let Some(s) = seed {
        sc.rng_seed = s;
    }
    sc.validate().map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(sc)
}

fn extract(ctx: &Context, source: &SourceArgs, frame_count: Option<u64>) -> Result<ExtractionResult, CliError> {
    let backend = match (&source.detections, &source.synthetic) {
        (Some(p), None) if p.as_os_str() == "-" => BackendDescriptor::external(io::stdin().lock(), ctx.strict)?,
        (Some(p), None) => BackendDescriptor::replay(p, ctx.strict)?,
        (None, Some(p)) => BackendDescriptor::synthetic(load_scenario(p, ctx.seed)?)?,
        _ => return Err(CliError::Usage("give exactly one of --detections or --synthetic".into())),
    };
    let mut cfg = ctx.cfg.clone();
    let mut video = backend.implied_video(cfg.fps);
    if backend.kind() == crate::pipeline::BackendKind::Synthetic {
        cfg.fps = video.fps;
    }
    if let Some(n) = frame_count {
        video.frame_count = n;
    }
    Ok(run_extraction(video, &backend, &cfg)?)
}

#[derive(Serialize)]
struct ExtractSummary<'a> {
    frames: u64,
    samples: usize,
    quarter_votes: usize,
    stats: &'a GateStats,
    roi: &'a StaticRoi,
    roi_stable: bool,
}

fn extract_summary(res: &ExtractionResult) -> ExtractSummary<'_> {
    ExtractSummary {
        frames: res.raw.video().frame_count,
        samples: res.raw.samples().len(),
        quarter_votes: res.raw.quarter_votes().len(),
        stats: &res.stats,
        roi: &res.roi,
        roi_stable: res.roi.is_stable(),
    }
}

fn check_roi(ctx: &Context, res: &ExtractionResult) -> Result<(), CliError> {
    if ctx.strict && !res.roi.is_stable() {
        return Err(CliError::Quality(format!(
            "text regions are not static (support {:.3} / {:.3})",
            res.roi.time.support_fraction, res.roi.quarter.support_fraction
        )));
    }
    Ok(())
}

fn check_agreement(ctx: &Context, g: &Grounding) -> Result<(), CliError> {
    if ctx.strict && g.low_agreement {
        return Err(DenoiseError::LowAgreement { mode: g.series.quarter, agreement: g.series.quarter_agreement }.into());
    }
    Ok(())
}

fn emit<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    serde_json::to_writer(&mut *out, value).map_err(|e| CliError::Internal(e.to_string()))?;
    writeln!(out).map_err(|e| CliError::Internal(e.to_string()))
}

#[derive(Serialize)]
struct DenoiseSummary {
    frames: u64,
    anchors: usize,
    rejected_count: usize,
    grounded_frames: usize,
    quarter: u8,
    quarter_agreement: f64,
}

fn denoise_summary(g: &Grounding) -> DenoiseSummary {
    DenoiseSummary {
        frames: g.series.frame_count(),
        anchors: g.anchors.retained.len(),
        rejected_count: g.anchors.rejected_count(),
        grounded_frames: g.series.grounded_count(),
        quarter: g.series.quarter.index(),
        quarter_agreement: g.series.quarter_agreement,
    }
}

#[derive(Serialize)]
struct AlignSummary<'a> {
    events: usize,
    aligned: usize,
    coverage: f64,
    unaligned: &'a [UnalignedEvent],
}

#[derive(Serialize)]
struct RunAllSummary<'a> {
    frames: u64,
    samples: usize,
    rejected_count: usize,
    grounded_frames: usize,
    quarter: u8,
    quarter_agreement: f64,
    roi_stable: bool,
    events: usize,
    aligned: usize,
    coverage: f64,
    unaligned: &'a [UnalignedEvent],
}

fn parse_workers_list(s: &str) -> Result<Vec<usize>, CliError> {
    let list: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().ok().filter(|&w| w >= 1))
        .collect::<Option<_>>()
        .ok_or_else(|| CliError::Usage(format!("invalid --workers-list {s:?}")))?;
    if list.is_empty() {
        return Err(CliError::Usage("empty --workers-list".into()));
    }
    Ok(list)
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let ctx = load_config(cli)?;
    match &cli.command {
        Command::Extract(a) => {
            let res = extract(&ctx, &a.source, a.frame_count)?;
            check_roi(&ctx, &res)?;
            write_atomic(&a.out, |w| wire::write_raw_series(w, &res.raw))?;
            emit(out, &extract_summary(&res))
        }
        Command::Denoise(a) => {
            let raw = wire::read_raw_series(open_input(&a.raw)?, ctx.strict)?;
            let g = ground_series(&raw, raw.video().fps, ctx.cfg.theta_cs, ctx.cfg.max_gap_frames)?;
            check_agreement(&ctx, &g)?;
            write_atomic(&a.out, |w| wire::write_timeline(w, &g.series))?;
            emit(out, &denoise_summary(&g))
        }
        Command::Align(a) => {
            let series = wire::read_timeline(open_input(&a.timeline)?, ctx.cfg.fps, ctx.strict)?;
            let events = wire::read_events(open_input(&a.events)?, ctx.strict)?;
            validate_clip(&a.clip)?;
            let report = align_corpus(&events, &series, a.clip.pre_s, a.clip.post_s, a.clip.tol_cs);
            write_atomic(&a.out, |w| wire::write_aligned(w, &report.aligned))?;
            emit(
                out,
                &AlignSummary {
                    events: events.len(),
                    aligned: report.aligned.len(),
                    coverage: report.coverage,
                    unaligned: &report.unaligned,
                },
            )
        }
        Command::Simulate(a) => {
            let sc = match &a.scenario {
                Some(p) => load_scenario(p, ctx.seed)?,
                None => SyntheticScenario::new(600.0, ctx.seed.unwrap_or(0)),
            };
            let events = a.events.map(|n| synthetic_events(&sc, n, sc.rng_seed));
            let run = generate_synthetic(&sc);
            write_atomic(&a.out, |w| {
                wire::write_detections(w, run.frames.iter().map(|f| (f.truth.frame_idx, f.observations.as_slice())))
            })?;
            if let Some(p) = &a.truth_out {
                write_atomic(p, |w| run.truth().try_for_each(|t| serde_json::to_writer(&mut *w, t).map_err(io::Error::from).and_then(|_| writeln!(w))))?;
            }
            if let (Some(p), Some(ev)) = (&a.events_out, &events) {
                write_atomic(p, |w| wire::write_events(w, ev))?;
            }
            emit(
                out,
                &serde_json::json!({
                    "frames": run.video.frame_count,
                    "fps": run.video.fps,
                    "corrupted_fraction": run.corrupted_fraction(),
                    "events": events.as_ref().map_or(0, Vec::len),
                }),
            )
        }
        Command::Bench(a) => {
            if a.frames < 1 {
                return Err(CliError::Usage("--frames must be >= 1".into()));
            }
            let list = parse_workers_list(&a.workers_list)?;
            let rows = run_bench(a.frames, &list, ctx.seed.unwrap_or(0), a.repeats)?;
            rows.iter().try_for_each(|r| emit(out, r))
        }
        Command::RunAll(a) => {
            validate_clip(&a.clip)?;
            let events = wire::read_events(open_input(&a.events)?, ctx.strict)?;
            let res = extract(&ctx, &a.source, a.frame_count)?;
            check_roi(&ctx, &res)?;
            let g = ground_series(&res.raw, res.raw.video().fps, ctx.cfg.theta_cs, ctx.cfg.max_gap_frames)?;
            check_agreement(&ctx, &g)?;
            let report = align_corpus(&events, &g.series, a.clip.pre_s, a.clip.post_s, a.clip.tol_cs);

            std::fs::create_dir_all(&a.out_dir)
                .map_err(|e| CliError::Internal(format!("{}: {e}", a.out_dir.display())))?;
            write_atomic(&a.out_dir.join("raw.jsonl"), |w| wire::write_raw_series(w, &res.raw))?;
            write_atomic(&a.out_dir.join("timeline.jsonl"), |w| wire::write_timeline(w, &g.series))?;
            write_atomic(&a.out_dir.join("aligned.jsonl"), |w| wire::write_aligned(w, &report.aligned))?;
            emit(
                out,
                &RunAllSummary {
                    frames: g.series.frame_count(),
                    samples: res.raw.samples().len(),
                    rejected_count: g.anchors.rejected_count(),
                    grounded_frames: g.series.grounded_count(),
                    quarter: g.series.quarter.index(),
                    quarter_agreement: g.series.quarter_agreement,
                    roi_stable: res.roi.is_stable(),
                    events: events.len(),
                    aligned: report.aligned.len(),
                    coverage: report.coverage,
                    unaligned: &report.unaligned,
                },
            )
        }
    }
}

fn validate_clip(c: &ClipArgs) -> Result<(), CliError> {
    if !(c.pre_s >= 0.0 && c.post_s >= 0.0) {
        return Err(CliError::Usage("--pre-s and --post-s must be >= 0".into()));
    }
    Ok(())
}

/// Run the CLI with explicit arguments and output streams; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return e.exit_code();
        }
    };
    match dispatch(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "clock-ground: {}", e.message());
            e.exit_code()
        }
    }
}
