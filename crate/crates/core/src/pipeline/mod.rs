//! Frame-by-frame text extraction.
//!
//! For every sampled frame the backend reports detected regions and their
//! text; detections are gated on confidence, readings are parsed against
//! the scoreboard grammar, and frames that survive both become samples of
//! the raw series. Frames are split into contiguous chunks, one per worker,
//! and merged back in chunk order, so the result does not depend on the
//! number of workers.

mod backend;
mod partition;
pub mod synthetic;

use std::sync::mpsc;
use std::thread;

use serde::Serialize;
use thiserror::Error;

pub use backend::{BackendDescriptor, BackendKind, FrameSource};
pub use partition::{merge_chunks, partition_frames, sampled_frame_count, WorkChunk};

use crate::denoise::{ClockSample, DenoiseError, RawSeries};
use crate::gate::{consensus_roi, gate_frame, GatedRegions, RoiError, StaticRoi, SUPPORT_IOU};
use crate::model::{Detection, ModelError, PipelineConfig, QuarterLabel, RegionKind, VideoMeta};
use crate::parser::{parse_quarter, parse_time_remaining};
use crate::wire::{RegionObservation, WireError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("no frame had both text regions above the confidence threshold")]
    NoDetections,
    #[error("chunk {0} missing from worker results")]
    MissingChunk(usize),
    #[error("chunk {0} reported twice")]
    DuplicateChunk(usize),
    #[error("worker thread panicked")]
    WorkerPanicked,
    #[error("invalid configuration: {0}")]
    Config(#[from] ModelError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Series(#[from] DenoiseError),
}

/// Consensus is estimated from every `CONSENSUS_STRIDE`-th sampled frame,
/// densified so that at least `CONSENSUS_MIN_FRAMES` frames are visited.
pub const CONSENSUS_STRIDE: u64 = 30;
pub const CONSENSUS_MIN_FRAMES: u64 = 50;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GateStats {
    pub sampled_frames: u64,
    pub accepted_frames: u64,
    pub time_parsed: u64,
    pub time_unparseable: u64,
    pub time_missing: u64,
    pub quarter_parsed: u64,
    pub quarter_unparseable: u64,
    pub quarter_missing: u64,
    /// Accepted frames whose boxes do not overlap the consensus ROI.
    pub off_roi_frames: u64,
}

impl GateStats {
    fn absorb(&mut self, o: &GateStats) {
        self.sampled_frames += o.sampled_frames;
        self.accepted_frames += o.accepted_frames;
        self.time_parsed += o.time_parsed;
        self.time_unparseable += o.time_unparseable;
        self.time_missing += o.time_missing;
        self.quarter_parsed += o.quarter_parsed;
        self.quarter_unparseable += o.quarter_unparseable;
        self.quarter_missing += o.quarter_missing;
        self.off_roi_frames += o.off_roi_frames;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionResult {
    pub raw: RawSeries,
    pub roi: StaticRoi,
    pub stats: GateStats,
}

#[derive(Debug, Default)]
struct ChunkOutput {
    samples: Vec<ClockSample>,
    votes: Vec<(u64, QuarterLabel)>,
    accepted: Vec<(u64, GatedRegions)>,
    stats: GateStats,
}

/// What one frame contributed after gating and parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutcome {
    pub gated: GatedRegions,
    pub time: Option<Result<crate::model::ClockTime, crate::parser::ParseError>>,
    pub quarter: Option<Result<QuarterLabel, crate::parser::ParseError>>,
}

/// Gate one frame's observations and parse the readings of the selected
/// regions. `time`/`quarter` are `None` when the frame was rejected or the
/// selected region carried no text.
pub fn process_frame(observations: &[RegionObservation], conf_threshold: f64) -> FrameOutcome {
    let detections: Vec<Detection> = observations.iter().map(|o| o.detection).collect();
    let gated = gate_frame(&detections, conf_threshold);
    let text = |kind| {
        gated
            .selected_index(kind)
            .and_then(|i| observations[i].reading.as_ref())
            .map(|r| r.raw_text.as_str())
    };
    FrameOutcome {
        gated,
        time: text(RegionKind::TimeRemaining).map(parse_time_remaining),
        quarter: text(RegionKind::Quarter).map(parse_quarter),
    }
}

fn run_chunk(
    chunk: WorkChunk,
    source: &mut dyn FrameSource,
    cfg: &PipelineConfig,
) -> Result<ChunkOutput, PipelineError> {
    let mut out = ChunkOutput::default();
    for frame_idx in chunk.frames(cfg.step_interval) {
        let observations = source.observe(frame_idx)?;
        let outcome = process_frame(&observations, cfg.conf_threshold);
        out.stats.sampled_frames += 1;
        if !outcome.gated.accepted() {
            continue;
        }
        out.stats.accepted_frames += 1;
        out.accepted.push((frame_idx, outcome.gated));
        match outcome.time {
            Some(Ok(t)) => {
                out.stats.time_parsed += 1;
                out.samples.push(ClockSample::new(frame_idx, t));
            }
            Some(Err(_)) => out.stats.time_unparseable += 1,
            None => out.stats.time_missing += 1,
        }
        match outcome.quarter {
            Some(Ok(q)) => {
                out.stats.quarter_parsed += 1;
                out.votes.push((frame_idx, q));
            }
            Some(Err(_)) => out.stats.quarter_unparseable += 1,
            None => out.stats.quarter_missing += 1,
        }
    }
    Ok(out)
}

fn run_chunks(
    chunks: &[WorkChunk],
    backend: &BackendDescriptor,
    cfg: &PipelineConfig,
) -> Result<Vec<ChunkOutput>, PipelineError> {
    if cfg.workers <= 1 || chunks.len() <= 1 {
        let mut source = backend.open();
        let partials = chunks
            .iter()
            .map(|c| run_chunk(*c, source.as_mut(), cfg).map(|o| (c.chunk_id, o)))
            .collect::<Result<Vec<_>, _>>()?;
        return merge_chunks(partials, chunks.len());
    }

    let (tx, rx) = mpsc::channel();
    let joined = thread::scope(|scope| {
        let handles: Vec<_> = chunks
            .iter()
            .map(|&chunk| {
                let tx = tx.clone();
                scope.spawn(move || {
                    let mut source = backend.open();
                    let result = run_chunk(chunk, source.as_mut(), cfg);
                    // the receiver outlives the scope
                    let _ = tx.send((chunk.chunk_id, result));
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join()).collect::<Result<Vec<_>, _>>()
    });
    drop(tx);
    joined.map_err(|_| PipelineError::WorkerPanicked)?;

    let partials = rx
        .into_iter()
        .map(|(id, r)| r.map(|o| (id, o)))
        .collect::<Result<Vec<_>, _>>()?;
    merge_chunks(partials, chunks.len())
}

/// Extract the raw clock series of one period video.
pub fn run_extraction(
    video: VideoMeta,
    backend: &BackendDescriptor,
    cfg: &PipelineConfig,
) -> Result<ExtractionResult, PipelineError> {
    cfg.validate()?;
    let video = VideoMeta { fps: cfg.fps, ..video };
    let chunks = partition_frames(video.frame_count, cfg.step_interval, cfg.workers);
    let outputs = run_chunks(&chunks, backend, cfg)?;

    let mut samples = Vec::new();
    let mut votes = Vec::new();
    let mut accepted = Vec::new();
    let mut stats = GateStats::default();
    for o in outputs {
        samples.extend(o.samples);
        votes.extend(o.votes);
        accepted.extend(o.accepted);
        stats.absorb(&o.stats);
    }

    let roi = static_roi(&accepted, video.frame_count, cfg.step_interval)?;
    stats.off_roi_frames = accepted
        .iter()
        .filter(|(_, g)| {
            RegionKind::ALL
                .iter()
                .any(|&k| g.bbox(k).is_some_and(|b| b.iou(&roi.region(k).bbox) < SUPPORT_IOU))
        })
        .count() as u64;

    let raw = RawSeries::new(video, samples, votes)?;
    Ok(ExtractionResult { raw, roi, stats })
}

/// Consensus over the sparse subsample of accepted frames, falling back to
/// all accepted frames when the subsample caught none. A moving scorebug is
/// not fatal here: the consensus is returned and its support fractions tell
/// the caller.
fn static_roi(accepted: &[(u64, GatedRegions)], frame_count: u64, step: u64) -> Result<StaticRoi, PipelineError> {
    let sampled = sampled_frame_count(frame_count, step);
    let stride = (sampled / CONSENSUS_MIN_FRAMES).clamp(1, CONSENSUS_STRIDE);
    let subsample: Vec<_> = accepted.iter().filter(|(f, _)| (f / step).is_multiple_of(stride)).copied().collect();
    let first = if subsample.is_empty() { consensus_roi(accepted) } else { consensus_roi(&subsample) };
    match first {
        Ok(roi) => Ok(roi),
        Err(RoiError::UnstableRoi { roi }) => Ok(*roi),
        Err(RoiError::NoDetections) => Err(PipelineError::NoDetections),
    }
}
