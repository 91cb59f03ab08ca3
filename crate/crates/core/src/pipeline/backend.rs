use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::synthetic::{render_frame, SyntheticScenario};
use super::PipelineError;
use crate::model::VideoMeta;
use crate::wire::{read_detections, ObservationIndex, RegionObservation};

/// Per-worker handle onto a detection/recognition backend.
pub trait FrameSource: Send {
    /// Regions detected in a frame together with their readings. A frame
    /// the backend knows nothing about yields an empty list.
    fn observe(&mut self, frame_idx: u64) -> Result<Vec<RegionObservation>, PipelineError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Replay,
    Synthetic,
    External,
}

#[derive(Debug, Clone)]
enum Source {
    Indexed(Arc<ObservationIndex>),
    Synthetic(Arc<SyntheticScenario>),
}

/// Where per-frame observations come from. Cheap to clone; every worker
/// opens its own [`FrameSource`] from it.
#[derive(Debug, Clone)]
pub struct BackendDescriptor {
    kind: BackendKind,
    origin: Option<PathBuf>,
    source: Source,
}

impl BackendDescriptor {
    /// Detections JSONL file written by the model adapter.
    pub fn replay(path: impl AsRef<Path>, strict: bool) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let file = File::open(path)
            .map_err(|e| PipelineError::BackendUnavailable(format!("{}: {e}", path.display())))?;
        let index = read_detections(BufReader::new(file), strict)?;
        Ok(BackendDescriptor {
            kind: BackendKind::Replay,
            origin: Some(path.to_path_buf()),
            source: Source::Indexed(Arc::new(index)),
        })
    }

    /// Adapter output consumed from a stream (a pipe or standard input).
    pub fn external<R: BufRead>(reader: R, strict: bool) -> Result<Self, PipelineError> {
        let index = read_detections(reader, strict)?;
        Ok(BackendDescriptor { kind: BackendKind::External, origin: None, source: Source::Indexed(Arc::new(index)) })
    }

    pub fn synthetic(scenario: SyntheticScenario) -> Result<Self, PipelineError> {
        scenario.validate()?;
        Ok(BackendDescriptor {
            kind: BackendKind::Synthetic,
            origin: None,
            source: Source::Synthetic(Arc::new(scenario)),
        })
    }

    pub fn kind(&self) -> BackendKind {
        self.kind
    }

    pub fn origin(&self) -> Option<&Path> {
        self.origin.as_deref()
    }

    /// Video extent implied by the backend: the scenario length, or one
    /// past the last frame with a record.
    pub fn implied_video(&self, fps: crate::model::Fps) -> VideoMeta {
        match &self.source {
            Source::Synthetic(s) => s.video(),
            Source::Indexed(idx) => VideoMeta::new(idx.keys().next_back().map_or(0, |f| f + 1), fps),
        }
    }

    pub fn open(&self) -> Box<dyn FrameSource> {
        match &self.source {
            Source::Indexed(idx) => Box::new(IndexedSource(Arc::clone(idx))),
            Source::Synthetic(s) => Box::new(SyntheticSource(Arc::clone(s))),
        }
    }
}

struct IndexedSource(Arc<ObservationIndex>);

impl FrameSource for IndexedSource {
    fn observe(&mut self, frame_idx: u64) -> Result<Vec<RegionObservation>, PipelineError> {
        Ok(self.0.get(&frame_idx).cloned().unwrap_or_default())
    }
}

struct SyntheticSource(Arc<SyntheticScenario>);

impl FrameSource for SyntheticSource {
    fn observe(&mut self, frame_idx: u64) -> Result<Vec<RegionObservation>, PipelineError> {
        Ok(render_frame(&self.0, frame_idx).observations)
    }
}
