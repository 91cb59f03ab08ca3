use serde::Serialize;

use super::PipelineError;

/// A contiguous half-open range of frames handled by one worker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WorkChunk {
    pub chunk_id: usize,
    pub start_frame: u64,
    pub end_frame: u64,
}

impl WorkChunk {
    /// Sampled frames of this chunk for the given step.
    pub fn frames(&self, step: u64) -> impl Iterator<Item = u64> {
        let first = self.start_frame.div_ceil(step) * step;
        (first..self.end_frame).step_by(step as usize)
    }
}

pub fn sampled_frame_count(frame_count: u64, step: u64) -> u64 {
    frame_count.div_ceil(step.max(1))
}

/// Split the sampled frames `0, step, 2·step, …` into at most `workers`
/// contiguous chunks whose sizes differ by at most one.
pub fn partition_frames(frame_count: u64, step: u64, workers: usize) -> Vec<WorkChunk> {
    let step = step.max(1);
    let sampled = sampled_frame_count(frame_count, step);
    let count = (workers.max(1) as u64).min(sampled);
    if count == 0 {
        return Vec::new();
    }
    let (base, extra) = (sampled / count, sampled % count);
    let mut chunks = Vec::with_capacity(count as usize);
    let mut start = 0u64;
    for id in 0..count {
        let len = base + u64::from(id < extra);
        let end = start + len;
        chunks.push(WorkChunk {
            chunk_id: id as usize,
            start_frame: start * step,
            end_frame: (end * step).min(frame_count),
        });
        start = end;
    }
    chunks
}

/// Reassemble per-chunk outputs in chunk order, whatever order they arrived in.
pub fn merge_chunks<T>(mut partials: Vec<(usize, T)>, expected: usize) -> Result<Vec<T>, PipelineError> {
    partials.sort_by_key(|(id, _)| *id);
    for (pos, (id, _)) in partials.iter().enumerate() {
        if *id != pos {
            return Err(if *id > pos {
                PipelineError::MissingChunk(pos)
            } else {
                PipelineError::DuplicateChunk(*id)
            });
        }
    }
    if partials.len() < expected {
        return Err(PipelineError::MissingChunk(partials.len()));
    }
    if partials.len() > expected {
        return Err(PipelineError::DuplicateChunk(expected));
    }
    Ok(partials.into_iter().map(|(_, p)| p).collect())
}
