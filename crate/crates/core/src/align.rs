//! Binding play-by-play events to frames of a grounded period video.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::denoise::TimestampSeries;
use crate::model::{ClockTime, QuarterLabel};

pub const DEFAULT_TOLERANCE_CS: u32 = 100;
pub const DEFAULT_CLIP_PRE_S: f64 = 4.0;
pub const DEFAULT_CLIP_POST_S: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlayByPlayEvent {
    pub event_id: String,
    pub period: QuarterLabel,
    pub clock: ClockTime,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnalignedReason {
    /// The event belongs to a different period than the video.
    WrongPeriod,
    /// No grounded frame comes within tolerance of the event clock.
    NoCoverage,
}

impl fmt::Display for UnalignedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnalignedReason::WrongPeriod => "wrong_period",
            UnalignedReason::NoCoverage => "no_coverage",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AlignedEvent {
    pub event_id: String,
    pub anchor_frame: u64,
    pub clip_start_frame: u64,
    pub clip_end_frame: u64,
    pub residual_cs: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UnalignedEvent {
    pub event_id: String,
    pub reason: UnalignedReason,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentReport {
    pub aligned: Vec<AlignedEvent>,
    pub unaligned: Vec<UnalignedEvent>,
    pub coverage: f64,
}

/// Grounded frames compacted for search: frame indices ascending, clock
/// values non-increasing.
pub struct GroundedIndex {
    frames: Vec<u64>,
    values: Vec<u32>,
}

impl GroundedIndex {
    pub fn new(series: &TimestampSeries) -> Self {
        let (frames, values) = series
            .grounded
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.map(|c| (i as u64, c.centiseconds())))
            .unzip();
        GroundedIndex { frames, values }
    }

    /// Frame whose grounded clock is nearest to `clock`, earliest on ties,
    /// with its residual.
    pub fn nearest(&self, clock: ClockTime) -> Option<(u64, u32)> {
        let c = clock.centiseconds();
        let vals = &self.values;
        // values are non-increasing: [> c ...][<= c ...]
        let split = vals.partition_point(|&v| v > c);
        let above = split.checked_sub(1).map(|i| {
            let v = vals[i];
            (vals.partition_point(|&x| x > v), v - c)
        });
        let below = (split < vals.len()).then(|| (split, c - vals[split]));
        let (idx, residual) = match (above, below) {
            (Some(a), Some(b)) => if b.1 < a.1 { b } else { a },
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => return None,
        };
        Some((self.frames[idx], residual))
    }
}

/// Frame at which the displayed clock best matches the event clock.
pub fn ground_event(
    event: &PlayByPlayEvent,
    series: &TimestampSeries,
    tol_cs: u32,
) -> Result<u64, UnalignedReason> {
    ground_with(event, series.quarter, &GroundedIndex::new(series), tol_cs).map(|(f, _)| f)
}

fn ground_with(
    event: &PlayByPlayEvent,
    quarter: QuarterLabel,
    index: &GroundedIndex,
    tol_cs: u32,
) -> Result<(u64, u32), UnalignedReason> {
    if event.period != quarter {
        return Err(UnalignedReason::WrongPeriod);
    }
    match index.nearest(event.clock) {
        Some((frame, residual)) if residual <= tol_cs => Ok((frame, residual)),
        _ => Err(UnalignedReason::NoCoverage),
    }
}

/// Ground every event and cut a clip window around each anchor frame.
///
/// The report is sorted (aligned by anchor frame, unaligned by id), so it
/// does not depend on the order events come in.
pub fn align_corpus(
    events: &[PlayByPlayEvent],
    series: &TimestampSeries,
    pre_s: f64,
    post_s: f64,
    tol_cs: u32,
) -> AlignmentReport {
    let index = GroundedIndex::new(series);
    let fps = series.video.fps;
    let pre = fps.frames_in(pre_s.max(0.0));
    let post = fps.frames_in(post_s.max(0.0));
    let last_frame = series.frame_count().saturating_sub(1);

    let mut aligned = Vec::new();
    let mut unaligned = Vec::new();
    for e in events {
        match ground_with(e, series.quarter, &index, tol_cs) {
            Ok((anchor, residual_cs)) => aligned.push(AlignedEvent {
                event_id: e.event_id.clone(),
                anchor_frame: anchor,
                clip_start_frame: anchor.saturating_sub(pre),
                clip_end_frame: anchor.saturating_add(post).min(last_frame),
                residual_cs,
            }),
            Err(reason) => unaligned.push(UnalignedEvent { event_id: e.event_id.clone(), reason }),
        }
    }
    aligned.sort_by(|a, b| (a.anchor_frame, &a.event_id, a).cmp(&(b.anchor_frame, &b.event_id, b)));
    unaligned.sort();
    let coverage = if events.is_empty() {
        0.0
    } else {
        aligned.len() as f64 / events.len() as f64
    };
    AlignmentReport { aligned, unaligned, coverage }
}
