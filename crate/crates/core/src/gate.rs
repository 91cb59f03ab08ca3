//! Confidence gating of per-frame detections and static-ROI consensus.

use serde::Serialize;
use thiserror::Error;

use crate::model::{BBox, Detection, RegionKind};

/// Minimum overlap for a box to count as supporting the consensus.
pub const SUPPORT_IOU: f64 = 0.5;
/// Below this support fraction the scorebug is considered to be moving.
pub const MIN_SUPPORT_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoiError {
    #[error("no frame had both text regions above the confidence threshold")]
    NoDetections,
    #[error("text regions are not static (support {:.3} / {:.3})", .roi.time.support_fraction, .roi.quarter.support_fraction)]
    UnstableRoi { roi: Box<StaticRoi> },
}

/// Detection confidence `object probability × IoU estimate`.
pub fn detection_score(d: &Detection) -> f64 {
    d.object_prob * d.iou_est
}

/// Outcome of gating one frame. Either both boxes are present or neither is.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GatedRegions {
    pub time_bbox: Option<BBox>,
    pub quarter_bbox: Option<BBox>,
    /// Index into the gated detection list of each selected box.
    selected: [Option<usize>; 2],
}

impl GatedRegions {
    pub fn accepted(&self) -> bool {
        self.time_bbox.is_some() && self.quarter_bbox.is_some()
    }

    pub fn bbox(&self, kind: RegionKind) -> Option<BBox> {
        match kind {
            RegionKind::TimeRemaining => self.time_bbox,
            RegionKind::Quarter => self.quarter_bbox,
        }
    }

    /// Position, in the list passed to [`gate_frame`], of the detection
    /// chosen for `kind`.
    pub fn selected_index(&self, kind: RegionKind) -> Option<usize> {
        self.selected[kind_slot(kind)]
    }
}

fn kind_slot(kind: RegionKind) -> usize {
    match kind {
        RegionKind::TimeRemaining => 0,
        RegionKind::Quarter => 1,
    }
}

/// Keep the highest-scoring detection of each kind if it reaches `threshold`.
/// A frame where either kind falls short yields the empty result.
///
/// Ties on score keep the earliest detection in the list.
pub fn gate_frame(dets: &[Detection], threshold: f64) -> GatedRegions {
    let mut best: [Option<(usize, f64)>; 2] = [None, None];
    for (i, d) in dets.iter().enumerate() {
        let score = detection_score(d);
        if score < threshold {
            continue;
        }
        let slot = &mut best[kind_slot(d.region)];
        if slot.is_none_or(|(_, s)| score > s) {
            *slot = Some((i, score));
        }
    }
    match best {
        [Some((ti, _)), Some((qi, _))] => GatedRegions {
            time_bbox: Some(dets[ti].bbox),
            quarter_bbox: Some(dets[qi].bbox),
            selected: [Some(ti), Some(qi)],
        },
        _ => GatedRegions::default(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionConsensus {
    pub bbox: BBox,
    pub support_count: usize,
    pub support_fraction: f64,
}

/// Where each text region sits across the video.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StaticRoi {
    pub time: RegionConsensus,
    pub quarter: RegionConsensus,
    /// Number of accepted frames the consensus was built from.
    pub frames_with_detection: usize,
}

impl StaticRoi {
    pub fn region(&self, kind: RegionKind) -> &RegionConsensus {
        match kind {
            RegionKind::TimeRemaining => &self.time,
            RegionKind::Quarter => &self.quarter,
        }
    }

    pub fn is_stable(&self) -> bool {
        self.time.support_fraction >= MIN_SUPPORT_FRACTION
            && self.quarter.support_fraction >= MIN_SUPPORT_FRACTION
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn region_consensus(boxes: &[BBox]) -> RegionConsensus {
    let component = |f: fn(&BBox) -> f64| {
        let mut v: Vec<f64> = boxes.iter().map(f).collect();
        median(&mut v)
    };
    let bbox = BBox {
        x: component(|b| b.x),
        y: component(|b| b.y),
        w: component(|b| b.w),
        h: component(|b| b.h),
    };
    let support_count = boxes.iter().filter(|b| b.iou(&bbox) >= SUPPORT_IOU).count();
    RegionConsensus {
        bbox,
        support_count,
        support_fraction: support_count as f64 / boxes.len() as f64,
    }
}

/// Component-wise median box per region over every accepted frame.
///
/// Fails with [`RoiError::UnstableRoi`] (still carrying the consensus) when
/// fewer than 80% of the boxes overlap it.
pub fn consensus_roi<'a, I>(frames: I) -> Result<StaticRoi, RoiError>
where
    I: IntoIterator<Item = &'a (u64, GatedRegions)>,
{
    let mut time = Vec::new();
    let mut quarter = Vec::new();
    for (_, g) in frames {
        if let (Some(t), Some(q)) = (g.time_bbox, g.quarter_bbox) {
            time.push(t);
            quarter.push(q);
        }
    }
    if time.is_empty() {
        return Err(RoiError::NoDetections);
    }
    let roi = StaticRoi {
        time: region_consensus(&time),
        quarter: region_consensus(&quarter),
        frames_with_detection: time.len(),
    };
    if roi.is_stable() {
        Ok(roi)
    } else {
        Err(RoiError::UnstableRoi { roi: Box::new(roi) })
    }
}
