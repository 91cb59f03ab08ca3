//! JSON Lines formats read and written by the pipeline.
//!
//! | stream            | one line per                                  |
//! |-------------------|-----------------------------------------------|
//! | detections        | detected region of a frame (adapter output)   |
//! | raw series        | frame with a parsed reading, after a meta line|
//! | grounded timeline | frame of the video                            |
//! | play-by-play      | game event                                    |
//! | aligned events    | grounded event with its clip window           |
//!
//! Readers take a `strict` flag: when set, unknown fields are an error,
//! otherwise they are ignored.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{AlignedEvent, PlayByPlayEvent};
use crate::denoise::{ClockSample, RawSeries, TimestampSeries};
use crate::model::{BBox, ClockTime, Detection, Fps, OcrReading, QuarterLabel, RegionKind, VideoMeta};
use crate::parser::parse_time_remaining;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn malformed(line: usize, message: impl Into<String>) -> WireError {
    WireError::Malformed { line, message: message.into() }
}

/// Parse one JSON object, refusing keys outside `known` in strict mode.
fn parse_record<T: DeserializeOwned>(text: &str, line: usize, known: &[&str], strict: bool) -> Result<T, WireError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| malformed(line, e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| malformed(line, "expected a JSON object"))?;
    if strict {
        if let Some(k) = obj.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(malformed(line, format!("unknown field {k:?}")));
        }
    }
    serde_json::from_value(value).map_err(|e| malformed(line, e.to_string()))
}

/// Non-blank lines with their 1-based line numbers.
fn lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String), WireError>> {
    reader
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)).map_err(WireError::from))
        .filter(|r| !matches!(r, Ok((_, l)) if l.trim().is_empty()))
}

fn write_line<W: Write + ?Sized, T: Serialize>(w: &mut W, record: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, record)?;
    w.write_all(b"\n")
}

// ---------------------------------------------------------------------------
// detections

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub frame_idx: u64,
    pub region: RegionKind,
    pub bbox: [f64; 4],
    pub object_prob: f64,
    pub iou_est: f64,
    pub text: String,
    pub text_conf: f64,
}

const DETECTION_FIELDS: &[&str] = &["frame_idx", "region", "bbox", "object_prob", "iou_est", "text", "text_conf"];

/// A detected region together with what was read inside it, if anything.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionObservation {
    pub detection: Detection,
    pub reading: Option<OcrReading>,
}

impl DetectionRecord {
    pub fn from_observation(frame_idx: u64, obs: &RegionObservation) -> Self {
        let (text, text_conf) = obs
            .reading
            .as_ref()
            .map_or((String::new(), 0.0), |r| (r.raw_text.clone(), r.text_conf));
        DetectionRecord {
            frame_idx,
            region: obs.detection.region,
            bbox: obs.detection.bbox.to_array(),
            object_prob: obs.detection.object_prob,
            iou_est: obs.detection.iou_est,
            text,
            text_conf,
        }
    }

    pub fn to_observation(&self) -> Result<RegionObservation, crate::model::ModelError> {
        let [x, y, w, h] = self.bbox;
        let detection = Detection::new(self.region, BBox::new(x, y, w, h)?, self.object_prob, self.iou_est)?;
        let reading = if self.text.is_empty() {
            None
        } else {
            Some(OcrReading::new(self.region, self.text.clone(), self.text_conf)?)
        };
        Ok(RegionObservation { detection, reading })
    }
}

/// Observations grouped by frame.
pub type ObservationIndex = BTreeMap<u64, Vec<RegionObservation>>;

/// Read a detections stream. Strict mode additionally requires
/// non-decreasing `frame_idx`.
pub fn read_detections<R: BufRead>(reader: R, strict: bool) -> Result<ObservationIndex, WireError> {
    let mut index = ObservationIndex::new();
    let mut last_frame = 0;
    for item in lines(reader) {
        let (n, text) = item?;
        let rec: DetectionRecord = parse_record(&text, n, DETECTION_FIELDS, strict)?;
        if strict && rec.frame_idx < last_frame {
            return Err(malformed(n, format!("frame_idx {} after {}", rec.frame_idx, last_frame)));
        }
        last_frame = rec.frame_idx;
        let obs = rec.to_observation().map_err(|e| malformed(n, e.to_string()))?;
        index.entry(rec.frame_idx).or_default().push(obs);
    }
    Ok(index)
}

pub fn write_detections<'a, W, I>(w: &mut W, frames: I) -> std::io::Result<()>
where
    W: Write + ?Sized,
    I: IntoIterator<Item = (u64, &'a [RegionObservation])>,
{
    for (frame_idx, observations) in frames {
        for obs in observations {
            write_line(w, &DetectionRecord::from_observation(frame_idx, obs))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// raw series

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RawRecord {
    Meta {
        frame_count: u64,
        fps: Fps,
    },
    Reading {
        frame_idx: u64,
        time_remaining_cs: Option<ClockTime>,
        quarter: Option<QuarterLabel>,
    },
}

const RAW_FIELDS: &[&str] = &["kind", "frame_count", "fps", "frame_idx", "time_remaining_cs", "quarter"];

pub fn write_raw_series<W: Write + ?Sized>(w: &mut W, raw: &RawSeries) -> std::io::Result<()> {
    let video = raw.video();
    write_line(w, &RawRecord::Meta { frame_count: video.frame_count, fps: video.fps })?;
    let mut times = raw.samples().iter().peekable();
    let mut votes = raw.quarter_votes().iter().peekable();
    loop {
        let next_t = times.peek().map(|s| s.frame_idx);
        let next_q = votes.peek().map(|v| v.0);
        let frame_idx = match (next_t, next_q) {
            (None, None) => break,
            (a, b) => a.into_iter().chain(b).min().expect("one side present"),
        };
        let time_remaining_cs = times.next_if(|s| s.frame_idx == frame_idx).map(|s| s.time);
        let quarter = votes.next_if(|v| v.0 == frame_idx).map(|v| v.1);
        write_line(w, &RawRecord::Reading { frame_idx, time_remaining_cs, quarter })?;
    }
    Ok(())
}

pub fn read_raw_series<R: BufRead>(reader: R, strict: bool) -> Result<RawSeries, WireError> {
    let mut video: Option<VideoMeta> = None;
    let mut samples = Vec::new();
    let mut votes = Vec::new();
    for item in lines(reader) {
        let (n, text) = item?;
        match parse_record::<RawRecord>(&text, n, RAW_FIELDS, strict)? {
            RawRecord::Meta { frame_count, fps } => {
                if video.replace(VideoMeta::new(frame_count, fps)).is_some() {
                    return Err(malformed(n, "second meta record"));
                }
            }
            RawRecord::Reading { frame_idx, time_remaining_cs, quarter } => {
                if video.is_none() {
                    return Err(malformed(n, "reading before meta record"));
                }
                samples.extend(time_remaining_cs.map(|t| ClockSample::new(frame_idx, t)));
                votes.extend(quarter.map(|q| (frame_idx, q)));
            }
        }
    }
    let video = video.ok_or_else(|| malformed(0, "missing meta record"))?;
    RawSeries::new(video, samples, votes).map_err(|e| malformed(0, e.to_string()))
}

// ---------------------------------------------------------------------------
// grounded timeline

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineRecord {
    pub frame_idx: u64,
    pub quarter: QuarterLabel,
    pub time_remaining_cs: Option<ClockTime>,
}

const TIMELINE_FIELDS: &[&str] = &["frame_idx", "quarter", "time_remaining_cs"];

pub fn write_timeline<W: Write + ?Sized>(w: &mut W, series: &TimestampSeries) -> std::io::Result<()> {
    for (i, g) in series.grounded.iter().enumerate() {
        write_line(w, &TimelineRecord { frame_idx: i as u64, quarter: series.quarter, time_remaining_cs: *g })?;
    }
    Ok(())
}

/// Read a timeline back. Frames must be listed `0, 1, 2, …` under one quarter.
pub fn read_timeline<R: BufRead>(reader: R, fps: Fps, strict: bool) -> Result<TimestampSeries, WireError> {
    let mut grounded = Vec::new();
    let mut quarter = None;
    for item in lines(reader) {
        let (n, text) = item?;
        let rec: TimelineRecord = parse_record(&text, n, TIMELINE_FIELDS, strict)?;
        if rec.frame_idx != grounded.len() as u64 {
            return Err(malformed(n, format!("expected frame {}, got {}", grounded.len(), rec.frame_idx)));
        }
        if *quarter.get_or_insert(rec.quarter) != rec.quarter {
            return Err(malformed(n, "timeline mixes quarters"));
        }
        grounded.push(rec.time_remaining_cs);
    }
    let quarter = quarter.ok_or_else(|| malformed(0, "empty timeline"))?;
    Ok(TimestampSeries {
        video: VideoMeta::new(grounded.len() as u64, fps),
        grounded,
        quarter,
        quarter_agreement: 1.0,
    })
}

// ---------------------------------------------------------------------------
// play-by-play and aligned output

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub event_id: String,
    pub period: u8,
    pub clock: String,
    pub label: String,
}

const EVENT_FIELDS: &[&str] = &["event_id", "period", "clock", "label"];

impl EventRecord {
    pub fn from_event(e: &PlayByPlayEvent) -> Self {
        EventRecord {
            event_id: e.event_id.clone(),
            period: e.period.index(),
            clock: e.clock.to_string(),
            label: e.label.clone(),
        }
    }
}

pub fn read_events<R: BufRead>(reader: R, strict: bool) -> Result<Vec<PlayByPlayEvent>, WireError> {
    let mut events = Vec::new();
    for item in lines(reader) {
        let (n, text) = item?;
        let rec: EventRecord = parse_record(&text, n, EVENT_FIELDS, strict)?;
        let period = QuarterLabel::new(rec.period).map_err(|e| malformed(n, e.to_string()))?;
        let clock = parse_time_remaining(&rec.clock).map_err(|e| malformed(n, e.to_string()))?;
        events.push(PlayByPlayEvent { event_id: rec.event_id, period, clock, label: rec.label });
    }
    Ok(events)
}

pub fn write_events<W: Write + ?Sized>(w: &mut W, events: &[PlayByPlayEvent]) -> std::io::Result<()> {
    events.iter().try_for_each(|e| write_line(w, &EventRecord::from_event(e)))
}

const ALIGNED_FIELDS: &[&str] = &["event_id", "anchor_frame", "clip_start_frame", "clip_end_frame", "residual_cs"];

pub fn write_aligned<W: Write + ?Sized>(w: &mut W, aligned: &[AlignedEvent]) -> std::io::Result<()> {
    aligned.iter().try_for_each(|a| write_line(w, a))
}

pub fn read_aligned<R: BufRead>(reader: R, strict: bool) -> Result<Vec<AlignedEvent>, WireError> {
    lines(reader)
        .map(|item| {
            let (n, text) = item?;
            parse_record(&text, n, ALIGNED_FIELDS, strict)
        })
        .collect()
}
