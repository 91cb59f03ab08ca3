//! Domain types shared by every stage of the grounding pipeline.
//!
//! All constructors validate their input; none of these types can be built
//! in a state that violates its invariants. Everything here is a plain value
//! and is `Send + Sync`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Largest representable time remaining: 60:00.00.
pub const MAX_CENTISECONDS: u32 = 360_000;

/// Errors raised by validated constructors.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("invalid value: {0}")]
    Invalid(String),
}

/// Time remaining in a period, in integer centiseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct ClockTime(u32);

impl ClockTime {
    pub const ZERO: ClockTime = ClockTime(0);
    pub const MAX: ClockTime = ClockTime(MAX_CENTISECONDS);

    pub fn from_centiseconds(cs: u32) -> Result<Self, ModelError> {
        if cs > MAX_CENTISECONDS {
            return Err(ModelError::OutOfRange(format!(
                "{cs} cs exceeds {MAX_CENTISECONDS} cs"
            )));
        }
        Ok(ClockTime(cs))
    }

    /// Builds a clock value from its displayed components.
    pub fn from_components(minutes: u32, seconds: u32, centis: u32) -> Result<Self, ModelError> {
        if seconds >= 60 {
            return Err(ModelError::OutOfRange(format!("seconds field {seconds} >= 60")));
        }
        if centis >= 100 {
            return Err(ModelError::OutOfRange(format!("centis field {centis} >= 100")));
        }
        let total = u64::from(minutes) * 6000 + u64::from(seconds) * 100 + u64::from(centis);
        if total > u64::from(MAX_CENTISECONDS) {
            return Err(ModelError::OutOfRange(format!(
                "{minutes}:{seconds:02}.{centis:02} exceeds 60:00"
            )));
        }
        Ok(ClockTime(total as u32))
    }

    pub fn centiseconds(self) -> u32 {
        self.0
    }

    pub fn minutes(self) -> u32 {
        self.0 / 6000
    }

    pub fn seconds(self) -> u32 {
        (self.0 / 100) % 60
    }

    pub fn centis(self) -> u32 {
        self.0 % 100
    }

    /// Absolute difference in centiseconds.
    pub fn abs_diff(self, other: ClockTime) -> u32 {
        self.0.abs_diff(other.0)
    }
}

/// Scoreboard-style rendering.
///
/// `M:SS` on whole seconds from one minute up, `SS.t` under a minute, and
/// `M:SS.t` otherwise. A second fractional digit is only written when the
/// value carries hundredths, so every value re-parses to itself.
impl fmt::Display for ClockTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (m, s, c) = (self.minutes(), self.seconds(), self.centis());
        let frac = if c % 10 == 0 {
            format!("{}", c / 10)
        } else {
            format!("{c:02}")
        };
        if self.0 < 6000 {
            write!(f, "{s}.{frac}")
        } else if c == 0 {
            write!(f, "{m}:{s:02}")
        } else {
            write!(f, "{m}:{s:02}.{frac}")
        }
    }
}

impl<'de> Deserialize<'de> for ClockTime {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let cs = u32::deserialize(d)?;
        ClockTime::from_centiseconds(cs).map_err(serde::de::Error::custom)
    }
}

/// Game period: 1-4 for regulation, 5 and up for successive overtimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct QuarterLabel(u8);

impl QuarterLabel {
    pub fn new(index: u8) -> Result<Self, ModelError> {
        if index == 0 {
            return Err(ModelError::OutOfRange("quarter index must be >= 1".into()));
        }
        Ok(QuarterLabel(index))
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn is_overtime(self) -> bool {
        self.0 > 4
    }

    /// The label as a scorebug shows it: "1st".."4th", "OT", "2OT", ...
    pub fn scorebug_text(self) -> String {
        match self.0 {
            1 => "1st".into(),
            2 => "2nd".into(),
            3 => "3rd".into(),
            4 => "4th".into(),
            5 => "OT".into(),
            n => format!("{}OT", n - 4),
        }
    }
}

impl fmt::Display for QuarterLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl<'de> Deserialize<'de> for QuarterLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let idx = u8::deserialize(d)?;
        QuarterLabel::new(idx).map_err(serde::de::Error::custom)
    }
}

/// Frame rate as an exact rational (`30000/1001` for NTSC).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fps {
    num: u32,
    den: u32,
}

impl Fps {
    pub const DEFAULT: Fps = Fps { num: 30, den: 1 };

    pub fn new(num: u32, den: u32) -> Result<Self, ModelError> {
        if num == 0 || den == 0 {
            return Err(ModelError::OutOfRange(format!("fps {num}/{den} must be > 0")));
        }
        Ok(Fps { num, den })
    }

    pub fn whole(fps: u32) -> Result<Self, ModelError> {
        Fps::new(fps, 1)
    }

    pub fn num(self) -> u32 {
        self.num
    }

    pub fn den(self) -> u32 {
        self.den
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.num) / f64::from(self.den)
    }

    /// Number of frames spanning `seconds`, rounded to nearest.
    pub fn frames_in(self, seconds: f64) -> u64 {
        (seconds * self.as_f64()).round().max(0.0) as u64
    }
}

impl Default for Fps {
    fn default() -> Self {
        Fps::DEFAULT
    }
}

impl fmt::Display for Fps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Fps {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::Invalid(format!("cannot read fps from {s:?}"));
        match s.trim().split_once('/') {
            Some((n, d)) => Fps::new(n.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?),
            None => Fps::whole(s.trim().parse().map_err(|_| bad())?),
        }
    }
}

// Accepts `30`, `"30"` or `"30000/1001"`; writes a number when whole.
impl Serialize for Fps {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.den == 1 {
            s.serialize_u32(self.num)
        } else {
            s.serialize_str(&self.to_string())
        }
    }
}

impl<'de> Deserialize<'de> for Fps {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(u32),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Int(n) => Fps::whole(n),
            Repr::Text(s) => s.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub frame_count: u64,
    #[serde(default)]
    pub fps: Fps,
}

impl VideoMeta {
    pub fn new(frame_count: u64, fps: Fps) -> Self {
        VideoMeta { frame_count, fps }
    }
}

/// The two semantic text regions on a scorebug.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    TimeRemaining,
    Quarter,
}

impl RegionKind {
    pub const ALL: [RegionKind; 2] = [RegionKind::TimeRemaining, RegionKind::Quarter];
}

/// Axis-aligned box in pixels: top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, ModelError> {
        if ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return Err(ModelError::Invalid("bbox components must be finite".into()));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(ModelError::OutOfRange(format!("bbox size {w}x{h} must be positive")));
        }
        Ok(BBox { x, y, w, h })
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        if ix <= 0.0 || iy <= 0.0 {
            return 0.0;
        }
        let inter = ix * iy;
        inter / (self.area() + other.area() - inter)
    }

    pub fn fits_within(&self, width: f64, height: f64) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.x + self.w <= width && self.y + self.h <= height
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }
}

fn check_unit(name: &str, v: f64) -> Result<(), ModelError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(ModelError::OutOfRange(format!("{name} = {v} not in [0, 1]")));
    }
    Ok(())
}

/// One localized text region reported by the detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub region: RegionKind,
    pub bbox: BBox,
    pub object_prob: f64,
    pub iou_est: f64,
}

impl Detection {
    pub fn new(region: RegionKind, bbox: BBox, object_prob: f64, iou_est: f64) -> Result<Self, ModelError> {
        check_unit("object_prob", object_prob)?;
        check_unit("iou_est", iou_est)?;
        Ok(Detection { region, bbox, object_prob, iou_est })
    }

    /// Like [`Detection::new`], additionally requiring the box inside the frame.
    pub fn within_frame(
        region: RegionKind,
        bbox: BBox,
        object_prob: f64,
        iou_est: f64,
        frame_w: f64,
        frame_h: f64,
    ) -> Result<Self, ModelError> {
        if !bbox.fits_within(frame_w, frame_h) {
            return Err(ModelError::OutOfRange(format!(
                "bbox {:?} outside {frame_w}x{frame_h} frame",
                bbox.to_array()
            )));
        }
        Detection::new(region, bbox, object_prob, iou_est)
    }
}

/// Text recognized inside one region.
#[derive(Debug, Clone, PartialEq)]
pub struct OcrReading {
    pub region: RegionKind,
    pub raw_text: String,
    pub text_conf: f64,
}

impl OcrReading {
    pub fn new(region: RegionKind, raw_text: impl Into<String>, text_conf: f64) -> Result<Self, ModelError> {
        let raw_text = raw_text.into();
        if raw_text.is_empty() {
            return Err(ModelError::Invalid("reading text must be non-empty".into()));
        }
        check_unit("text_conf", text_conf)?;
        Ok(OcrReading { region, raw_text, text_conf })
    }
}

/// The readings kept for one frame after gating: at most one per region.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSample {
    frame_idx: u64,
    readings: Vec<OcrReading>,
}

impl FrameSample {
    pub fn new(frame_idx: u64, readings: Vec<OcrReading>) -> Result<Self, ModelError> {
        for (i, r) in readings.iter().enumerate() {
            if readings[..i].iter().any(|o| o.region == r.region) {
                return Err(ModelError::Invalid(format!(
                    "frame {frame_idx}: more than one {:?} reading",
                    r.region
                )));
            }
        }
        Ok(FrameSample { frame_idx, readings })
    }

    pub fn frame_idx(&self) -> u64 {
        self.frame_idx
    }

    pub fn readings(&self) -> &[OcrReading] {
        &self.readings
    }

    pub fn reading(&self, region: RegionKind) -> Option<&OcrReading> {
        self.readings.iter().find(|r| r.region == region)
    }
}

/// Tunables for a grounding run. Field names double as the config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Sample every `step_interval`-th frame.
    pub step_interval: u64,
    /// Minimum detection score for a region to count.
    pub conf_threshold: f64,
    /// Outlier tolerance, centiseconds.
    pub theta_cs: u32,
    /// Longest anchor gap bridged by interpolation.
    pub max_gap_frames: u64,
    pub workers: usize,
    pub fps: Fps,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            step_interval: 1,
            conf_threshold: 0.5,
            theta_cs: 50,
            max_gap_frames: 900,
            workers: 1,
            fps: Fps::DEFAULT,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.step_interval < 1 {
            return Err(ModelError::OutOfRange("step_interval must be >= 1".into()));
        }
        check_unit("conf_threshold", self.conf_threshold)?;
        if self.workers < 1 {
            return Err(ModelError::OutOfRange("workers must be >= 1".into()));
        }
        if self.fps.num == 0 || self.fps.den == 0 {
            return Err(ModelError::OutOfRange("fps must be > 0".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn components_arithmetic() {
        assert_eq!(ClockTime::from_components(10, 32, 0).unwrap().centiseconds(), 63200);
        assert_eq!(ClockTime::from_components(0, 0, 0).unwrap().centiseconds(), 0);
        assert_eq!(ClockTime::from_components(60, 0, 0).unwrap(), ClockTime::MAX);
    }

    #[test]
    fn components_out_of_range() {
        assert!(matches!(ClockTime::from_components(61, 0, 0), Err(ModelError::OutOfRange(_))));
        assert!(matches!(ClockTime::from_components(60, 0, 1), Err(ModelError::OutOfRange(_))));
        assert!(ClockTime::from_components(1, 60, 0).is_err());
        assert!(ClockTime::from_components(1, 0, 100).is_err());
        assert!(ClockTime::from_centiseconds(360_001).is_err());
    }

    #[test]
    fn display_rules() {
        let f = |cs| ClockTime::from_centiseconds(cs).unwrap().to_string();
        assert_eq!(f(63200), "10:32");
        assert_eq!(f(3250), "32.5");
        assert_eq!(f(0), "0.0");
        assert_eq!(f(500), "5.0");
        assert_eq!(f(6000), "1:00");
        assert_eq!(f(63250), "10:32.5");
        assert_eq!(f(3255), "32.55");
        assert_eq!(f(360_000), "60:00");
    }

    #[test]
    fn quarter_labels() {
        assert!(QuarterLabel::new(0).is_err());
        assert_eq!(QuarterLabel::new(3).unwrap().scorebug_text(), "3rd");
        assert_eq!(QuarterLabel::new(5).unwrap().scorebug_text(), "OT");
        assert_eq!(QuarterLabel::new(6).unwrap().scorebug_text(), "2OT");
        assert!(QuarterLabel::new(6).unwrap().is_overtime());
    }

    #[test]
    fn fps_parsing() {
        assert_eq!("30".parse::<Fps>().unwrap(), Fps::DEFAULT);
        let ntsc: Fps = "30000/1001".parse().unwrap();
        assert_eq!((ntsc.num(), ntsc.den()), (30000, 1001));
        assert!("0".parse::<Fps>().is_err());
        assert!("30/0".parse::<Fps>().is_err());
        assert_eq!(Fps::DEFAULT.frames_in(2.0), 60);
        let v: Fps = serde_json::from_str("\"30000/1001\"").unwrap();
        assert_eq!(v, ntsc);
        assert_eq!(serde_json::to_string(&Fps::DEFAULT).unwrap(), "30");
    }

    #[test]
    fn bbox_iou() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let b = BBox::new(5.0, 0.0, 10.0, 10.0).unwrap();
        assert!((a.iou(&a) - 1.0).abs() < 1e-12);
        assert!((a.iou(&b) - 50.0 / 150.0).abs() < 1e-12);
        assert_eq!(a.iou(&BBox::new(20.0, 20.0, 1.0, 1.0).unwrap()), 0.0);
        assert!(BBox::new(0.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn detection_validation() {
        let bb = BBox::new(10.0, 10.0, 50.0, 20.0).unwrap();
        assert!(Detection::new(RegionKind::Quarter, bb, 1.2, 0.5).is_err());
        assert!(Detection::within_frame(RegionKind::Quarter, bb, 0.9, 0.9, 40.0, 100.0).is_err());
        assert!(Detection::within_frame(RegionKind::Quarter, bb, 0.9, 0.9, 1920.0, 1080.0).is_ok());
    }

    #[test]
    fn frame_sample_rejects_duplicate_regions() {
        let r = OcrReading::new(RegionKind::Quarter, "3rd", 0.9).unwrap();
        assert!(FrameSample::new(4, vec![r.clone(), r.clone()]).is_err());
        let s = FrameSample::new(4, vec![r]).unwrap();
        assert!(s.reading(RegionKind::TimeRemaining).is_none());
        assert!(OcrReading::new(RegionKind::Quarter, "", 0.9).is_err());
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.theta_cs, 50);
        assert_eq!(cfg.max_gap_frames, 900);
        let bad = PipelineConfig { step_interval: 0, ..PipelineConfig::default() };
        assert!(bad.validate().is_err());
        let parsed: PipelineConfig = serde_json::from_str(r#"{"workers": 4, "fps": "30000/1001"}"#).unwrap();
        assert_eq!(parsed.workers, 4);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"wrkers": 4}"#).is_err());
    }
}
