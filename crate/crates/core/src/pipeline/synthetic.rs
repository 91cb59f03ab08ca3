//! Seeded scoreboard simulator.
//!
//! Renders a period clock (running at wall speed, holding during stoppages)
//! into per-frame detections and readings, then corrupts a fraction of the
//! frames the way OCR output is corrupted in practice: the reading is lost,
//! or a glyph is misread. Every frame draws from its own RNG stream, so any
//! frame can be rendered independently and in any order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::PlayByPlayEvent;
use crate::model::{BBox, ClockTime, Detection, Fps, ModelError, OcrReading, QuarterLabel, RegionKind, VideoMeta};
use crate::parser::{format_clock_time, GlyphTable};
use crate::wire::RegionObservation;

pub const FRAME_WIDTH: f64 = 1280.0;
pub const FRAME_HEIGHT: f64 = 720.0;
const TIME_BOX: [f64; 4] = [1040.0, 640.0, 120.0, 44.0];
const QUARTER_BOX: [f64; 4] = [960.0, 640.0, 60.0, 44.0];

/// Per-frame OCR accuracy of the reference pipeline: 91 of 97 frames read perfectly.
pub const DEFAULT_PERFECT_READ_PROB: f64 = 91.0 / 97.0;

fn default_perfect() -> f64 {
    DEFAULT_PERFECT_READ_PROB
}
fn default_half() -> f64 {
    0.5
}
fn default_quarter() -> QuarterLabel {
    QuarterLabel::new(1).expect("1 is a valid quarter")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stoppage {
    pub start_s: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticScenario {
    /// Game-clock length of the period.
    pub period_length_s: f64,
    #[serde(default)]
    pub fps: Fps,
    /// Clock stoppages in video (wall) time.
    #[serde(default)]
    pub stoppages: Vec<Stoppage>,
    #[serde(default = "default_perfect")]
    pub perfect_read_prob: f64,
    /// Relative weight of lost readings among corrupted frames.
    #[serde(default = "default_half")]
    pub dropout_prob: f64,
    /// Relative weight of misread glyphs among corrupted frames.
    #[serde(default = "default_half")]
    pub glyph_confusion_prob: f64,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_quarter")]
    pub quarter: QuarterLabel,
}

impl SyntheticScenario {
    pub fn new(period_length_s: f64, rng_seed: u64) -> Self {
        SyntheticScenario {
            period_length_s,
            fps: Fps::DEFAULT,
            stoppages: Vec::new(),
            perfect_read_prob: DEFAULT_PERFECT_READ_PROB,
            dropout_prob: 0.5,
            glyph_confusion_prob: 0.5,
            rng_seed,
            quarter: default_quarter(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let in_unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ModelError::OutOfRange(format!("{name} = {v} not in [0, 1]")))
            }
        };
        in_unit("perfect_read_prob", self.perfect_read_prob)?;
        in_unit("dropout_prob", self.dropout_prob)?;
        in_unit("glyph_confusion_prob", self.glyph_confusion_prob)?;
        if !(self.period_length_s > 0.0 && self.period_length_s * 100.0 <= f64::from(crate::model::MAX_CENTISECONDS)) {
            return Err(ModelError::OutOfRange(format!(
                "period_length_s = {} must be in (0, 3600]",
                self.period_length_s
            )));
        }
        let wall = self.wall_duration_s();
        let mut prev_end = 0.0;
        for s in &self.stoppages {
            if !(s.start_s >= prev_end && s.duration_s > 0.0 && s.start_s + s.duration_s <= wall) {
                return Err(ModelError::Invalid(format!(
                    "stoppage at {}s for {}s overlaps another or leaves the period",
                    s.start_s, s.duration_s
                )));
            }
            prev_end = s.start_s + s.duration_s;
        }
        Ok(())
    }

    /// Video length: the period plus all stoppage time.
    pub fn wall_duration_s(&self) -> f64 {
        self.period_length_s + self.stoppages.iter().map(|s| s.duration_s).sum::<f64>()
    }

    pub fn frame_count(&self) -> u64 {
        self.fps.frames_in(self.wall_duration_s())
    }

    pub fn video(&self) -> VideoMeta {
        VideoMeta::new(self.frame_count(), self.fps)
    }

    /// Displayed clock at a frame.
    pub fn clock_at(&self, frame_idx: u64) -> ClockTime {
        let wall = frame_idx as f64 * f64::from(self.fps.den()) / f64::from(self.fps.num());
        let stopped: f64 = self
            .stoppages
            .iter()
            .map(|s| (wall.min(s.start_s + s.duration_s) - s.start_s).max(0.0))
            .sum();
        let remaining_cs = ((self.period_length_s - (wall - stopped)) * 100.0).round().max(0.0);
        ClockTime::from_centiseconds(remaining_cs as u32).expect("bounded by validated period length")
    }

    fn corruption_split(&self) -> f64 {
        let total = self.dropout_prob + self.glyph_confusion_prob;
        if total > 0.0 {
            self.dropout_prob / total
        } else {
            0.5
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    Dropout,
    GlyphConfusion,
    DigitSwap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthFrame {
    pub frame_idx: u64,
    pub time: ClockTime,
    pub corruption: Option<(RegionKind, Corruption)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFrame {
    pub truth: TruthFrame,
    pub observations: Vec<RegionObservation>,
}

/// Ground truth plus the full per-frame stream for a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRun {
    pub video: VideoMeta,
    pub frames: Vec<SyntheticFrame>,
}

impl SyntheticRun {
    pub fn truth(&self) -> impl Iterator<Item = &TruthFrame> {
        self.frames.iter().map(|f| &f.truth)
    }

    pub fn corrupted_fraction(&self) -> f64 {
        if self.frames.is_empty() {
            return 0.0;
        }
        self.truth().filter(|t| t.corruption.is_some()).count() as f64 / self.frames.len() as f64
    }
}

pub fn generate_synthetic(scenario: &SyntheticScenario) -> SyntheticRun {
    SyntheticRun {
        video: scenario.video(),
        frames: (0..scenario.frame_count()).map(|n| render_frame(scenario, n)).collect(),
    }
}

fn frame_rng(seed: u64, frame_idx: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame_idx);
    rng
}

fn jittered_box(rng: &mut ChaCha8Rng, b: [f64; 4]) -> BBox {
    let mut j = || rng.random_range(-0.5..=0.5);
    BBox::new(b[0] + j(), b[1] + j(), b[2], b[3]).expect("positive template size")
}

/// Render one frame: detections for both regions and their (possibly
/// corrupted) readings.
pub fn render_frame(scenario: &SyntheticScenario, frame_idx: u64) -> SyntheticFrame {
    let mut rng = frame_rng(scenario.rng_seed, frame_idx);
    let time = scenario.clock_at(frame_idx);

    let mut texts = [format_clock_time(time), scenario.quarter.scorebug_text()];
    let mut dropped = [false, false];
    let corruption = if rng.random::<f64>() >= scenario.perfect_read_prob {
        let slot = usize::from(rng.random_bool(0.5));
        let kind = RegionKind::ALL[slot];
        let how = if rng.random::<f64>() < scenario.corruption_split() {
            dropped[slot] = true;
            Corruption::Dropout
        } else {
            misread(&mut rng, &mut texts[slot])
        };
        Some((kind, how))
    } else {
        None
    };

    let templates = [TIME_BOX, QUARTER_BOX];
    let observations = RegionKind::ALL
        .iter()
        .enumerate()
        .map(|(slot, &kind)| {
            let bbox = jittered_box(&mut rng, templates[slot]);
            let object_prob = rng.random_range(0.85..=1.0);
            let iou_est = rng.random_range(0.9..=1.0);
            let text_conf = rng.random_range(0.8..=1.0);
            let detection = Detection::within_frame(kind, bbox, object_prob, iou_est, FRAME_WIDTH, FRAME_HEIGHT)
                .expect("template boxes sit inside the frame");
            let reading = (!dropped[slot])
                .then(|| OcrReading::new(kind, texts[slot].clone(), text_conf).expect("rendered text is non-empty"));
            RegionObservation { detection, reading }
        })
        .collect();

    SyntheticFrame { truth: TruthFrame { frame_idx, time, corruption }, observations }
}

/// Misread one character: swap a digit for a look-alike glyph, or for a
/// different digit when the coin says so or no look-alike exists.
fn misread(rng: &mut ChaCha8Rng, text: &mut String) -> Corruption {
    let chars: Vec<char> = text.chars().collect();
    let digit_positions: Vec<usize> = (0..chars.len()).filter(|&i| chars[i].is_ascii_digit()).collect();
    let confusable: Vec<usize> = digit_positions
        .iter()
        .copied()
        .filter(|&i| GlyphTable::confusables_of(chars[i]).next().is_some())
        .collect();

    let mut out = chars.clone();
    let kind = if !confusable.is_empty() && rng.random_bool(0.5) {
        let pos = confusable[rng.random_range(0..confusable.len())];
        let options: Vec<char> = GlyphTable::confusables_of(chars[pos]).collect();
        out[pos] = options[rng.random_range(0..options.len())];
        Corruption::GlyphConfusion
    } else if !digit_positions.is_empty() {
        let pos = digit_positions[rng.random_range(0..digit_positions.len())];
        let old = chars[pos].to_digit(10).expect("ascii digit");
        let new = (old + rng.random_range(1..10)) % 10;
        out[pos] = char::from_digit(new, 10).expect("single digit");
        Corruption::DigitSwap
    } else {
        // No digits at all (e.g. "OT"): garble the first character.
        out[0] = char::from_digit(rng.random_range(0..10), 10).expect("single digit");
        Corruption::DigitSwap
    };
    *text = out.into_iter().collect();
    kind
}

const EVENT_LABELS: [&str; 6] = ["Jump shot", "Layup", "Defensive rebound", "Turnover", "Personal foul", "Free throw"];

/// Play-by-play events drawn from the interior of a synthetic run, stamped
/// the way a scorer logs them: whole seconds above a minute, tenths below.
pub fn synthetic_events(scenario: &SyntheticScenario, count: usize, seed: u64) -> Vec<PlayByPlayEvent> {
    let frames = scenario.frame_count();
    let (lo, hi) = (frames / 20, frames - frames / 20);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let frame = if hi > lo { rng.random_range(lo..hi) } else { lo };
            let cs = scenario.clock_at(frame).centiseconds();
            let logged = if cs >= 6000 { cs - cs % 100 } else { cs - cs % 10 };
            PlayByPlayEvent {
                event_id: format!("e{i:04}"),
                period: scenario.quarter,
                clock: ClockTime::from_centiseconds(logged).expect("truncation stays in range"),
                label: EVENT_LABELS[rng.random_range(0..EVENT_LABELS.len())].to_string(),
            }
        })
        .collect()
}
