//! Knowledge-constrained parsing of scoreboard text.
//!
//! Raw OCR strings are accepted only when they fit the clock or period
//! grammar a basketball scorebug can actually display. Common glyph
//! confusions (`O` for `0`, `l` for `1`, ...) are repaired first, and only
//! when the string otherwise has the shape of a clock.

use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use crate::model::{ClockTime, QuarterLabel};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no grammar match for {0:?}")]
    Unparseable(String),
    #[error("{0:?} is out of range")]
    OutOfRange(String),
}

/// Confusable glyphs and the digit each stands for.
pub struct GlyphTable;

impl GlyphTable {
    pub const PAIRS: [(char, char); 7] = [
        ('O', '0'),
        ('o', '0'),
        ('l', '1'),
        ('I', '1'),
        ('B', '8'),
        ('S', '5'),
        ('Z', '2'),
    ];
    pub const TRAILING_STRIP: [char; 2] = ['.', ','];

    pub fn digit_for(c: char) -> Option<char> {
        Self::PAIRS.iter().find(|(g, _)| *g == c).map(|&(_, d)| d)
    }

    /// Glyphs that a given digit is commonly misread as.
    pub fn confusables_of(digit: char) -> impl Iterator<Item = char> {
        Self::PAIRS.iter().filter(move |(_, d)| *d == digit).map(|&(g, _)| g)
    }
}

fn is_clock_char(c: char) -> bool {
    c.is_ascii_digit() || c == ':' || c == '.' || c == ',' || GlyphTable::digit_for(c).is_some()
}

/// Trim, then repair confusable glyphs if the string has the shape of a clock
/// (only digits, confusables and separators). Anything else is returned
/// trimmed but otherwise untouched, so quarter strings like `3rd` survive.
pub fn normalize_glyphs(raw: &str) -> String {
    let s = raw.trim();
    if s.is_empty() || !s.chars().all(is_clock_char) {
        return s.to_string();
    }
    s.trim_end_matches(GlyphTable::TRAILING_STRIP)
        .chars()
        .map(|c| GlyphTable::digit_for(c).unwrap_or(c))
        .collect()
}

static TIME_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:(?P<m>\d{1,2}):(?P<s>\d{2})(?:\.(?P<f>\d{1,2}))?|(?P<bs>\d{1,2})\.(?P<bf>\d{1,2}))$")
        .expect("static regex")
});

fn frac_to_centis(f: &str) -> u32 {
    let v: u32 = f.parse().unwrap_or(0);
    if f.len() == 1 {
        v * 10
    } else {
        v
    }
}

/// Parse a time-remaining reading: `M:SS`, `M:SS.t`, `M:SS.tt`, `SS.t`,
/// `S.t` or `SS.tt`, with one or two minute digits.
pub fn parse_time_remaining(raw: &str) -> Result<ClockTime, ParseError> {
    let norm = normalize_glyphs(raw);
    let caps = TIME_RE
        .captures(&norm)
        .ok_or_else(|| ParseError::Unparseable(raw.to_string()))?;
    let num = |name: &str| caps.name(name).map(|m| m.as_str());
    let (minutes, seconds, centis) = match (num("m"), num("s")) {
        (Some(m), Some(s)) => (
            m.parse::<u32>().unwrap_or(0),
            s.parse::<u32>().unwrap_or(0),
            num("f").map(frac_to_centis).unwrap_or(0),
        ),
        _ => (
            0,
            num("bs").and_then(|s| s.parse().ok()).unwrap_or(0),
            num("bf").map(frac_to_centis).unwrap_or(0),
        ),
    };
    ClockTime::from_components(minutes, seconds, centis)
        .map_err(|_| ParseError::OutOfRange(raw.to_string()))
}

/// Parse a period reading: `1st`..`4th`, `Q1`..`Q4`, `1`..`4`, `OT`, `2OT`,
/// `3OT`. Case-insensitive, one trailing period allowed.
pub fn parse_quarter(raw: &str) -> Result<QuarterLabel, ParseError> {
    let s = raw.trim();
    let s = s.strip_suffix('.').unwrap_or(s).to_ascii_lowercase();
    let index = match s.as_str() {
        "1st" | "q1" | "1" => 1,
        "2nd" | "q2" | "2" => 2,
        "3rd" | "q3" | "3" => 3,
        "4th" | "q4" | "4" => 4,
        "ot" => 5,
        "2ot" => 6,
        "3ot" => 7,
        _ => return Err(ParseError::Unparseable(raw.to_string())),
    };
    Ok(QuarterLabel::new(index).expect("index >= 1"))
}

/// Render a clock value so that [`parse_time_remaining`] reads it back.
pub fn format_clock_time(ct: ClockTime) -> String {
    ct.to_string()
}
