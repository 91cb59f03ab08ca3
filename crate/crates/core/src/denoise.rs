//! Two-stage clean-up of the raw clock readings.
//!
//! Stage one keeps the largest set of readings that are mutually consistent
//! with a game clock: between any two kept readings the clock never runs
//! backwards and never runs faster than wall time by more than `theta`.
//! Stage two fills the frames between kept readings ("anchors") by linear
//! interpolation. Quarter readings are reduced to a single modal label.
//!
//! # Consistency in integer form
//!
//! With `fps = num/den`, wall time advances `100·den/num` centiseconds per
//! frame. For a reading `(n, t)` define the key `U = t·num + n·100·den`. Two
//! readings `a` before `b` are consistent iff `t_b <= t_a` and
//! `U_a - U_b <= theta·num`. A running clock keeps `U` constant; a stopped
//! clock makes it grow.
//!
//! The pairwise relation is not transitive (two drops of almost `theta`
//! chain into one of almost `2·theta`), so the longest chain of consecutively
//! consistent readings is only an upper bound. It is computed first and
//! returned when it is also valid for every pair, which is the usual case;
//! otherwise an exact search over all-pairs-valid chains runs.

use serde::Serialize;
use thiserror::Error;

use crate::model::{ClockTime, Fps, QuarterLabel, VideoMeta};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DenoiseError {
    #[error("raw series has no clock samples")]
    EmptySeries,
    #[error("no quarter readings")]
    NoVotes,
    #[error("quarter readings disagree: mode {mode} holds only {agreement:.3} of votes")]
    LowAgreement { mode: QuarterLabel, agreement: f64 },
    #[error("invalid series: {0}")]
    InvalidSeries(String),
}

/// One parsed time-remaining reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ClockSample {
    pub frame_idx: u64,
    pub time: ClockTime,
}

impl ClockSample {
    pub fn new(frame_idx: u64, time: ClockTime) -> Self {
        ClockSample { frame_idx, time }
    }
}

impl From<(u64, ClockTime)> for ClockSample {
    fn from((frame_idx, time): (u64, ClockTime)) -> Self {
        ClockSample { frame_idx, time }
    }
}

/// Per-frame readings before any clean-up, ordered by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    video: VideoMeta,
    samples: Vec<ClockSample>,
    quarter_votes: Vec<(u64, QuarterLabel)>,
}

impl RawSeries {
    pub fn new(
        video: VideoMeta,
        samples: Vec<ClockSample>,
        quarter_votes: Vec<(u64, QuarterLabel)>,
    ) -> Result<Self, DenoiseError> {
        strictly_increasing(samples.iter().map(|s| s.frame_idx), "samples")?;
        strictly_increasing(quarter_votes.iter().map(|v| v.0), "quarter votes")?;
        let last = samples.last().map(|s| s.frame_idx).into_iter();
        let last_vote = quarter_votes.last().map(|v| v.0).into_iter();
        if let Some(f) = last.chain(last_vote).max().filter(|&f| f >= video.frame_count) {
            return Err(DenoiseError::InvalidSeries(format!(
                "frame {f} beyond frame_count {}",
                video.frame_count
            )));
        }
        Ok(RawSeries { video, samples, quarter_votes })
    }

    pub fn video(&self) -> VideoMeta {
        self.video
    }

    pub fn samples(&self) -> &[ClockSample] {
        &self.samples
    }

    pub fn quarter_votes(&self) -> &[(u64, QuarterLabel)] {
        &self.quarter_votes
    }
}

fn strictly_increasing(frames: impl Iterator<Item = u64>, what: &str) -> Result<(), DenoiseError> {
    let mut prev: Option<u64> = None;
    for f in frames {
        if prev.is_some_and(|p| p >= f) {
            return Err(DenoiseError::InvalidSeries(format!(
                "{what} not strictly increasing at frame {f}"
            )));
        }
        prev = Some(f);
    }
    Ok(())
}

/// Readings kept as temporally consistent, plus the ones thrown out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnchorSet {
    pub retained: Vec<ClockSample>,
    pub rejected: Vec<ClockSample>,
}

impl AnchorSet {
    pub fn rejected_count(&self) -> usize {
        self.rejected.len()
    }
}

/// Fully grounded per-frame timeline for one period video.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestampSeries {
    pub video: VideoMeta,
    /// Indexed by frame; `None` where no reading supports a value.
    pub grounded: Vec<Option<ClockTime>>,
    pub quarter: QuarterLabel,
    pub quarter_agreement: f64,
}

impl TimestampSeries {
    pub fn frame_count(&self) -> u64 {
        self.grounded.len() as u64
    }

    pub fn at(&self, frame_idx: u64) -> Option<ClockTime> {
        self.grounded.get(frame_idx as usize).copied().flatten()
    }

    pub fn grounded_count(&self) -> usize {
        self.grounded.iter().filter(|g| g.is_some()).count()
    }
}

#[derive(Debug, Clone, Copy)]
struct Keyed {
    time: i128,
    key: i128,
}

fn keyed(s: &ClockSample, fps: Fps) -> Keyed {
    let time = i128::from(s.time.centiseconds());
    Keyed {
        time,
        key: time * i128::from(fps.num()) + i128::from(s.frame_idx) * 100 * i128::from(fps.den()),
    }
}

/// True when the clock can go from reading `a` to the later reading `b`.
pub fn envelope_consistent(a: ClockSample, b: ClockSample, fps: Fps, theta_cs: u32) -> bool {
    if b.frame_idx <= a.frame_idx {
        return false;
    }
    let (ka, kb) = (keyed(&a, fps), keyed(&b, fps));
    kb.time <= ka.time && ka.key - kb.key <= i128::from(theta_cs) * i128::from(fps.num())
}

/// Largest subsequence of readings that is consistent pair by pair.
///
/// Among equally large subsets the one with the lexicographically smallest
/// frame indices wins.
pub fn select_consistent_subset(
    raw: &RawSeries,
    fps: Fps,
    theta_cs: u32,
) -> Result<AnchorSet, DenoiseError> {
    let samples = raw.samples();
    if samples.is_empty() {
        return Err(DenoiseError::EmptySeries);
    }
    let keys: Vec<Keyed> = samples.iter().map(|s| keyed(s, fps)).collect();
    let tol = i128::from(theta_cs) * i128::from(fps.num());

    let chain = longest_pairwise_chain(&keys, tol);
    let chain = if all_pairs_valid(&keys, &chain, tol) {
        chain
    } else {
        exact_chain(&keys, tol)
    };

    let mut keep = vec![false; samples.len()];
    for &i in &chain {
        keep[i] = true;
    }
    let (retained, rejected) = samples
        .iter()
        .zip(keep)
        .fold((Vec::new(), Vec::new()), |(mut r, mut x), (s, k)| {
            if k { r.push(*s) } else { x.push(*s) }
            (r, x)
        });
    Ok(AnchorSet { retained, rejected })
}

fn edge(a: &Keyed, b: &Keyed, tol: i128) -> bool {
    b.time <= a.time && a.key - b.key <= tol
}

/// Lexicographically earliest longest chain in which each element is
/// consistent with the next one.
fn longest_pairwise_chain(keys: &[Keyed], tol: i128) -> Vec<usize> {
    let n = keys.len();
    // best[i]: longest chain starting at i; suffix_best[i]: max of best[i..]
    let mut best = vec![1u32; n];
    let mut suffix_best = vec![0u32; n + 1];
    for i in (0..n).rev() {
        let mut b = 1;
        for j in i + 1..n {
            if b > suffix_best[j] {
                break;
            }
            if edge(&keys[i], &keys[j], tol) {
                b = b.max(best[j] + 1);
            }
        }
        best[i] = b;
        suffix_best[i] = suffix_best[i + 1].max(b);
    }

    let mut need = suffix_best[0];
    let mut chain = Vec::with_capacity(need as usize);
    let mut prev: Option<usize> = None;
    let mut start = 0;
    while need > 0 {
        let next = (start..n)
            .find(|&k| best[k] == need && prev.is_none_or(|p| edge(&keys[p], &keys[k], tol)))
            .expect("a continuation of the required length exists");
        chain.push(next);
        prev = Some(next);
        start = next + 1;
        need -= 1;
    }
    chain
}

fn all_pairs_valid(keys: &[Keyed], chain: &[usize], tol: i128) -> bool {
    let mut prefix_max: Option<i128> = None;
    let mut last_time = i128::MAX;
    for &i in chain {
        let k = keys[i];
        if k.time > last_time || prefix_max.is_some_and(|m| m - k.key > tol) {
            return false;
        }
        last_time = k.time;
        prefix_max = Some(prefix_max.map_or(k.key, |m| m.max(k.key)));
    }
    true
}

/// Pareto front of chains starting at one element: for each length kept,
/// the largest achievable minimum key. Lengths ascend, minima strictly descend.
type Front = Vec<(u32, i128)>;

fn front_insert(front: &mut Front, len: u32, min_key: i128) {
    if front.iter().any(|&(l, m)| l >= len && m >= min_key) {
        return;
    }
    front.retain(|&(l, m)| !(l <= len && m <= min_key));
    let pos = front.partition_point(|&(l, _)| l < len);
    front.insert(pos, (len, min_key));
}

/// Best minimum key over chains from this element with at least `len` items.
fn front_query(front: &Front, len: u32) -> Option<i128> {
    front.iter().filter(|&&(l, _)| l >= len).map(|&(_, m)| m).max()
}

/// Exact maximum all-pairs-valid chain.
///
/// A chain starting at `i` and continuing with a valid chain from `j` is
/// valid iff `i -> j` respects time order and `U_i <= min(U over the tail) +
/// tol`. So per start element only (length, minimum key) matters, and the
/// Pareto front over it is exact. A forward pass then picks, step by step,
/// the earliest element that still admits a completion of the needed length.
fn exact_chain(keys: &[Keyed], tol: i128) -> Vec<usize> {
    let n = keys.len();
    let mut fronts: Vec<Front> = vec![Vec::new(); n];
    let mut suffix_len = vec![0u32; n + 1];
    for i in (0..n).rev() {
        let ki = keys[i];
        let mut front: Front = vec![(1, ki.key)];
        for j in i + 1..n {
            // Every later candidate has min key <= U_i and length <= 1 + suffix_len[j].
            if front[0].1 == ki.key && front[0].0 > suffix_len[j] {
                break;
            }
            if keys[j].time > ki.time {
                continue;
            }
            for &(len, min_key) in &fronts[j] {
                if ki.key - min_key <= tol {
                    front_insert(&mut front, len + 1, min_key.min(ki.key));
                }
            }
        }
        suffix_len[i] = suffix_len[i + 1].max(front.last().map_or(1, |&(l, _)| l));
        fronts[i] = front;
    }

    let mut need = suffix_len[0];
    let mut chain = Vec::with_capacity(need as usize);
    let mut prefix_max: Option<i128> = None;
    let mut last_time = i128::MAX;
    let mut start = 0;
    while need > 0 {
        let next = (start..n)
            .find(|&k| {
                keys[k].time <= last_time
                    && front_query(&fronts[k], need)
                        .is_some_and(|m| prefix_max.is_none_or(|pm| pm - m <= tol))
            })
            .expect("a completion of the required length exists");
        chain.push(next);
        last_time = keys[next].time;
        prefix_max = Some(prefix_max.map_or(keys[next].key, |pm| pm.max(keys[next].key)));
        start = next + 1;
        need -= 1;
    }
    chain
}

/// Fill every frame between two anchors at most `max_gap_frames` apart by
/// linear interpolation, rounded to the nearest centisecond (halves up).
/// Frames before the first anchor, after the last one, or inside a longer
/// gap stay `None`.
pub fn interpolate(anchors: &AnchorSet, video: VideoMeta, max_gap_frames: u64) -> Vec<Option<ClockTime>> {
    let mut out = vec![None; video.frame_count as usize];
    let retained = &anchors.retained;
    for a in retained {
        if let Some(slot) = out.get_mut(a.frame_idx as usize) {
            *slot = Some(a.time);
        }
    }
    for pair in retained.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let span = b.frame_idx - a.frame_idx;
        if span > max_gap_frames {
            continue;
        }
        let (ta, tb) = (u64::from(a.time.centiseconds()), u64::from(b.time.centiseconds()));
        for x in a.frame_idx + 1..b.frame_idx.min(video.frame_count) {
            let num = ta * (b.frame_idx - x) + tb * (x - a.frame_idx);
            let cs = (2 * num + span) / (2 * span);
            out[x as usize] = Some(ClockTime::from_centiseconds(cs as u32).expect("between two valid values"));
        }
    }
    out
}

/// Modal quarter over all parsed votes. Ties go to the smaller index.
///
/// Anything short of a strict majority is reported as
/// [`DenoiseError::LowAgreement`], which still carries the mode.
pub fn consolidate_quarter(votes: &[(u64, QuarterLabel)]) -> Result<(QuarterLabel, f64), DenoiseError> {
    if votes.is_empty() {
        return Err(DenoiseError::NoVotes);
    }
    let mut counts = std::collections::BTreeMap::<QuarterLabel, usize>::new();
    for (_, q) in votes {
        *counts.entry(*q).or_default() += 1;
    }
    // BTreeMap iterates ascending, so the first maximum is the smallest label.
    let (mode, count) = counts
        .iter()
        .fold(None::<(QuarterLabel, usize)>, |best, (&q, &c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((q, c)),
        })
        .expect("non-empty");
    let agreement = count as f64 / votes.len() as f64;
    if agreement <= 0.5 {
        return Err(DenoiseError::LowAgreement { mode, agreement });
    }
    Ok((mode, agreement))
}

/// Output of the full clean-up: the timeline and the anchors behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Grounding {
    pub series: TimestampSeries,
    pub anchors: AnchorSet,
    /// Set when the quarter vote was not a strict majority.
    pub low_agreement: bool,
}

/// Outlier rejection, interpolation and quarter consolidation in one call.
pub fn ground_series(
    raw: &RawSeries,
    fps: Fps,
    theta_cs: u32,
    max_gap_frames: u64,
) -> Result<Grounding, DenoiseError> {
    let anchors = select_consistent_subset(raw, fps, theta_cs)?;
    let video = VideoMeta { fps, ..raw.video() };
    let grounded = interpolate(&anchors, video, max_gap_frames);
    let (quarter, quarter_agreement, low_agreement) = match consolidate_quarter(raw.quarter_votes()) {
        Ok((q, a)) => (q, a, false),
        Err(DenoiseError::LowAgreement { mode, agreement }) => (mode, agreement, true),
        Err(e) => return Err(e),
    };
    Ok(Grounding {
        series: TimestampSeries { video, grounded, quarter, quarter_agreement },
        anchors,
        low_agreement,
    })
}
